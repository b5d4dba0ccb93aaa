//! Curve-free Bayesian decision-theoretic dose finding (CFBD) for one- and
//! two-agent phase I trials, with optional effective-sample-size
//! calibration (c-CFBD).
//!
//! - [`stats`]: Beta CDF/tail, log-gamma and keyed random streams.
//! - [`dose_model`]: Beta hyperparameter grids, extrapolating updates and
//!   calibration.
//! - [`decision`]: expected utility, dose selection, stopping rules and
//!   MTD estimation.
//! - [`engine`]: the cohort-by-cohort trial state machine.
//! - [`simulator`]: benchmark scenarios and Monte Carlo operating
//!   characteristics.
//! - [`report`]: CSV/JSON tables of simulation results.

pub mod decision;
pub mod dose_model;
pub mod engine;
pub mod error;
pub mod report;
pub mod simulator;
pub mod stats;

pub use decision::{DesignConfig, Escalation, StopReason, StopStatus};
pub use dose_model::{CohortOutcome, Dose, DoseGrid1, DoseGrid2, Grid};
pub use engine::{TrialEvent, TrialState};
pub use error::{Error, Result};
pub use simulator::{OperatingCharacteristics, Scenario};
pub use stats::{BetaParams, RngStream};

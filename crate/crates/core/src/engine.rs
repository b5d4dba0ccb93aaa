//! Sequential trial conduct: one state value advanced cohort by cohort.
//!
//! Every mutation appends [`TrialEvent`]s, and [`TrialState::replay`]
//! rebuilds a state from its starting point plus the `updated` events.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decision::{self, DesignConfig, StopReason, StopStatus};
use crate::dose_model::{Cell, CohortOutcome, Dose, Grid};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Patients actually treated and DLTs actually observed at one dose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoseTally {
    pub n: u32,
    pub t: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    /// Next cohort's dose chosen.
    Assigned {
        dose: Dose,
        mtd_estimate: Option<Dose>,
    },
    /// Cohort outcome folded into the grid.
    Updated {
        outcome: CohortOutcome,
        n_total: u32,
        ess: Vec<f64>,
    },
    /// Effective sample sizes equalized.
    Calibrated {
        target_ess: f64,
        ess_before: Vec<f64>,
        ess_after: Vec<f64>,
    },
    Stopped {
        reason: StopReason,
        mtd_estimate: Option<Dose>,
    },
    Recommended { dose: Option<Dose> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub seq: u64,
    /// Zero-based cohort the event belongs to.
    pub cohort: u32,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Versioned, self-contained snapshot of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub schema_version: u32,
    pub config: DesignConfig,
    pub initial_grid: Grid,
    pub grid: Grid,
    /// Row-major per-dose counts of treated patients.
    pub tallies: Vec<DoseTally>,
    pub current: Dose,
    /// Doses that have received at least one cohort.
    pub tried: BTreeSet<Dose>,
    pub n_total: u32,
    pub cohorts: Vec<CohortOutcome>,
    pub events: Vec<TrialEvent>,
    pub stop: StopStatus,
    pub mtd_estimate: Option<Dose>,
    pub recommendation: Option<Dose>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    record_events: bool,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

impl TrialState {
    /// Opens a trial at the lowest dose. With calibration on, the initial
    /// prior is equalized before the first decision.
    pub fn start(config: DesignConfig, initial_grid: Grid) -> Result<Self> {
        config.validate()?;
        let start = initial_grid.lowest_dose();
        let grid = if config.calibrate {
            initial_grid.calibrate_with_target().0
        } else {
            initial_grid.clone()
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tallies: vec![DoseTally::default(); grid.dose_count()],
            config,
            initial_grid,
            grid,
            current: start,
            tried: BTreeSet::new(),
            n_total: 0,
            cohorts: Vec::new(),
            events: Vec::new(),
            stop: StopStatus::RUNNING,
            mtd_estimate: None,
            recommendation: None,
            record_events: true,
        })
    }

    /// Skip the event log; used by the simulator where nobody reads it.
    pub fn without_events(mut self) -> Self {
        self.record_events = false;
        self
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.is_stopped()
    }

    /// Patients the next cohort must contain (the last one is truncated
    /// so the trial never exceeds `n_max`).
    pub fn next_cohort_size(&self) -> u32 {
        self.config
            .cohort_size
            .min(self.config.n_max.saturating_sub(self.n_total))
    }

    fn push(&mut self, body: EventBody) {
        if self.record_events {
            self.events.push(TrialEvent {
                seq: self.events.len() as u64,
                cohort: self.cohorts.len().saturating_sub(1) as u32,
                body,
            });
        }
    }

    /// Folds one cohort into the trial and decides what happens next.
    pub fn report_cohort(&mut self, outcome: CohortOutcome) -> Result<()> {
        if self.is_stopped() {
            return Err(Error::State("trial has already stopped".into()));
        }
        if outcome.dose != self.current {
            return Err(Error::Protocol(format!(
                "cohort treated at dose {} but dose {} was assigned",
                outcome.dose.label(),
                self.current.label()
            )));
        }
        let expected = self.next_cohort_size();
        if outcome.n != expected {
            return Err(Error::Protocol(format!(
                "cohort has {} patients, expected {expected}",
                outcome.n
            )));
        }
        let idx = self
            .grid
            .flat_index(outcome.dose)
            .ok_or_else(|| Error::Protocol("dose outside grid".into()))?;

        let updated = self.grid.update(&outcome)?;
        self.tallies[idx].n += outcome.n;
        self.tallies[idx].t += outcome.t;
        self.n_total += outcome.n;
        self.tried.insert(outcome.dose);
        self.cohorts.push(outcome);
        let ess = updated.ess();
        self.grid = updated;
        self.push(EventBody::Updated {
            outcome,
            n_total: self.n_total,
            ess: ess.clone(),
        });

        if self.config.calibrate {
            let (calibrated, target) = self.grid.calibrate_with_target();
            self.grid = calibrated;
            let ess_after = self.grid.ess();
            self.push(EventBody::Calibrated {
                target_ess: target,
                ess_before: ess,
                ess_after,
            });
        }

        self.decide();
        Ok(())
    }

    fn decide(&mut self) {
        let cfg = &self.config;
        let (mtd, stop, next) = match &self.grid {
            Grid::One(g) => {
                let u = decision::utilities1(g, cfg);
                let mtd = decision::mtd1_from(g, &u, cfg);
                let stop = decision::check_stop1(g, self.n_total, mtd, cfg);
                let highest = self.tried.iter().filter_map(single).max();
                let next = decision::pick1(&u, decision::admissible1(g.len(), highest, cfg.escalation));
                (mtd.map(Dose::Single), stop, Dose::Single(next))
            }
            Grid::Two(g) => {
                let u = decision::utilities2(g, cfg);
                let mtd = decision::mtd2_from(g, &u, cfg);
                let stop = decision::check_stop2(g, self.n_total, mtd, cfg);
                let tried: BTreeSet<Cell> = self.tried.iter().filter_map(combo).collect();
                let admissible = decision::admissible2(g.rows(), g.cols(), &tried, cfg.escalation);
                let next = decision::pick2(&u, g.cols(), admissible);
                (mtd.map(Dose::from), stop, Dose::from(next))
            }
        };
        self.mtd_estimate = mtd;
        if stop.is_stopped() {
            self.stop = stop;
            self.push(EventBody::Stopped {
                reason: stop.reason(),
                mtd_estimate: mtd,
            });
            let rec = self.final_recommendation();
            self.recommendation = rec;
            self.push(EventBody::Recommended { dose: rec });
        } else {
            self.current = next;
            self.push(EventBody::Assigned {
                dose: next,
                mtd_estimate: mtd,
            });
        }
    }

    fn final_recommendation(&self) -> Option<Dose> {
        match self.stop.reason() {
            StopReason::AllToxic => None,
            _ => self.mtd_estimate,
        }
    }

    /// Recommended dose of a stopped trial (`None` when no dose is safe).
    pub fn finalize(&self) -> Result<Option<Dose>> {
        if !self.is_stopped() {
            return Err(Error::State("trial is still running".into()));
        }
        Ok(self.final_recommendation())
    }

    /// Rebuilds a trial from its configuration, prior and event log, and
    /// checks the rebuilt log matches the one given.
    pub fn replay(config: DesignConfig, initial_grid: Grid, events: &[TrialEvent]) -> Result<Self> {
        let mut state = Self::start(config, initial_grid)?;
        for ev in events {
            if let EventBody::Updated { outcome, .. } = &ev.body {
                state.report_cohort(*outcome)?;
            }
        }
        if state.events != events {
            return Err(Error::State("event log does not replay to itself".into()));
        }
        Ok(state)
    }

    /// Actual per-dose counts paired with the dose each belongs to.
    pub fn dose_tallies(&self) -> Vec<(Dose, DoseTally)> {
        let (_, cols) = self.grid.shape();
        self.tallies
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let dose = match self.grid {
                    Grid::One(_) => Dose::Single(k),
                    Grid::Two(_) => Dose::Combo(k / cols, k % cols),
                };
                (dose, *t)
            })
            .collect()
    }
}

fn single(d: &Dose) -> Option<usize> {
    match *d {
        Dose::Single(j) => Some(j),
        Dose::Combo(..) => None,
    }
}

fn combo(d: &Dose) -> Option<Cell> {
    match *d {
        Dose::Combo(i, j) => Some((i, j)),
        Dose::Single(_) => None,
    }
}

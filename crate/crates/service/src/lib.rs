//! HTTP service and shared plumbing for the `cfbd` command-line tool.
//!
//! Trials live as one JSON document each under `<data_dir>/trials/`;
//! every mutation bumps a revision number that the client must echo back.
//! Simulation jobs run in-process and are cached by request.

pub mod api;
pub mod error;
pub mod jobs;
pub mod request;
pub mod round;
pub mod store;

pub use api::{router, AppState};
pub use error::ApiError;

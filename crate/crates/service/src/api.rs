//! HTTP routes.

use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cfbd::engine::EventBody;
use cfbd::simulator::builtin_scenarios;
use cfbd::{CohortOutcome, Dose, StopStatus, TrialState};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::jobs::JobRunner;
use crate::request::{parse_json, NewTrial, SimulationRequest};
use crate::round::round_value;
use crate::store::{state_hash, TrialRecord, TrialStore};

#[derive(Clone)]
pub struct AppState {
    pub trials: Arc<TrialStore>,
    pub jobs: Arc<JobRunner>,
}

impl AppState {
    pub fn new(data_dir: &Path, workers: usize) -> std::io::Result<Self> {
        Ok(Self {
            trials: Arc::new(TrialStore::open(data_dir)?),
            jobs: Arc::new(JobRunner::new(workers)?),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/scenarios", get(list_scenarios))
        .route("/trials", post(create_trial))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/events", get(get_events))
        .route("/trials/{id}/cohorts", post(post_cohort))
        .route("/simulations", post(create_simulation))
        .route("/simulations/{id}", get(get_simulation))
        .with_state(state)
}

/// Serializes with every float rounded to 12 significant digits.
fn rounded<T: Serialize>(status: StatusCode, body: &T) -> Result<Response, ApiError> {
    let mut v = serde_json::to_value(body).map_err(|e| ApiError::internal(e.to_string()))?;
    round_value(&mut v);
    Ok((status, Json(v)).into_response())
}

/// ESS per dose around the most recent cohort.
#[derive(Debug, Serialize)]
pub struct CalibrationSnapshot {
    pub cohort: u32,
    pub applied: bool,
    pub target_ess: Option<f64>,
    pub ess_before: Vec<f64>,
    pub ess_after: Vec<f64>,
}

fn calibration_snapshot(state: &TrialState) -> Option<CalibrationSnapshot> {
    let mut snap = None;
    for ev in &state.events {
        match &ev.body {
            EventBody::Updated { ess, .. } => {
                snap = Some(CalibrationSnapshot {
                    cohort: ev.cohort,
                    applied: false,
                    target_ess: None,
                    ess_before: ess.clone(),
                    ess_after: ess.clone(),
                });
            }
            EventBody::Calibrated {
                target_ess,
                ess_before,
                ess_after,
            } => {
                snap = Some(CalibrationSnapshot {
                    cohort: ev.cohort,
                    applied: true,
                    target_ess: Some(*target_ess),
                    ess_before: ess_before.clone(),
                    ess_after: ess_after.clone(),
                });
            }
            _ => {}
        }
    }
    snap
}

#[derive(Debug, Serialize)]
pub struct TrialView<'a> {
    pub id: &'a str,
    pub revision: u64,
    pub schema_version: u32,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub updated_at: chrono::DateTime<chrono::Utc>,
    pub design: &'static str,
    /// Dose for the next cohort; absent once the trial has stopped.
    pub next_dose: Option<Dose>,
    pub next_cohort_size: u32,
    pub n_total: u32,
    pub stop: StopStatus,
    pub mtd_estimate: Option<Dose>,
    pub recommendation: Option<Dose>,
    pub calibration: Option<CalibrationSnapshot>,
    pub state_hash: String,
    pub state: &'a TrialState,
}

impl<'a> TrialView<'a> {
    pub fn of(r: &'a TrialRecord) -> Self {
        let s = &r.state;
        let running = !s.is_stopped();
        Self {
            id: &r.id,
            revision: r.revision,
            schema_version: r.schema_version,
            created_at: r.created_at,
            updated_at: r.updated_at,
            design: s.config.design_name(),
            next_dose: running.then_some(s.current),
            next_cohort_size: if running { s.next_cohort_size() } else { 0 },
            n_total: s.n_total,
            stop: s.stop,
            mtd_estimate: s.mtd_estimate,
            recommendation: s.recommendation,
            calibration: calibration_snapshot(s),
            state_hash: state_hash(s),
            state: s,
        }
    }
}

async fn list_scenarios() -> Result<Response, ApiError> {
    rounded(StatusCode::OK, &builtin_scenarios())
}

async fn create_trial(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: NewTrial = if body.iter().all(u8::is_ascii_whitespace) {
        NewTrial::default()
    } else {
        parse_json(&body)?
    };
    let (cfg, grid) = req.resolve()?;
    let state = TrialState::start(cfg, grid)?;
    let record = app.trials.create(state).await?;
    tracing::info!(id = %record.id, "trial created");
    rounded(StatusCode::CREATED, &TrialView::of(&record))
}

async fn get_trial(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = app.trials.get(&id).await?;
    rounded(StatusCode::OK, &TrialView::of(&record))
}

async fn get_events(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = app.trials.get(&id).await?;
    // full precision so a client can replay them exactly
    Ok(Json(&record.state.events).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortBody {
    dose: Dose,
    /// Defaults to the size the trial expects next.
    n: Option<u32>,
    t: u32,
    revision: u64,
}

async fn post_cohort(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: CohortBody = parse_json(&body)?;
    let record = app
        .trials
        .update(&id, req.revision, |state| {
            let n = req.n.unwrap_or_else(|| state.next_cohort_size());
            let outcome = CohortOutcome::new(req.dose, n, req.t)?;
            state.report_cohort(outcome)?;
            Ok(())
        })
        .await?;
    tracing::info!(id = %record.id, revision = record.revision, "cohort recorded");
    rounded(StatusCode::OK, &TrialView::of(&record))
}

async fn create_simulation(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: SimulationRequest = parse_json(&body)?;
    let sim = req.resolve()?;
    let job = app.jobs.submit(sim);
    rounded(StatusCode::ACCEPTED, &job)
}

async fn get_simulation(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    rounded(StatusCode::OK, &app.jobs.get(&id)?)
}

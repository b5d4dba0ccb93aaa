//! In-process simulation jobs on a bounded worker pool.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use cfbd::simulator::{band_group, run_replicates_with, BandTable, Execution};
use cfbd::{DesignConfig, OperatingCharacteristics, Scenario};
use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::error::ApiError;
use crate::request::ResolvedSimulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimJob {
    pub id: String,
    pub status: JobStatus,
    pub scenario: Scenario,
    pub config: DesignConfig,
    pub reps: u64,
    pub seed: u64,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub error: Option<String>,
    pub result: Option<OperatingCharacteristics>,
    /// Two-agent results grouped by distance from target.
    pub bands: Option<BandTable>,
}

pub struct JobRunner {
    jobs: Mutex<HashMap<String, SimJob>>,
    by_hash: Mutex<HashMap<String, String>>,
    pool: Arc<rayon::ThreadPool>,
    permits: Arc<Semaphore>,
}

fn request_hash(sim: &ResolvedSimulation) -> String {
    let bytes = serde_json::to_vec(sim).expect("simulation request serializes");
    hex::encode(Sha256::digest(bytes))
}

impl JobRunner {
    pub fn new(workers: usize) -> std::io::Result<Self> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("sim-{i}"))
            .build()
            .map_err(std::io::Error::other)?;
        Ok(Self {
            jobs: Mutex::new(HashMap::new()),
            by_hash: Mutex::new(HashMap::new()),
            pool: Arc::new(pool),
            permits: Arc::new(Semaphore::new(workers)),
        })
    }

    pub fn get(&self, id: &str) -> Result<SimJob, ApiError> {
        self.jobs
            .lock()
            .expect("job table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("simulation", id))
    }

    fn set(&self, id: &str, f: impl FnOnce(&mut SimJob)) {
        if let Some(job) = self.jobs.lock().expect("job table poisoned").get_mut(id) {
            f(job);
        }
    }

    /// Queues a simulation, or returns the existing job for an identical
    /// request unless that one failed.
    pub fn submit(self: &Arc<Self>, sim: ResolvedSimulation) -> SimJob {
        let hash = request_hash(&sim);
        let job = {
            let mut by_hash = self.by_hash.lock().expect("hash table poisoned");
            let mut jobs = self.jobs.lock().expect("job table poisoned");
            if let Some(existing) = by_hash.get(&hash).and_then(|id| jobs.get(id)) {
                if existing.status != JobStatus::Failed {
                    return existing.clone();
                }
            }
            let job = SimJob {
                id: uuid::Uuid::new_v4().to_string(),
                status: JobStatus::Queued,
                scenario: sim.scenario.clone(),
                config: sim.config.clone(),
                reps: sim.reps,
                seed: sim.seed,
                created_at: Utc::now(),
                finished_at: None,
                error: None,
                result: None,
                bands: None,
            };
            by_hash.insert(hash, job.id.clone());
            jobs.insert(job.id.clone(), job.clone());
            job
        };

        let runner = Arc::clone(self);
        let id = job.id.clone();
        tokio::spawn(async move {
            let _permit = runner.permits.clone().acquire_owned().await.expect("semaphore closed");
            runner.set(&id, |j| j.status = JobStatus::Running);
            let pool = Arc::clone(&runner.pool);
            let outcome = tokio::task::spawn_blocking(move || {
                pool.install(|| {
                    let oc = run_replicates_with(&sim.scenario, &sim.config, &sim.grid, sim.reps, sim.seed, Execution::Parallel)?;
                    let bands = (oc.agents == 2).then(|| band_group(&oc, &sim.scenario)).transpose()?;
                    Ok::<_, cfbd::Error>((oc, bands))
                })
            })
            .await;
            runner.set(&id, |j| {
                j.finished_at = Some(Utc::now());
                match outcome {
                    Ok(Ok((oc, bands))) => {
                        j.status = JobStatus::Done;
                        j.result = Some(oc);
                        j.bands = bands;
                    }
                    Ok(Err(e)) => {
                        j.status = JobStatus::Failed;
                        j.error = Some(e.to_string());
                    }
                    Err(e) => {
                        j.status = JobStatus::Failed;
                        j.error = Some(format!("worker panicked: {e}"));
                    }
                }
            });
        });
        job
    }
}

//! One JSON document per trial under `<data_dir>/trials/`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use cfbd::TrialState;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    /// Bumped by every successful mutation.
    pub revision: u64,
    pub schema_version: u32,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub state: TrialState,
}

/// SHA-256 of the state's canonical JSON, full precision.
pub fn state_hash(state: &TrialState) -> String {
    let bytes = serde_json::to_vec(state).expect("trial state serializes");
    hex::encode(Sha256::digest(bytes))
}

pub struct TrialStore {
    dir: PathBuf,
    // one writer at a time per trial
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl TrialStore {
    pub fn open(data_dir: &Path) -> std::io::Result<Self> {
        let dir = data_dir.join("trials");
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    async fn write(&self, record: &TrialRecord) -> Result<(), ApiError> {
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = self.dir.join(format!(".{}.tmp", record.id));
        tokio::fs::write(&tmp, bytes)
            .await
            .map_err(|e| ApiError::internal(format!("writing trial: {e}")))?;
        tokio::fs::rename(&tmp, self.path(&record.id))
            .await
            .map_err(|e| ApiError::internal(format!("writing trial: {e}")))
    }

    pub async fn create(&self, state: TrialState) -> Result<TrialRecord, ApiError> {
        let now = Utc::now();
        let record = TrialRecord {
            id: uuid::Uuid::new_v4().to_string(),
            revision: 0,
            schema_version: state.schema_version,
            created_at: now,
            updated_at: now,
            state,
        };
        self.write(&record).await?;
        Ok(record)
    }

    pub async fn get(&self, id: &str) -> Result<TrialRecord, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found("trial", id));
        }
        let bytes = match tokio::fs::read(self.path(id)).await {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ApiError::not_found("trial", id)),
            Err(e) => return Err(ApiError::internal(format!("reading trial: {e}"))),
        };
        serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(format!("corrupt trial document {id}: {e}")))
    }

    /// Applies `f` to the trial if its revision is still `expected`.
    /// Nothing is written when `f` fails.
    pub async fn update<F>(&self, id: &str, expected: u64, f: F) -> Result<TrialRecord, ApiError>
    where
        F: FnOnce(&mut TrialState) -> Result<(), ApiError>,
    {
        let lock = self.lock_for(id);
        let _guard = lock.lock().await;
        let mut record = self.get(id).await?;
        if record.state.is_stopped() {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "trial_stopped",
                format!("trial {id} has already stopped"),
            ));
        }
        if record.revision != expected {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "revision_conflict",
                format!("trial is at revision {}, request expected {expected}", record.revision),
            )
            .with_field("revision"));
        }
        f(&mut record.state)?;
        record.revision += 1;
        record.updated_at = Utc::now();
        self.write(&record).await?;
        Ok(record)
    }
}

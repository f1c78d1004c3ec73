//! Dataset generation jobs run on a bounded pool.

use std::path::PathBuf;
use std::sync::Arc;

use docent_core::pipeline::{run_batch, BatchConfig, BatchSummary, RetryPolicy};
use serde::{Deserialize, Serialize};

use crate::state::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    /// Queued, then Running, then Done or Failed.
    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running) | (JobStatus::Running, JobStatus::Done | JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobParams {
    pub n: usize,
    pub seed: u64,
    pub backend: String,
    pub workers: usize,
    pub fill_to_n: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetJob {
    pub job_id: String,
    pub params: JobParams,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<BatchSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn advance(state: &AppState, id: &str, next: JobStatus, finish: impl FnOnce(&mut DatasetJob)) {
    let mut jobs = state.jobs.lock().expect("job map lock");
    let job = jobs.get_mut(id).expect("job registered before it runs");
    assert!(job.status.can_become(next), "job {id}: {:?} -> {next:?}", job.status);
    job.status = next;
    finish(job);
}

/// Waits for a pool slot, then runs the batch on a blocking thread.
pub async fn run_job(state: Arc<AppState>, id: String, params: JobParams) {
    let _permit = state.job_pool.clone().acquire_owned().await.expect("job pool is never closed");
    advance(&state, &id, JobStatus::Running, |_| {});
    let output = state.config.artifacts_dir.join("jobs").join(format!("{id}.jsonl"));
    let mut config = BatchConfig::new(params.n, params.seed);
    config.workers = params.workers;
    config.fill_to_n = params.fill_to_n;
    config.retry = RetryPolicy::default();
    let worker_state = state.clone();
    let out = output.clone();
    let result = tokio::task::spawn_blocking(move || {
        run_batch(&config, &worker_state.inputs, worker_state.dataset_backend.as_ref(), &out)
    })
    .await;
    match result {
        Ok(Ok(summary)) => {
            tracing::info!(job = %id, valid = summary.valid, attempted = summary.attempted, "dataset job done");
            advance(&state, &id, JobStatus::Done, |job| {
                job.summary = Some(summary);
                job.output = Some(output);
            });
        }
        Ok(Err(err)) => {
            tracing::warn!(job = %id, error = %err, "dataset job failed");
            advance(&state, &id, JobStatus::Failed, |job| job.error = Some(err.to_string()));
        }
        Err(join) => advance(&state, &id, JobStatus::Failed, |job| job.error = Some(join.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::JobStatus::*;

    #[test]
    fn status_only_moves_forward() {
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> =
            all.iter().flat_map(|a| all.iter().map(move |b| (*a, *b))).filter(|(a, b)| a.can_become(*b)).collect();
        assert_eq!(allowed, vec![(Queued, Running), (Running, Done), (Running, Failed)]);
    }
}

//! Experiment harness around `noma-core`: scenario files, the snapshot gap
//! study (USPA against the exhaustive grid oracle), the long-run scheduling
//! study (USPA, oracle and OMA inside the dual scheduler), CSV output and
//! run manifests.

pub mod config;
pub mod gap;
pub mod output;
pub mod schedule_study;

use thiserror::Error;

pub use config::{AllocatorKind, ConfigError, ScenarioConfig, ScenarioFile};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "NOMA_SCHED_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Core(#[from] noma_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Builds the worker pool, honouring [`THREADS_ENV`] when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| HarnessError::Pool(format!("{THREADS_ENV}={v} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Median of a sample, 0 when empty.
pub(crate) fn median_u64(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    v[v.len() / 2]
}

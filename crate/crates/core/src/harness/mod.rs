//! Experiment orchestration: δ- and p-sweeps, rate fits, lemma audits and
//! report emission.

pub mod audit;
pub mod config;
pub mod fit;
pub mod report;
pub mod single;
pub mod sweep;

use thiserror::Error;

pub use audit::{audit_probabilistic_lemmas, audit_shipped_families, AuditReport};
pub use config::{ConfigError, ExperimentConfig, SCHEMA_VERSION};
pub use fit::{fit_rate, FitError, FitWindow, RateFit, RateModel};
pub use report::{write_csv, write_json, SweepReport};
pub use single::{price_report, solve_report, PriceReport, SolveReport};
pub use sweep::{sweep_delta, sweep_p};

use crate::entropic::SolverError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("audits need at least 100 trials, got {0}")]
    Trials(usize),
    #[error("thread pool: {0}")]
    Threads(String),
}

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "STABLAB_THREADS";

/// Worker pool sized by `STABLAB_THREADS`, or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Threads(e.to_string()))
}

/// Configurations shipped with the crate, keyed by file name.
pub const SHIPPED_CONFIGS: &[(&str, &str)] = &[
    (
        "binomial_sine.json",
        include_str!("../../../../configs/binomial_sine.json"),
    ),
    (
        "binomial_exponential.json",
        include_str!("../../../../configs/binomial_exponential.json"),
    ),
    (
        "trinomial_sine_call.json",
        include_str!("../../../../configs/trinomial_sine_call.json"),
    ),
    (
        "constant_shift.json",
        include_str!("../../../../configs/constant_shift.json"),
    ),
    (
        "binomial_power.json",
        include_str!("../../../../configs/binomial_power.json"),
    ),
    (
        "binomial_power_family.json",
        include_str!("../../../../configs/binomial_power_family.json"),
    ),
    (
        "trinomial_power_claim.json",
        include_str!("../../../../configs/trinomial_power_claim.json"),
    ),
];

pub fn shipped_configs() -> Result<Vec<ExperimentConfig>, ConfigError> {
    SHIPPED_CONFIGS
        .iter()
        .map(|(_, text)| ExperimentConfig::from_json(text))
        .collect()
}

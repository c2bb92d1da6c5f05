//! Monte Carlo evaluation, the verification suite and the worker pool.

pub mod checks;
pub mod evaluate;
pub mod verify;

pub use evaluate::{
    evaluate_curve, map_accuracy, results_csv, EstimatorKind, EstimatorSpec, EvalCell, EvalOptions, EvalResult, CSV_HEADER,
    NORMALIZATION_TOL, Z90,
};
pub use verify::{verify, CheckOutcome, VerifyReport};

use crate::error::{IceError, Result};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "ICE_THREADS";

/// Worker count from `ICE_THREADS`, if set.
pub fn worker_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(IceError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// Runs `f` on a pool sized by `ICE_THREADS` (rayon's default otherwise).
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| IceError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

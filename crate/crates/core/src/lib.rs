//! In-context estimation of transmitted symbols over simulated SIMO channels.
//!
//! The crate is split along the estimation pipeline:
//!
//! * [`channel`]: signal sets, noise, the line-of-sight / Rayleigh / Clarke
//!   channel generators and prompt sampling;
//! * [`oracle`]: posteriors that know the realized channel;
//! * [`baselines`]: context-aware and context-unaware Bayesian posteriors and
//!   the MMSE / LMMSE channel-estimate baselines;
//! * [`sat`]: the single-layer softmax-attention estimator, its loss,
//!   gradient and trainer;
//! * [`harness`]: Monte Carlo evaluation, verification suite and output formats.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod sat;

pub use error::{IceError, Result};
pub use oracle::Posterior;

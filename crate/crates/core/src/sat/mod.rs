//! The single-layer softmax-attention estimator.

pub mod estimator;
pub mod loss;
pub mod train;

pub use estimator::{
    convexity_probe, sat_output_log, sat_posterior, sat_posterior_limit, sat_posterior_with, AttentionWeights, SatOptions,
    TokenMatrix,
};
pub use loss::{cross_entropy_loss, loss_and_gradient, loss_gradient, prompt_loss_and_gradient, PROB_FLOOR};
pub use train::{held_out_set, smoothed, train, Init, TraceRow, TrainConfig, TrainOutcome, WeightsFile};

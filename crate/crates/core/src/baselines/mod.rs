//! Context-aware / context-unaware Bayesian symbol posteriors and the
//! channel-estimate baselines.

pub mod channel_est;
pub mod likelihood;
pub mod posterior;
pub mod stacked;

pub use channel_est::{averaged_correlation, h_lmmse, h_mmse, h_mmse_given_theta, point_estimate_posterior, ChannelEstimate};
pub use likelihood::{
    gaussian_logpdf, gaussian_stacked_loglik, latent_model, los_second_moment, scenario1_l0, scenario1_l0_all, scenario1_l1,
    scenario2_ltheta, LatentLikelihoods, LatentModel, QuadratureEstimate, QuadratureOptions,
};
pub use posterior::{ca_post, context_posteriors, cu_post, ContextPosteriors};
pub use stacked::{observation_covariance, query_cross_covariance, ChannelCorrelation, StackedSystem, Stacking};

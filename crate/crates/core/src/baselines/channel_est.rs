//! Channel point estimates from the past examples and the posteriors built on them.

use nalgebra::{DMatrix, DVector};

use super::likelihood::{latent_model, los_nodes, los_second_moment, rayleigh_correlation, LatentModel, LosKernel, QuadratureOptions};
use super::stacked::{observation_covariance, query_cross_covariance, ChannelCorrelation, StackedSystem};
use crate::channel::{complex_from_real, lift_complex_vector, los_channel, real_vector, Constellation, NoiseSpec, ScenarioConfig, ScenarioKind};
use crate::error::{IceError, Result};
use crate::linalg::{logsumexp, GaussianFactor};
use crate::oracle::{true_posterior, Posterior};

/// Estimate of the query-time channel `[Re h̃_k; Im h̃_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h: DVector<f64>,
    /// No past examples: the estimate is the prior mean 0.
    pub prior_mean: bool,
    /// Posterior weights over the latent values, for mixture estimates.
    pub latent_weights: Option<Vec<f64>>,
}

impl ChannelEstimate {
    fn prior(d: usize) -> Self {
        Self {
            h: DVector::zeros(2 * d),
            prior_mean: true,
            latent_weights: None,
        }
    }
}

/// Conditional mean and log-evidence of `y_past` under one latent model.
fn conditional_estimate(sys: &StackedSystem, model: &LatentModel, noise: &NoiseSpec) -> Result<(DVector<f64>, f64)> {
    match model {
        LatentModel::Gaussian(corr) => linear_estimate(sys, corr, noise),
        LatentModel::LineOfSight => los_posterior_mean(sys, noise, &QuadratureOptions::default()),
    }
}

/// `R_hy R_yy⁻¹ y_past` and `log N(y_past; 0, R_yy)`.
fn linear_estimate(sys: &StackedSystem, corr: &ChannelCorrelation, noise: &NoiseSpec) -> Result<(DVector<f64>, f64)> {
    let ryy = observation_covariance(&sys.past_symbols, sys.d, corr, noise);
    let factor = GaussianFactor::new(&ryy, "past observation covariance R_yy")?;
    let y = sys.y_past_vector();
    let rhy = query_cross_covariance(&sys.past_symbols, sys.k(), sys.d, corr);
    Ok((rhy * factor.solve_vec(&y), factor.logpdf(&y)))
}

/// Posterior mean of the line-of-sight channel by quadrature over the angle of arrival.
fn los_posterior_mean(sys: &StackedSystem, noise: &NoiseSpec, quad: &QuadratureOptions) -> Result<(DVector<f64>, f64)> {
    let kernel = LosKernel::new(noise)?;
    let evaluate = |intervals: usize| {
        let nodes = los_nodes(intervals);
        let hs: Vec<DVector<f64>> = nodes.iter().map(|(a, _)| real_vector(&los_channel(*a, sys.d))).collect();
        let logs: Vec<f64> = nodes.iter().zip(&hs).map(|((_, w), h)| w + kernel.past(sys, h)).collect();
        let evidence = logsumexp(&logs);
        let mean = hs
            .iter()
            .zip(&logs)
            .fold(DVector::zeros(2 * sys.d), |acc, (h, l)| acc + h * (l - evidence).exp());
        (mean, evidence)
    };
    let mut intervals = quad.initial_nodes;
    let mut current = evaluate(intervals);
    while intervals * 2 <= quad.max_nodes {
        intervals *= 2;
        let next = evaluate(intervals);
        let settled = ((next.1 - current.1).exp() - 1.0).abs() < quad.rel_tol;
        current = next;
        if settled {
            break;
        }
    }
    Ok(current)
}

/// `h^{MMSE,θ}`: the conditional mean of the query-time channel given the past
/// and the latent value (linear for the Gaussian models).
pub fn h_mmse_given_theta(sys: &StackedSystem, theta: f64, config: &ScenarioConfig, noise: &NoiseSpec) -> Result<ChannelEstimate> {
    config.latent_index(theta)?;
    if sys.k() == 0 {
        return Ok(ChannelEstimate::prior(sys.d));
    }
    let model = latent_model(config, theta, sys.k() + 1)?;
    let (h, _) = conditional_estimate(sys, &model, noise)?;
    Ok(ChannelEstimate {
        h,
        prior_mean: false,
        latent_weights: None,
    })
}

/// `h^{MMSE}`: mixture of `h^{MMSE,θ}` weighted by the posterior of θ given the past.
pub fn h_mmse(sys: &StackedSystem, config: &ScenarioConfig, noise: &NoiseSpec) -> Result<ChannelEstimate> {
    if sys.k() == 0 {
        return Ok(ChannelEstimate::prior(sys.d));
    }
    let log_prior = config.latent_log_prior();
    let mut estimates = Vec::with_capacity(config.latent_values.len());
    let mut log_w = Vec::with_capacity(config.latent_values.len());
    for (&theta, lp) in config.latent_values.iter().zip(&log_prior) {
        let model = latent_model(config, theta, sys.k() + 1)?;
        let (h, evidence) = conditional_estimate(sys, &model, noise)?;
        estimates.push(h);
        log_w.push(lp + evidence);
    }
    let norm = logsumexp(&log_w);
    if !norm.is_finite() {
        return Err(IceError::Numerical("latent posterior weights do not normalize".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|l| (l - norm).exp()).collect();
    let h = estimates
        .iter()
        .zip(&weights)
        .fold(DVector::zeros(2 * sys.d), |acc, (h, w)| acc + h * *w);
    Ok(ChannelEstimate {
        h,
        prior_mean: false,
        latent_weights: Some(weights),
    })
}

/// Correlation averaged over the (uniform) latent prior.
pub fn averaged_correlation(config: &ScenarioConfig, n_len: usize) -> ChannelCorrelation {
    let m = config.latent_values.len() as f64;
    match config.kind {
        ScenarioKind::Scenario2 => {
            let clarke = config.clarke();
            let mut lags = vec![0.0; n_len];
            for &theta in &config.latent_values {
                for (acc, r) in lags.iter_mut().zip(clarke.lags(theta, n_len)) {
                    *acc += r / m;
                }
            }
            ChannelCorrelation::Stationary(lags)
        }
        ScenarioKind::Scenario1 => {
            let d = config.d;
            let mut k = DMatrix::zeros(2 * d, 2 * d);
            for &theta in &config.latent_values {
                k += if theta == 0.0 {
                    los_second_moment(d)
                } else {
                    match rayleigh_correlation(d) {
                        ChannelCorrelation::Static(r) => r,
                        ChannelCorrelation::Stationary(_) => unreachable!("rayleigh correlation is static"),
                    }
                } / m;
            }
            ChannelCorrelation::Static(k)
        }
    }
}

/// `h^{LMMSE}`: linear estimate using the latent-averaged correlation.
pub fn h_lmmse(sys: &StackedSystem, config: &ScenarioConfig, noise: &NoiseSpec) -> Result<ChannelEstimate> {
    if sys.k() == 0 {
        return Ok(ChannelEstimate::prior(sys.d));
    }
    let corr = averaged_correlation(config, sys.k() + 1);
    let (h, _) = linear_estimate(sys, &corr, noise)?;
    Ok(ChannelEstimate {
        h,
        prior_mean: false,
        latent_weights: None,
    })
}

/// True posterior evaluated at a channel estimate instead of the realized channel.
pub fn point_estimate_posterior(y_q: &DVector<f64>, h_hat: &DVector<f64>, noise: &NoiseSpec, constellation: &Constellation) -> Posterior {
    true_posterior(y_q, &lift_complex_vector(&complex_from_real(h_hat)), noise, constellation)
}

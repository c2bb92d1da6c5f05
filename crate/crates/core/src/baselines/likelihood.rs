//! Per-latent likelihoods `ℓ_θ(i)` of the stacked observations.

use nalgebra::{DMatrix, DVector, Vector2};

use super::stacked::{observation_covariance, ChannelCorrelation, StackedSystem};
use crate::channel::{bessel_j0, embed_symbol_matrix, los_channel, real_vector, ClarkeModel, Constellation, NoiseSpec, ScenarioConfig, ScenarioKind};
use crate::error::{IceError, Result};
use crate::linalg::{logsumexp, GaussianFactor};

pub use crate::linalg::gaussian_logpdf;

/// Trapezoid settings for the angle-of-arrival integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    /// Stop once successive integral estimates differ by less than this relative amount.
    pub rel_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            initial_nodes: 256,
            max_nodes: 1 << 16,
            rel_tol: 1e-6,
        }
    }
}

/// A log-domain quadrature result. `converged == false` means the node cap was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureEstimate {
    pub log_values: Vec<f64>,
    pub nodes: usize,
    pub converged: bool,
}

/// Trapezoid nodes on `[0, π]` with log weights including the uniform density `1/π`.
///
/// `g(α) = f(cos α)` extends to an even 2π-periodic function, so the rule is spectrally accurate.
pub(crate) fn los_nodes(intervals: usize) -> Vec<(f64, f64)> {
    let step = std::f64::consts::PI / intervals as f64;
    let log_w = -(intervals as f64).ln();
    (0..=intervals)
        .map(|j| {
            let w = if j == 0 || j == intervals { log_w - std::f64::consts::LN_2 } else { log_w };
            (j as f64 * step, w)
        })
        .collect()
}

/// Sum over time of `log N(y_n; M(x_n) h, Σ_z)`.
pub(crate) struct LosKernel<'a> {
    precision: &'a DMatrix<f64>,
    log_norm: f64,
    d: usize,
}

impl<'a> LosKernel<'a> {
    pub(crate) fn new(noise: &'a NoiseSpec) -> Result<Self> {
        let factor = GaussianFactor::new(noise.sigma_real(), "noise covariance")?;
        let b = 2 * noise.d();
        Ok(Self {
            precision: noise.sigma_real_inv(),
            log_norm: -0.5 * (b as f64 * (2.0 * std::f64::consts::PI).ln() + factor.log_det()),
            d: noise.d(),
        })
    }

    pub(crate) fn term(&self, y: &DVector<f64>, x: &Vector2<f64>, h: &DVector<f64>) -> f64 {
        let r = y - embed_symbol_matrix(x, self.d) * h;
        self.log_norm - 0.5 * r.dot(&(self.precision * &r))
    }

    pub(crate) fn past(&self, sys: &StackedSystem, h: &DVector<f64>) -> f64 {
        sys.y_past.iter().zip(&sys.past_symbols).map(|(y, x)| self.term(y, x, h)).sum()
    }
}

/// Line-of-sight likelihood `ℓ₀(i)` for every candidate, by adaptive trapezoid quadrature
/// over the angle of arrival. The past-only terms are shared across candidates and node
/// doubling continues until every candidate has converged.
pub fn scenario1_l0_all(
    sys: &StackedSystem,
    noise: &NoiseSpec,
    constellation: &Constellation,
    quad: &QuadratureOptions,
) -> Result<QuadratureEstimate> {
    if quad.initial_nodes < 64 {
        return Err(IceError::Config(format!("quadrature needs at least 64 nodes, got {}", quad.initial_nodes)));
    }
    let kernel = LosKernel::new(noise)?;
    let evaluate = |intervals: usize| -> Vec<f64> {
        let mut per_candidate = vec![Vec::with_capacity(intervals + 1); constellation.len()];
        for (alpha, log_w) in los_nodes(intervals) {
            let h = real_vector(&los_channel(alpha, sys.d));
            let past = kernel.past(sys, &h) + log_w;
            for (i, x) in constellation.lifted().iter().enumerate() {
                per_candidate[i].push(past + kernel.term(&sys.y_query, x, &h));
            }
        }
        per_candidate.iter().map(|v| logsumexp(v)).collect()
    };
    let mut intervals = quad.initial_nodes;
    let mut current = evaluate(intervals);
    while intervals * 2 <= quad.max_nodes {
        let next = evaluate(intervals * 2);
        intervals *= 2;
        let settled = current
            .iter()
            .zip(&next)
            .all(|(a, b)| ((b - a).exp() - 1.0).abs() < quad.rel_tol);
        current = next;
        if settled {
            return Ok(QuadratureEstimate {
                log_values: current,
                nodes: intervals,
                converged: true,
            });
        }
    }
    Ok(QuadratureEstimate {
        log_values: current,
        nodes: intervals,
        converged: false,
    })
}

/// `log ℓ₀(i)` for one candidate.
pub fn scenario1_l0(
    sys: &StackedSystem,
    candidate: usize,
    noise: &NoiseSpec,
    constellation: &Constellation,
    quad: &QuadratureOptions,
) -> Result<(f64, QuadratureEstimate)> {
    let est = scenario1_l0_all(sys, noise, constellation, quad)?;
    Ok((est.log_values[candidate], est))
}

/// Log-likelihood of `y_full` when `h` is zero-mean Gaussian with the given correlation.
pub fn gaussian_stacked_loglik(sys: &StackedSystem, candidate: Vector2<f64>, corr: &ChannelCorrelation, noise: &NoiseSpec) -> Result<f64> {
    let cov = observation_covariance(&sys.symbols_with(candidate), sys.d, corr, noise);
    gaussian_logpdf(&sys.y_full(), &cov)
}

/// Rayleigh likelihood `ℓ₁(i)`: `y_full ~ N(0, ½ X_full(i) X_full(i)ᵀ + Σ)`.
pub fn scenario1_l1(sys: &StackedSystem, candidate: usize, noise: &NoiseSpec, constellation: &Constellation) -> Result<f64> {
    let corr = rayleigh_correlation(sys.d);
    gaussian_stacked_loglik(sys, constellation.lifted_point(candidate), &corr, noise)
}

/// Clarke likelihood `ℓ_θ(i)`: `y_full ~ N(0, X_full(i) (R_θ ⊗ I_2d) X_full(i)ᵀ + Σ)`.
pub fn scenario2_ltheta(
    sys: &StackedSystem,
    candidate: usize,
    theta: f64,
    noise: &NoiseSpec,
    clarke: &ClarkeModel,
    constellation: &Constellation,
) -> Result<f64> {
    let corr = ChannelCorrelation::Stationary(clarke.lags(theta, sys.k() + 1));
    gaussian_stacked_loglik(sys, constellation.lifted_point(candidate), &corr, noise)
}

/// `E[h hᵀ] = ½ I_2d` for `h̃ ~ CN(0, I_d)`.
pub fn rayleigh_correlation(d: usize) -> ChannelCorrelation {
    ChannelCorrelation::Static(DMatrix::identity(2 * d, 2 * d) * 0.5)
}

/// `E[h_α h_αᵀ]` of the line-of-sight channel with `α ~ U((0, π])`.
///
/// With `φ_j = π j cos α / 2`, `E[cos(c cos α)] = J0(c)` and `E[sin(c cos α)] = 0`, so the
/// real/imaginary cross block vanishes.
pub fn los_second_moment(d: usize) -> DMatrix<f64> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut k = DMatrix::zeros(2 * d, 2 * d);
    for j in 0..d {
        for l in 0..d {
            let minus = bessel_j0(half_pi * (j as f64 - l as f64));
            let plus = bessel_j0(half_pi * (j + l) as f64);
            k[(j, l)] = 0.5 * (minus + plus);
            k[(d + j, d + l)] = 0.5 * (minus - plus);
        }
    }
    k
}

/// How `h` behaves under one latent value.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentModel {
    /// Scenario 1, θ = 0: unit-modulus array response with a uniform angle of arrival.
    LineOfSight,
    /// Zero-mean Gaussian channel.
    Gaussian(ChannelCorrelation),
}

/// The channel model under latent value `theta`, over `n_len` time indices.
pub fn latent_model(config: &ScenarioConfig, theta: f64, n_len: usize) -> Result<LatentModel> {
    match config.kind {
        ScenarioKind::Scenario1 if theta == 0.0 => Ok(LatentModel::LineOfSight),
        ScenarioKind::Scenario1 if theta == 1.0 => Ok(LatentModel::Gaussian(rayleigh_correlation(config.d))),
        ScenarioKind::Scenario1 => Err(IceError::Config(format!("Scenario1 latent value must be 0 or 1, got {theta}"))),
        ScenarioKind::Scenario2 => Ok(LatentModel::Gaussian(ChannelCorrelation::Stationary(
            config.clarke().lags(theta, n_len),
        ))),
    }
}

/// `log ℓ_θ(i)` for every latent value and candidate, plus `log f_Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentLikelihoods {
    pub thetas: Vec<f64>,
    pub latent_log_prior: Vec<f64>,
    /// `log_l[t][i]` for latent `thetas[t]` and candidate `i`.
    pub log_l: Vec<Vec<f64>>,
    /// Set when a line-of-sight quadrature hit its node cap.
    pub quadrature_warning: bool,
}

impl LatentLikelihoods {
    pub fn compute(
        sys: &StackedSystem,
        config: &ScenarioConfig,
        noise: &NoiseSpec,
        constellation: &Constellation,
        quad: &QuadratureOptions,
    ) -> Result<Self> {
        Self::compute_for(&config.latent_values, config, sys, noise, constellation, quad)
    }

    /// Restrict to a subset of latent values (each must belong to the configuration).
    pub fn compute_for(
        thetas: &[f64],
        config: &ScenarioConfig,
        sys: &StackedSystem,
        noise: &NoiseSpec,
        constellation: &Constellation,
        quad: &QuadratureOptions,
    ) -> Result<Self> {
        let prior = config.latent_log_prior();
        let mut latent_log_prior = Vec::with_capacity(thetas.len());
        let mut log_l = Vec::with_capacity(thetas.len());
        let mut quadrature_warning = false;
        for &theta in thetas {
            latent_log_prior.push(prior[config.latent_index(theta)?]);
            let row = match latent_model(config, theta, sys.k() + 1)? {
                LatentModel::LineOfSight => {
                    let est = scenario1_l0_all(sys, noise, constellation, quad)?;
                    quadrature_warning |= !est.converged;
                    est.log_values
                }
                LatentModel::Gaussian(corr) => constellation
                    .lifted()
                    .iter()
                    .map(|x| gaussian_stacked_loglik(sys, *x, &corr, noise))
                    .collect::<Result<Vec<_>>>()?,
            };
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(IceError::Numerical(format!("non-finite likelihood {bad} for latent value {theta}")));
            }
            log_l.push(row);
        }
        Ok(Self {
            thetas: thetas.to_vec(),
            latent_log_prior,
            log_l,
            quadrature_warning,
        })
    }

    /// `log Σ_θ f_Θ(θ) ℓ_θ(i)` per candidate.
    pub fn marginal(&self) -> Vec<f64> {
        let s = self.log_l.first().map_or(0, Vec::len);
        (0..s)
            .map(|i| {
                let terms: Vec<f64> = self.log_l.iter().zip(&self.latent_log_prior).map(|(row, lp)| lp + row[i]).collect();
                logsumexp(&terms)
            })
            .collect()
    }

    pub fn row(&self, theta: f64) -> Option<&[f64]> {
        self.thetas.iter().position(|&t| t == theta).map(|t| self.log_l[t].as_slice())
    }
}

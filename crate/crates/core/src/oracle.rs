//! Estimators that know the realized channel: the exact symbol posterior, the
//! conditional-mean symbol, the instantaneous SNR and the antipodal tanh rule.

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;

use crate::channel::{lift_complex_vector, Constellation, NoiseSpec};
use crate::error::{IceError, Result};
use crate::linalg::{cholesky_jittered, logsumexp};

/// A distribution over symbol indices, stored as normalized log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    log_probs: Vec<f64>,
}

impl Posterior {
    /// Normalize unnormalized log-scores with a max-shifted log-sum-exp.
    pub fn from_log_scores(scores: Vec<f64>) -> Self {
        let lse = logsumexp(&scores);
        assert!(lse.is_finite(), "posterior scores have no finite mass: {scores:?}");
        Self {
            log_probs: scores.into_iter().map(|s| s - lse).collect(),
        }
    }

    pub fn from_probs(probs: &[f64]) -> Self {
        Self::from_log_scores(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn uniform(s: usize) -> Self {
        Self::from_log_scores(vec![0.0; s])
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_probs[i]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.log_probs[i].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Most probable index; ties go to the lowest index.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_probs.iter().enumerate().skip(1) {
            if l > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    /// `KL(self || other)` in nats.
    pub fn kl_divergence(&self, other: &Posterior) -> f64 {
        self.log_probs
            .iter()
            .zip(&other.log_probs)
            .filter(|(p, _)| p.is_finite())
            .map(|(p, q)| p.exp() * (p - q))
            .sum()
    }

    /// Sup-norm distance between the probability vectors.
    pub fn linf_distance(&self, other: &Posterior) -> f64 {
        self.probs()
            .iter()
            .zip(other.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `log Σ_i p_i`; zero for a normalized posterior.
    pub fn log_total(&self) -> f64 {
        logsumexp(&self.log_probs)
    }
}

/// Posterior of the query symbol given the realized channel `H`:
/// `log p_i ∝ log ρ_i + y_qᵀ Σ_z⁻¹ H x_i − ½ x_iᵀ Hᵀ Σ_z⁻¹ H x_i`.
///
/// The quadratic term vanishes across `i` for constant-modulus signal sets and
/// is kept so that 16-QAM is handled exactly.
pub fn true_posterior(y_q: &DVector<f64>, h: &DMatrix<f64>, noise: &NoiseSpec, constellation: &Constellation) -> Posterior {
    let prec = noise.sigma_real_inv();
    let w_y = prec * y_q;
    let scores = constellation
        .lifted()
        .iter()
        .zip(constellation.log_priors())
        .map(|(x, lp)| {
            let hx = h * x;
            lp + w_y.dot(&hx) - 0.5 * hx.dot(&(prec * &hx))
        })
        .collect();
    Posterior::from_log_scores(scores)
}

/// Conditional-mean symbol `Σ_i x_i p_i`.
pub fn mmse_symbol(y_q: &DVector<f64>, h: &DMatrix<f64>, noise: &NoiseSpec, constellation: &Constellation) -> Vector2<f64> {
    let post = true_posterior(y_q, h, noise, constellation);
    constellation
        .lifted()
        .iter()
        .enumerate()
        .map(|(i, x)| x * post.prob(i))
        .sum()
}

/// `γ = h_Iᵀ Σ̃_z⁻¹ h_I + h_Qᵀ Σ̃_z⁻¹ h_Q`, which satisfies `γ I₂ = ½ Hᵀ Σ_z⁻¹ H`.
pub fn instantaneous_snr(h: &[Complex64], noise: &NoiseSpec) -> f64 {
    let d = h.len();
    let hi = DVector::from_fn(d, |j, _| h[j].re);
    let hq = DVector::from_fn(d, |j, _| h[j].im);
    let inv = noise.sigma_tilde_inv();
    hi.dot(&(inv * &hi)) + hq.dot(&(inv * &hq))
}

/// `½ Hᵀ Σ_z⁻¹ H` for the lifted channel; equals `γ I₂`.
pub fn lifted_snr_matrix(h: &[Complex64], noise: &NoiseSpec) -> DMatrix<f64> {
    let hr = lift_complex_vector(h);
    hr.transpose() * noise.sigma_real_inv() * &hr * 0.5
}

/// Conditional mean `tanh(yᵀ Σ_ε⁻¹ h)` of an equiprobable antipodal symbol
/// observed as `y = h x + ε`, `ε ~ N(0, Σ_ε)`.
pub fn binary_tanh_estimate(y: &DVector<f64>, h: &DVector<f64>, sigma_eps: &DMatrix<f64>) -> Result<f64> {
    if y.len() != h.len() || sigma_eps.nrows() != y.len() || sigma_eps.ncols() != y.len() {
        return Err(IceError::Config("binary_tanh_estimate: dimension mismatch".into()));
    }
    let chol = cholesky_jittered(sigma_eps, "antipodal noise covariance")?;
    Ok(y.dot(&chol.solve(h)).tanh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::real_vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_h(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
        (0..d)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn uninformative_observation_returns_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Constellation::qpsk(false);
        let noise = NoiseSpec::isotropic(1e12, 2).unwrap();
        let h = lift_complex_vector(&random_h(&mut rng, 2));
        let y = random_vec(&mut rng, 4);
        let p = true_posterior(&y, &h, &noise, &c);
        for i in 0..4 {
            assert!((p.prob(i) - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn noiseless_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Constellation::qam16(false);
        let noise = NoiseSpec::isotropic(1e-12, 2).unwrap();
        let h = lift_complex_vector(&random_h(&mut rng, 2));
        for j in 0..16 {
            let y = &h * c.lifted_point(j);
            assert!(true_posterior(&y, &h, &noise, &c).prob(j) >= 0.999_999);
        }
    }

    #[test]
    fn matches_direct_bayes_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = Constellation::qpsk(false);
        let noise = NoiseSpec::isotropic(1.0, 1).unwrap();
        for _ in 0..100 {
            let h = lift_complex_vector(&random_h(&mut rng, 1));
            let y = random_vec(&mut rng, 2);
            let dens: Vec<f64> = c
                .lifted()
                .iter()
                .zip(c.priors())
                .map(|(x, r)| {
                    let e = &y - &h * x;
                    r * (-0.5 * e.norm_squared()).exp() / (2.0 * std::f64::consts::PI)
                })
                .collect();
            let total: f64 = dens.iter().sum();
            let p = true_posterior(&y, &h, &noise, &c);
            for i in 0..4 {
                assert!((p.prob(i) - dens[i] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mmse_symbol_examples() {
        let c = Constellation::qpsk(false);
        let noise = NoiseSpec::isotropic(1e-12, 1).unwrap();
        let h = lift_complex_vector(&[Complex64::new(0.3, -0.8)]);
        let y = &h * c.lifted_point(2);
        assert!((mmse_symbol(&y, &h, &noise, &c) - c.lifted_point(2)).norm() < 1e-12);

        let flat = NoiseSpec::isotropic(1.0, 1).unwrap();
        let zero_h = DMatrix::zeros(2, 2);
        assert!(mmse_symbol(&y, &zero_h, &flat, &c).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = lift_complex_vector(&random_h(&mut rng, 3));
        let y = random_vec(&mut rng, 6);
        let noise = NoiseSpec::isotropic(0.7, 3).unwrap();
        let p = true_posterior(&y, &h, &noise, &c).probs();
        let mut expected = Vector2::zeros();
        for i in 0..4 {
            expected += c.lifted_point(i) * p[i];
        }
        assert!((mmse_symbol(&y, &h, &noise, &c) - expected).norm() < 1e-13);
    }

    #[test]
    fn snr_examples_and_identity() {
        let noise = NoiseSpec::isotropic(0.25, 4).unwrap();
        assert_eq!(instantaneous_snr(&[Complex64::new(0.0, 0.0); 4], &noise), 0.0);
        let unit: Vec<_> = (0..4).map(|j| Complex64::from_polar(1.0, j as f64)).collect();
        assert!((instantaneous_snr(&unit, &noise) - 4.0 / (2.0 * 0.25)).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let general = NoiseSpec::with_complex_covariance(DMatrix::from_row_slice(3, 3, &[
            2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0,
        ]))
        .unwrap();
        for _ in 0..50 {
            let h = random_h(&mut rng, 3);
            let gamma = instantaneous_snr(&h, &general);
            let m = lifted_snr_matrix(&h, &general);
            assert!((m - DMatrix::identity(2, 2) * gamma).amax() < 1e-12);
        }
    }

    #[test]
    fn tanh_examples() {
        let h = DVector::from_vec(vec![1.0, 2.0]);
        let sigma = DMatrix::identity(2, 2);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        assert_eq!(binary_tanh_estimate(&y, &h, &sigma).unwrap(), 0.0);
        let big = &h * 1e3;
        assert_eq!(binary_tanh_estimate(&big, &h, &sigma).unwrap(), 1.0);
    }

    #[test]
    fn antipodal_specialization() {
        // Real problem y = h x + ε embedded as d antennas with zero imaginary
        // parts: Σ̃_z = 2 Σ_ε gives Σ_z = diag(Σ_ε, Σ_ε).
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = Constellation::bpsk();
        for _ in 0..200 {
            let d = rng.gen_range(1..5);
            let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let sigma_eps = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
            let h = random_vec(&mut rng, d);
            let y = random_vec(&mut rng, d);
            let noise = NoiseSpec::with_complex_covariance(&sigma_eps * 2.0).unwrap();
            let hc: Vec<_> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let yq = real_vector(&y.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
            let p = true_posterior(&yq, &lift_complex_vector(&hc), &noise, &c);
            let t = binary_tanh_estimate(&y, &h, &sigma_eps).unwrap();
            assert!((p.prob(0) - p.prob(1) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_scaling_changes_posterior_but_both_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = Constellation::qpsk(false);
        let h = lift_complex_vector(&random_h(&mut rng, 2));
        let y = random_vec(&mut rng, 4);
        let a = true_posterior(&y, &h, &NoiseSpec::isotropic(1.0, 2).unwrap(), &c);
        let b = true_posterior(&y, &h, &NoiseSpec::isotropic(2.0, 2).unwrap(), &c);
        assert!(a.log_total().abs() < 1e-10 && b.log_total().abs() < 1e-10);
        assert!(a.linf_distance(&b) > 1e-6);
    }

    #[test]
    fn posterior_helpers() {
        let p = Posterior::from_probs(&[0.1, 0.6, 0.2, 0.1]);
        assert_eq!(p.map_index(), 1);
        assert_eq!(Posterior::uniform(4).map_index(), 0);
        let shifted = Posterior::from_log_scores(vec![1000.0, 1000.0 + 2f64.ln()]);
        assert!((shifted.prob(1) - 2.0 / 3.0).abs() < 1e-14);
        assert!(p.kl_divergence(&p).abs() < 1e-15);
    }
}

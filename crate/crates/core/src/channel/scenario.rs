use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bessel::bessel_j0;
use super::constellation::{Constellation, ConstellationKind};
use super::lift_complex_vector;
use super::noise::NoiseSpec;
use crate::error::{IceError, Result};
use crate::linalg::{cholesky_jittered, symmetric_toeplitz};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Time-invariant channel: line-of-sight (θ = 0) or i.i.d. Rayleigh (θ = 1).
    #[serde(alias = "scenario1")]
    Scenario1,
    /// Time-varying Clarke fading with latent relative velocity θ.
    #[serde(alias = "scenario2")]
    Scenario2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LatentPrior {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClarkeConstants {
    /// Carrier frequency (Hz).
    pub f_carrier: f64,
    /// Symbol duration (s).
    #[serde(rename = "T_s")]
    pub t_s: f64,
    /// Propagation speed (m/s).
    pub c: f64,
}

impl Default for ClarkeConstants {
    fn default() -> Self {
        Self {
            f_carrier: 2.9e9,
            t_s: 1e-3,
            c: 3e8,
        }
    }
}

/// Per-component autocovariance of Clarke's model,
/// `R_θ(k) = variance · J0(2π f_carrier T_s k θ / c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkeModel {
    pub constants: ClarkeConstants,
    pub variance: f64,
}

impl ClarkeModel {
    pub fn new(constants: ClarkeConstants) -> Self {
        Self { constants, variance: 1.0 }
    }

    pub fn autocov(&self, theta: f64, lag: usize) -> f64 {
        let ClarkeConstants { f_carrier, t_s, c } = self.constants;
        self.variance * bessel_j0(2.0 * PI * f_carrier * t_s * lag as f64 * theta / c)
    }

    /// `[R_θ(0), ..., R_θ(n-1)]`.
    pub fn lags(&self, theta: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.autocov(theta, k)).collect()
    }

    /// The `n × n` Toeplitz matrix `[R_θ(|i-j|)]`.
    pub fn toeplitz(&self, theta: f64, n: usize) -> DMatrix<f64> {
        symmetric_toeplitz(&self.lags(theta, n), n)
    }
}

fn default_d() -> usize {
    4
}

fn default_snr_db() -> f64 {
    0.0
}

/// Experiment scenario. Serializes to JSON with these field names as keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default = "default_d")]
    pub d: usize,
    pub latent_values: Vec<f64>,
    #[serde(default)]
    pub latent_prior: LatentPrior,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default)]
    pub clarke_constants: ClarkeConstants,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub constellation: ConstellationKind,
    /// Scale symbols to unit average energy (unit circle for QPSK).
    #[serde(default)]
    pub normalize: bool,
    /// Rescale Scenario-2 fading to complex per-antenna power 1.
    #[serde(default)]
    pub half_power_scenario2: bool,
}

impl ScenarioConfig {
    pub fn scenario1() -> Self {
        Self {
            kind: ScenarioKind::Scenario1,
            d: 4,
            latent_values: vec![0.0, 1.0],
            latent_prior: LatentPrior::Uniform,
            snr_db: 0.0,
            clarke_constants: ClarkeConstants::default(),
            seed: 0,
            constellation: ConstellationKind::Qpsk,
            normalize: false,
            half_power_scenario2: false,
        }
    }

    pub fn scenario2() -> Self {
        Self {
            kind: ScenarioKind::Scenario2,
            latent_values: vec![5.0, 15.0, 30.0],
            ..Self::scenario1()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(IceError::Config("d must be at least 1".into()));
        }
        if self.latent_values.is_empty() {
            return Err(IceError::Config("latent_values must not be empty".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(IceError::Config("snr_db must be finite".into()));
        }
        match self.kind {
            ScenarioKind::Scenario1 => {
                if let Some(bad) = self.latent_values.iter().find(|&&t| t != 0.0 && t != 1.0) {
                    return Err(IceError::Config(format!("Scenario1 latent value {bad} is not 0 or 1")));
                }
            }
            ScenarioKind::Scenario2 => {
                if let Some(bad) = self.latent_values.iter().find(|&&t| !(t.is_finite() && t > 0.0)) {
                    return Err(IceError::Config(format!("Scenario2 latent value {bad} must be positive")));
                }
                let ClarkeConstants { f_carrier, t_s, c } = self.clarke_constants;
                if [f_carrier, t_s, c].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(IceError::Config("Clarke constants must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::from_snr_db(self.snr_db, self.d)
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::from_kind(self.constellation, self.normalize)
    }

    pub fn clarke(&self) -> ClarkeModel {
        ClarkeModel {
            constants: self.clarke_constants,
            variance: if self.half_power_scenario2 { 0.5 } else { 1.0 },
        }
    }

    /// `log f_Θ(θ)` for each entry of `latent_values`.
    pub fn latent_log_prior(&self) -> Vec<f64> {
        match self.latent_prior {
            LatentPrior::Uniform => vec![-(self.latent_values.len() as f64).ln(); self.latent_values.len()],
        }
    }

    pub fn latent_index(&self, theta: f64) -> Result<usize> {
        self.latent_values
            .iter()
            .position(|&t| t == theta)
            .ok_or_else(|| IceError::Config(format!("latent value {theta} is not in {:?}", self.latent_values)))
    }

    pub fn draw_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.latent_prior {
            LatentPrior::Uniform => self.latent_values[rng.gen_range(0..self.latent_values.len())],
        }
    }

    /// Channel realization spanning `n_len` time indices.
    pub fn draw_channel<R: Rng + ?Sized>(&self, theta: f64, n_len: usize, rng: &mut R) -> Result<ChannelRealization> {
        match self.kind {
            ScenarioKind::Scenario1 => draw_channel_scenario1(theta, self.d, rng),
            ScenarioKind::Scenario2 => draw_channel_scenario2(theta, self.d, n_len, &self.clarke(), rng),
        }
    }
}

/// A drawn channel: latent θ, the complex vectors `h̃_n(θ)` and their real lifts `H_n(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub theta: f64,
    h_complex: Vec<Vec<Complex64>>,
    h_real: Vec<DMatrix<f64>>,
    /// Angle of arrival when the line-of-sight model was drawn.
    pub aoa: Option<f64>,
}

impl ChannelRealization {
    /// Time-invariant realization (one vector reused at every index).
    pub fn constant(theta: f64, h: Vec<Complex64>, aoa: Option<f64>) -> Self {
        Self::time_varying(theta, vec![h], aoa)
    }

    pub fn time_varying(theta: f64, h: Vec<Vec<Complex64>>, aoa: Option<f64>) -> Self {
        assert!(!h.is_empty(), "channel realization needs at least one time index");
        let h_real = h.iter().map(|v| lift_complex_vector(v)).collect();
        Self {
            theta,
            h_complex: h,
            h_real,
            aoa,
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        self.h_complex.len() == 1
    }

    pub fn d(&self) -> usize {
        self.h_complex[0].len()
    }

    /// Number of stored time indices (1 for time-invariant channels).
    pub fn stored_len(&self) -> usize {
        self.h_complex.len()
    }

    fn index(&self, n: usize) -> usize {
        if self.is_time_invariant() {
            0
        } else {
            assert!(n < self.h_complex.len(), "time index {n} beyond realization of length {}", self.h_complex.len());
            n
        }
    }

    /// `h̃_n(θ)`.
    pub fn h_at(&self, n: usize) -> &[Complex64] {
        &self.h_complex[self.index(n)]
    }

    /// `H_n(θ)` (2d × 2).
    pub fn lifted_at(&self, n: usize) -> &DMatrix<f64> {
        &self.h_real[self.index(n)]
    }

    /// `[Re h̃_n; Im h̃_n]`.
    pub fn real_vector_at(&self, n: usize) -> DVector<f64> {
        super::real_vector(self.h_at(n))
    }

    /// Keep the first `n_len` indices.
    pub fn truncated(&self, n_len: usize) -> Self {
        if self.is_time_invariant() {
            return self.clone();
        }
        Self {
            theta: self.theta,
            h_complex: self.h_complex[..n_len].to_vec(),
            h_real: self.h_real[..n_len].to_vec(),
            aoa: self.aoa,
        }
    }
}

/// `h̃^j = exp(-iπ j cos α / 2)`, `j = 0..d` (quarter-wavelength spacing).
pub fn los_channel(alpha: f64, d: usize) -> Vec<Complex64> {
    (0..d)
        .map(|j| Complex64::from_polar(1.0, -PI * j as f64 * alpha.cos() / 2.0))
        .collect()
}

/// Scenario 1: θ = 0 line-of-sight with `α ~ U((0, π])`, θ = 1 i.i.d. Rayleigh `CN(0, I_d)`.
pub fn draw_channel_scenario1<R: Rng + ?Sized>(theta: f64, d: usize, rng: &mut R) -> Result<ChannelRealization> {
    if d == 0 {
        return Err(IceError::Config("d must be at least 1".into()));
    }
    if theta == 0.0 {
        let alpha = PI * (1.0 - rng.gen::<f64>());
        Ok(ChannelRealization::constant(theta, los_channel(alpha, d), Some(alpha)))
    } else if theta == 1.0 {
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let h = (0..d)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * scale, im * scale)
            })
            .collect();
        Ok(ChannelRealization::constant(theta, h, None))
    } else {
        Err(IceError::Config(format!("Scenario1 latent value must be 0 or 1, got {theta}")))
    }
}

/// Scenario 2: every real component of `h̃_n` is an independent stationary
/// Gaussian process with autocovariance `R_θ`, sampled through the Cholesky
/// factor of the `n_len × n_len` Toeplitz matrix.
pub fn draw_channel_scenario2<R: Rng + ?Sized>(
    theta: f64,
    d: usize,
    n_len: usize,
    clarke: &ClarkeModel,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(IceError::Config(format!("Scenario2 latent value must be positive, got {theta}")));
    }
    if d == 0 || n_len == 0 {
        return Err(IceError::Config("Scenario2 needs d >= 1 and n_len >= 1".into()));
    }
    let toeplitz = clarke.toeplitz(theta, n_len);
    let lower = cholesky_jittered(&toeplitz, &format!("Clarke Toeplitz matrix (theta = {theta}, n_len = {n_len})"))?.l();
    let components: Vec<DVector<f64>> = (0..2 * d)
        .map(|_| {
            let white = DVector::from_fn(n_len, |_, _| rng.sample::<f64, _>(StandardNormal));
            &lower * white
        })
        .collect();
    let h = (0..n_len)
        .map(|n| (0..d).map(|j| Complex64::new(components[j][n], components[d + j][n])).collect())
        .collect();
    Ok(ChannelRealization::time_varying(theta, h, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn los_is_unit_modulus_and_broadside_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let ch = draw_channel_scenario1(0.0, 4, &mut rng).unwrap();
            let alpha = ch.aoa.unwrap();
            assert!(alpha > 0.0 && alpha <= PI);
            for h in ch.h_at(0) {
                assert!((h.norm() - 1.0).abs() < 1e-14);
            }
        }
        for h in los_channel(PI / 2.0, 5) {
            assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rayleigh_component_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let ch = draw_channel_scenario1(1.0, 1, &mut rng).unwrap();
            let v = ch.h_at(0)[0].re;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        // Var of the sample variance of N(0, 1/2) is 2 * 0.25 / n.
        let mc_sigma = (0.5 / draws as f64).sqrt();
        assert!((var - 0.5).abs() < 3.0 * mc_sigma, "variance {var}");
    }

    #[test]
    fn unknown_scenario1_latent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(draw_channel_scenario1(2.0, 2, &mut rng), Err(IceError::Config(_))));
    }

    #[test]
    fn clarke_autocovariance() {
        let m = ClarkeModel::new(ClarkeConstants::default());
        assert_eq!(m.autocov(5.0, 0), 1.0);
        assert_eq!(m.autocov(30.0, 0), 1.0);
        assert!((m.autocov(5.0, 1) - 0.97708).abs() < 1e-4);
    }

    #[test]
    fn scenario2_shapes_and_block_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = draw_channel_scenario2(15.0, 3, 7, &ClarkeModel::new(ClarkeConstants::default()), &mut rng).unwrap();
        assert!(!ch.is_time_invariant());
        assert_eq!(ch.stored_len(), 7);
        for n in 0..7 {
            let h = ch.h_at(n);
            let hr = ch.lifted_at(n);
            for j in 0..3 {
                assert_eq!(hr[(j, 0)], h[j].re);
                assert_eq!(hr[(j, 1)], -h[j].im);
                assert_eq!(hr[(3 + j, 0)], h[j].im);
                assert_eq!(hr[(3 + j, 1)], h[j].re);
            }
        }
        assert_eq!(ch.truncated(3).stored_len(), 3);
    }

    #[test]
    fn scenario2_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ClarkeModel::new(ClarkeConstants::default());
        assert!(draw_channel_scenario2(0.0, 2, 3, &m, &mut rng).is_err());
        assert!(draw_channel_scenario2(5.0, 2, 0, &m, &mut rng).is_err());
    }

    #[test]
    fn config_json_round_trip_and_keys() {
        let cfg = ScenarioConfig::scenario2();
        let text = cfg.to_json();
        for key in ["\"kind\"", "\"d\"", "\"latent_values\"", "\"latent_prior\"", "\"snr_db\"", "\"clarke_constants\"", "\"f_carrier\"", "\"T_s\"", "\"c\"", "\"seed\""] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);

        let minimal = r#"{"kind": "Scenario1", "latent_values": [0, 1], "seed": 11}"#;
        let parsed = ScenarioConfig::from_json(minimal).unwrap();
        assert_eq!(parsed.d, 4);
        assert_eq!(parsed.seed, 11);

        let bad = r#"{"kind": "Scenario1", "latent_values": [0, 3]}"#;
        assert!(matches!(ScenarioConfig::from_json(bad), Err(IceError::Config(_))));
        assert!(ScenarioConfig::from_json("{not json").is_err());
    }

    #[test]
    fn default_clarke_constants() {
        let cfg = ScenarioConfig::scenario2();
        assert_eq!(cfg.d, 4);
        assert_eq!(cfg.latent_values, vec![5.0, 15.0, 30.0]);
        assert_eq!(cfg.clarke_constants.f_carrier, 2.9e9);
        assert_eq!(cfg.clarke_constants.t_s, 1e-3);
        assert_eq!(cfg.clarke_constants.c, 3e8);
        let half = ScenarioConfig { half_power_scenario2: true, ..cfg };
        assert_eq!(half.clarke().autocov(5.0, 0), 0.5);
    }
}

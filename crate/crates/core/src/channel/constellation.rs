use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};

/// Named signal sets accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    /// `{±1 ± i}`, radius √2 unless normalized.
    #[default]
    Qpsk,
    /// Square 16-QAM on the odd-integer grid `{±1, ±3}²`.
    Qam16,
    /// Real antipodal `{+1, -1}`.
    Bpsk,
}

/// A finite signal set with its prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    lifted: Vec<Vector2<f64>>,
    priors: Vec<f64>,
    log_priors: Vec<f64>,
    constant_modulus: bool,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>, priors: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(IceError::Config("constellation must contain at least one point".into()));
        }
        if points.len() != priors.len() {
            return Err(IceError::Config(format!(
                "{} constellation points but {} priors",
                points.len(),
                priors.len()
            )));
        }
        if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(IceError::Config("constellation priors must be finite and non-negative".into()));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(IceError::Config(format!("constellation priors sum to {total}, not 1")));
        }
        let lifted: Vec<_> = points.iter().map(|p| Vector2::new(p.re, p.im)).collect();
        let norms = lifted.iter().map(|x| x.norm());
        let (lo, hi) = norms.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| (lo.min(n), hi.max(n)));
        let log_priors = priors.iter().map(|p| p.ln()).collect();
        Ok(Self {
            points,
            lifted,
            priors,
            log_priors,
            constant_modulus: hi - lo < 1e-12,
        })
    }

    /// Equiprobable signal set.
    pub fn uniform(points: Vec<Complex64>) -> Result<Self> {
        let s = points.len().max(1);
        Self::new(points, vec![1.0 / s as f64; s])
    }

    pub fn from_kind(kind: ConstellationKind, normalize: bool) -> Self {
        match kind {
            ConstellationKind::Qpsk => Self::qpsk(normalize),
            ConstellationKind::Qam16 => Self::qam16(normalize),
            ConstellationKind::Bpsk => Self::bpsk(),
        }
    }

    /// QPSK `{1+i, -1+i, -1-i, 1-i}`; `normalize` divides by √2 (unit circle).
    pub fn qpsk(normalize: bool) -> Self {
        let scale = if normalize { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        let points = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(re, im)| Complex64::new(re * scale, im * scale))
            .collect();
        Self::uniform(points).expect("qpsk is well formed")
    }

    /// 16-QAM; `normalize` scales to unit average energy.
    pub fn qam16(normalize: bool) -> Self {
        let scale = if normalize { 1.0 / 10f64.sqrt() } else { 1.0 };
        let levels = [-3.0, -1.0, 1.0, 3.0];
        let points = levels
            .iter()
            .flat_map(|&im| levels.iter().map(move |&re| Complex64::new(re * scale, im * scale)))
            .collect();
        Self::uniform(points).expect("16-qam is well formed")
    }

    pub fn bpsk() -> Self {
        Self::uniform(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]).expect("bpsk is well formed")
    }

    /// Number of symbols `S`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Complex64 {
        self.points[i]
    }

    pub fn lifted(&self) -> &[Vector2<f64>] {
        &self.lifted
    }

    pub fn lifted_point(&self, i: usize) -> Vector2<f64> {
        self.lifted[i]
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }

    pub fn is_constant_modulus(&self) -> bool {
        self.constant_modulus
    }

    /// Draw a symbol index from the prior by inverse CDF on `u ∈ [0, 1)`.
    pub fn index_from_uniform(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding in the cumulative sum; fall back to the last supported symbol.
        self.priors.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Same points with their indices permuted: new index `j` holds old index `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(IceError::Config("permutation length does not match constellation".into()));
        }
        Self::new(
            perm.iter().map(|&i| self.points[i]).collect(),
            perm.iter().map(|&i| self.priors[i]).collect(),
        )
    }
}

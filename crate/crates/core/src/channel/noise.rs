use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{IceError, Result};
use crate::linalg::cholesky_jittered;

/// Per-real-component noise variance for an SNR given in dB (`SNR = 1/σ²`).
pub fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Receiver noise `z̃ ~ CN(0, Σ̃_z)` and its real lift `z ~ N(0, Σ_z)`,
/// `Σ_z = ½ diag(Σ̃_z, Σ̃_z)`.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    sigma2: f64,
    d: usize,
    isotropic: bool,
    sigma_tilde: DMatrix<f64>,
    sigma_tilde_inv: DMatrix<f64>,
    sigma_real: DMatrix<f64>,
    sigma_real_inv: DMatrix<f64>,
    sampler: DMatrix<f64>,
}

impl NoiseSpec {
    /// `Σ̃_z = 2σ² I_d`, hence `Σ_z = σ² I_{2d}`.
    pub fn isotropic(sigma2: f64, d: usize) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(IceError::Config(format!("noise variance must be positive and finite, got {sigma2}")));
        }
        if d == 0 {
            return Err(IceError::Config("antenna count d must be at least 1".into()));
        }
        let n = 2 * d;
        Ok(Self {
            sigma2,
            d,
            isotropic: true,
            sigma_tilde: DMatrix::identity(d, d) * (2.0 * sigma2),
            sigma_tilde_inv: DMatrix::identity(d, d) / (2.0 * sigma2),
            sigma_real: DMatrix::identity(n, n) * sigma2,
            sigma_real_inv: DMatrix::identity(n, n) / sigma2,
            sampler: DMatrix::identity(n, n) * sigma2.sqrt(),
        })
    }

    pub fn from_snr_db(snr_db: f64, d: usize) -> Result<Self> {
        Self::isotropic(sigma2_from_snr_db(snr_db), d)
    }

    /// General real symmetric positive-definite complex-noise covariance `Σ̃_z`.
    /// `sigma2` reports the average per-real-component variance `tr(Σ̃_z) / 2d`.
    pub fn with_complex_covariance(sigma_tilde: DMatrix<f64>) -> Result<Self> {
        let d = sigma_tilde.nrows();
        if d == 0 || sigma_tilde.ncols() != d {
            return Err(IceError::Config("complex noise covariance must be square and non-empty".into()));
        }
        if (&sigma_tilde - sigma_tilde.transpose()).amax() > 1e-12 * sigma_tilde.amax().max(1.0) {
            return Err(IceError::Config("complex noise covariance must be symmetric".into()));
        }
        let chol = nalgebra::Cholesky::new(sigma_tilde.clone())
            .ok_or_else(|| IceError::Numerical("complex noise covariance is not positive definite".into()))?;
        let sigma_tilde_inv = chol.inverse();
        let n = 2 * d;
        let mut sigma_real = DMatrix::zeros(n, n);
        let half = &sigma_tilde * 0.5;
        sigma_real.view_mut((0, 0), (d, d)).copy_from(&half);
        sigma_real.view_mut((d, d), (d, d)).copy_from(&half);
        let mut sigma_real_inv = DMatrix::zeros(n, n);
        let twice_inv = &sigma_tilde_inv * 2.0;
        sigma_real_inv.view_mut((0, 0), (d, d)).copy_from(&twice_inv);
        sigma_real_inv.view_mut((d, d), (d, d)).copy_from(&twice_inv);
        let sampler = cholesky_jittered(&sigma_real, "real noise covariance")?.l();
        Ok(Self {
            sigma2: sigma_tilde.trace() / (2.0 * d as f64),
            d,
            isotropic: false,
            sigma_tilde,
            sigma_tilde_inv,
            sigma_real,
            sigma_real_inv,
            sampler,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_isotropic(&self) -> bool {
        self.isotropic
    }

    /// Linear SNR `1/σ²`.
    pub fn snr(&self) -> f64 {
        1.0 / self.sigma2
    }

    pub fn sigma_tilde(&self) -> &DMatrix<f64> {
        &self.sigma_tilde
    }

    pub fn sigma_tilde_inv(&self) -> &DMatrix<f64> {
        &self.sigma_tilde_inv
    }

    /// `Σ_z` (2d × 2d).
    pub fn sigma_real(&self) -> &DMatrix<f64> {
        &self.sigma_real
    }

    /// `Σ_z⁻¹` (2d × 2d).
    pub fn sigma_real_inv(&self) -> &DMatrix<f64> {
        &self.sigma_real_inv
    }

    /// One real noise vector `z ~ N(0, Σ_z)` of length 2d.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let white = DVector::from_fn(2 * self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if self.isotropic {
            white * self.sigma2.sqrt()
        } else {
            &self.sampler * white
        }
    }
}

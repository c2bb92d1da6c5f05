//! Small dense linear-algebra and log-domain helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{IceError, Result};

/// Diagonal loading applied once when a covariance fails to factor.
pub const JITTER: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty slice
/// or when every entry is `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Cholesky factorization with a single `JITTER * I` retry.
///
/// `what` names the matrix in the error message.
pub fn cholesky_jittered(cov: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return Ok(chol);
    }
    let n = cov.nrows();
    let loaded = cov + DMatrix::<f64>::identity(n, n) * JITTER;
    Cholesky::new(loaded).ok_or_else(|| {
        let diag_min = cov.diagonal().min();
        let diag_max = cov.diagonal().max();
        IceError::Numerical(format!(
            "{what}: {n}x{n} matrix is not positive definite after jitter {JITTER:e} \
             (diagonal range [{diag_min:e}, {diag_max:e}])"
        ))
    })
}

/// A factored zero-mean Gaussian, reusable across many evaluations.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianFactor {
    pub fn new(cov: &DMatrix<f64>, what: &str) -> Result<Self> {
        let chol = cholesky_jittered(cov, what)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `log N(v; 0, cov)`.
    pub fn logpdf(&self, v: &DVector<f64>) -> f64 {
        let m = v.len() as f64;
        let white = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (m * LN_2PI + self.log_det + white.norm_squared())
    }

    /// `cov^{-1} b` through the triangular factors.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Lower-triangular factor `L` with `L L^T = cov` (jitter included if applied).
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Zero-mean Gaussian log-density `log N(v; 0, cov)` evaluated through a
/// triangular factorization of `cov`.
pub fn gaussian_logpdf(v: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if cov.nrows() != v.len() || cov.ncols() != v.len() {
        return Err(IceError::Config(format!(
            "gaussian_logpdf: vector of length {} against {}x{} covariance",
            v.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(GaussianFactor::new(cov, "gaussian_logpdf covariance")?.logpdf(v))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
            }
        }
    }
    out
}

/// Symmetric Toeplitz matrix `[r(|i-j|)]` of size `n`.
pub fn symmetric_toeplitz(lags: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| lags[i.abs_diff(j)])
}

use nalgebra::{DMatrix, DVector, Vector2};

use crate::channel::{embed_symbol_matrix, Constellation, NoiseSpec, Prompt, ScenarioKind};

/// How past symbol embeddings are stacked against the channel vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stacking {
    /// One channel shared by every time index: `X_past` is a vertical stack of `M^d(x_n)`.
    Vertical,
    /// One channel per time index: `X_past` is block diagonal.
    BlockDiagonal,
}

impl From<ScenarioKind> for Stacking {
    fn from(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Scenario1 => Stacking::Vertical,
            ScenarioKind::Scenario2 => Stacking::BlockDiagonal,
        }
    }
}

/// The past observations and symbols of a prompt, stacked time-major in blocks of 2d.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub stacking: Stacking,
    pub d: usize,
    pub y_past: Vec<DVector<f64>>,
    pub y_query: DVector<f64>,
    pub past_symbols: Vec<Vector2<f64>>,
}

impl StackedSystem {
    pub fn from_prompt(prompt: &Prompt, constellation: &Constellation, kind: ScenarioKind) -> Self {
        Self {
            stacking: kind.into(),
            d: prompt.d(),
            y_past: prompt.y_seq.clone(),
            y_query: prompt.y_query.clone(),
            past_symbols: prompt.s_seq.iter().map(|&s| constellation.lifted_point(s)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.y_past.len()
    }

    pub fn y_past_vector(&self) -> DVector<f64> {
        stack(&self.y_past)
    }

    /// `[y_past; y_query]`.
    pub fn y_full(&self) -> DVector<f64> {
        let mut all = self.y_past.clone();
        all.push(self.y_query.clone());
        stack(&all)
    }

    /// Past symbols followed by the candidate for the query.
    pub fn symbols_with(&self, candidate: Vector2<f64>) -> Vec<Vector2<f64>> {
        let mut all = self.past_symbols.clone();
        all.push(candidate);
        all
    }

    /// Dense `X_past`.
    pub fn x_past(&self) -> DMatrix<f64> {
        dense_embedding(&self.past_symbols, self.d, self.stacking)
    }

    /// Dense `X_full(i)` for the candidate symbol `x_i`.
    pub fn x_full(&self, candidate: Vector2<f64>) -> DMatrix<f64> {
        dense_embedding(&self.symbols_with(candidate), self.d, self.stacking)
    }
}

fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let total = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for b in blocks {
        out.rows_mut(offset, b.len()).copy_from(b);
        offset += b.len();
    }
    out
}

fn dense_embedding(symbols: &[Vector2<f64>], d: usize, stacking: Stacking) -> DMatrix<f64> {
    let b = 2 * d;
    let n = symbols.len();
    let cols = match stacking {
        Stacking::Vertical => b,
        Stacking::BlockDiagonal => b * n,
    };
    let mut out = DMatrix::zeros(b * n, cols);
    for (t, x) in symbols.iter().enumerate() {
        let col = match stacking {
            Stacking::Vertical => 0,
            Stacking::BlockDiagonal => t * b,
        };
        out.view_mut((t * b, col), (b, b)).copy_from(&embed_symbol_matrix(x, d));
    }
    out
}

/// Second-order model of the channel across time indices.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelCorrelation {
    /// `E[h_n h_mᵀ] = r(|n - m|) I_{2d}`; holds the lags `r(0), r(1), ...`.
    Stationary(Vec<f64>),
    /// Time-invariant channel with `E[h hᵀ] = K` (2d × 2d) at every pair of indices.
    Static(DMatrix<f64>),
}

impl ChannelCorrelation {
    /// `E[h_n h_mᵀ]` as a 2d × 2d block.
    pub fn block(&self, n: usize, m: usize, d: usize) -> DMatrix<f64> {
        match self {
            ChannelCorrelation::Stationary(lags) => DMatrix::identity(2 * d, 2 * d) * lags[n.abs_diff(m)],
            ChannelCorrelation::Static(k) => k.clone(),
        }
    }
}

/// `M^d(x_n) K_{nm} M^d(x_m)ᵀ` without forming the Kronecker products when `K_{nm}` is scalar.
fn signal_block(xn: &Vector2<f64>, xm: &Vector2<f64>, n: usize, m: usize, d: usize, corr: &ChannelCorrelation) -> DMatrix<f64> {
    match corr {
        ChannelCorrelation::Stationary(lags) => {
            // rot(x_n) rot(x_m)ᵀ is the rotation of x̃_n conj(x̃_m).
            let r = lags[n.abs_diff(m)];
            let re = (xn[0] * xm[0] + xn[1] * xm[1]) * r;
            let im = (xn[1] * xm[0] - xn[0] * xm[1]) * r;
            embed_symbol_matrix(&Vector2::new(re, im), d)
        }
        ChannelCorrelation::Static(k) => embed_symbol_matrix(xn, d) * k * embed_symbol_matrix(xm, d).transpose(),
    }
}

/// Covariance of the stacked observations `[y_0; ...; y_{T-1}]` given the symbols:
/// blocks `M(x_n) E[h_n h_mᵀ] M(x_m)ᵀ + δ_{nm} Σ_z`.
pub fn observation_covariance(symbols: &[Vector2<f64>], d: usize, corr: &ChannelCorrelation, noise: &NoiseSpec) -> DMatrix<f64> {
    let b = 2 * d;
    let n = symbols.len();
    let mut cov = DMatrix::zeros(b * n, b * n);
    for t in 0..n {
        for s in 0..=t {
            let mut block = signal_block(&symbols[t], &symbols[s], t, s, d, corr);
            if t == s {
                block += noise.sigma_real();
                cov.view_mut((t * b, t * b), (b, b)).copy_from(&block);
            } else {
                cov.view_mut((t * b, s * b), (b, b)).copy_from(&block);
                cov.view_mut((s * b, t * b), (b, b)).copy_from(&block.transpose());
            }
        }
    }
    cov
}

/// `E[h_q y_pastᵀ]` (2d × 2dk): blocks `E[h_q h_nᵀ] M(x_n)ᵀ`.
pub fn query_cross_covariance(past_symbols: &[Vector2<f64>], query_index: usize, d: usize, corr: &ChannelCorrelation) -> DMatrix<f64> {
    let b = 2 * d;
    let mut out = DMatrix::zeros(b, b * past_symbols.len());
    for (n, x) in past_symbols.iter().enumerate() {
        let block = corr.block(query_index, n, d) * embed_symbol_matrix(x, d).transpose();
        out.view_mut((0, n * b), (b, b)).copy_from(&block);
    }
    out
}

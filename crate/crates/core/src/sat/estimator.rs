use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{Constellation, NoiseSpec, Prompt};
use crate::error::{IceError, Result};
use crate::linalg::logsumexp;
use crate::oracle::Posterior;

/// The product `W = W_Qᵀ W_K` (2d × 2d); the only trainable part of the
/// single-layer attention estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub w: DMatrix<f64>,
}

impl AttentionWeights {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() % 2 != 0 || w.nrows() == 0 {
            return Err(IceError::Config(format!("attention weights must be 2d x 2d, got {:?}", w.shape())));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(IceError::Numerical("attention weights contain non-finite entries".into()));
        }
        Ok(Self { w })
    }

    pub fn zeros(d: usize) -> Self {
        Self { w: DMatrix::zeros(2 * d, 2 * d) }
    }

    pub fn scaled_identity(d: usize, scale: f64) -> Self {
        Self {
            w: DMatrix::identity(2 * d, 2 * d) * scale,
        }
    }

    /// `W = Σ_z⁻¹`, the choice that reproduces the true posterior asymptotically.
    pub fn noise_precision(noise: &NoiseSpec) -> Self {
        Self {
            w: noise.sigma_real_inv().clone(),
        }
    }

    pub fn d(&self) -> usize {
        self.w.nrows() / 2
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.w.transpose().iter().copied().collect()
    }

    pub fn from_row_major(dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(IceError::Config(format!("expected {} weight entries, got {}", dim * dim, values.len())));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    /// Full-token query/key/value matrices of size `(2d+S)²` realizing this `W`
    /// with `W_Q = I`, `W_K = W` and the value matrix passing only the label block.
    pub fn token_matrices(&self, s: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let b = self.w.nrows();
        let n = b + s;
        let mut wq = DMatrix::zeros(n, n);
        wq.view_mut((0, 0), (b, b)).fill_with_identity();
        let mut wk = DMatrix::zeros(n, n);
        wk.view_mut((0, 0), (b, b)).copy_from(&self.w);
        let mut wv = DMatrix::zeros(n, n);
        wv.view_mut((b, b), (s, s)).fill_with_identity();
        (wq, wk, wv)
    }
}

/// Tokens `u_n = [y_n; e_{s_n}]` for the context and `u_N = [y_q; 0]` for the query.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub tokens: Vec<DVector<f64>>,
    pub d: usize,
    pub s: usize,
}

impl TokenMatrix {
    pub fn from_prompt(prompt: &Prompt, s: usize) -> Self {
        let d = prompt.d();
        let b = 2 * d;
        let token = |y: &DVector<f64>, label: Option<usize>| {
            let mut u = DVector::zeros(b + s);
            u.rows_mut(0, b).copy_from(y);
            if let Some(l) = label {
                u[b + l] = 1.0;
            }
            u
        };
        let mut tokens: Vec<_> = prompt.y_seq.iter().zip(&prompt.s_seq).map(|(y, &l)| token(y, Some(l))).collect();
        tokens.push(token(&prompt.y_query, None));
        Self { tokens, d, s }
    }

    pub fn query(&self) -> &DVector<f64> {
        self.tokens.last().expect("token matrix always holds the query")
    }

    pub fn context(&self) -> &[DVector<f64>] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// Output token of one softmax-attention layer for the query position.
    /// `include_query` adds the query's attention to itself.
    pub fn attention_output(&self, wq: &DMatrix<f64>, wk: &DMatrix<f64>, wv: &DMatrix<f64>, include_query: bool) -> DVector<f64> {
        let q = wq * self.query();
        let keys: Vec<&DVector<f64>> = if include_query { self.tokens.iter().collect() } else { self.context().iter().collect() };
        let scores: Vec<f64> = keys.iter().map(|u| q.dot(&(wk * *u))).collect();
        let lse = logsumexp(&scores);
        keys.iter()
            .zip(&scores)
            .fold(DVector::zeros(self.tokens[0].len()), |acc, (u, a)| acc + wv * *u * (a - lse).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SatOptions {
    /// Let the query attend to itself; its value carries no label mass, so the
    /// label block then sums to less than one and is renormalized for scoring.
    pub include_query_self_term: bool,
}

/// Attention scores `a_n = y_qᵀ W y_n` over the context.
pub(crate) fn attention_scores(prompt: &Prompt, w: &AttentionWeights) -> DVector<f64> {
    let v = w.w.transpose() * &prompt.y_query;
    DVector::from_iterator(prompt.k(), prompt.y_seq.iter().map(|y| v.dot(y)))
}

/// `log Σ_{n: s_n = i} exp(a_n)` per label.
pub(crate) fn group_log_mass(scores: &DVector<f64>, labels: &[usize], s: usize) -> Vec<f64> {
    let mut max = vec![f64::NEG_INFINITY; s];
    for (a, &l) in scores.iter().zip(labels) {
        max[l] = max[l].max(*a);
    }
    let mut acc = vec![0.0; s];
    for (a, &l) in scores.iter().zip(labels) {
        acc[l] += (a - max[l]).exp();
    }
    max.iter()
        .zip(&acc)
        .map(|(m, a)| if *m == f64::NEG_INFINITY { f64::NEG_INFINITY } else { m + a.ln() })
        .collect()
}

fn check_prompt(prompt: &Prompt, w: &AttentionWeights, s: usize) -> Result<()> {
    if prompt.k() == 0 {
        return Err(IceError::Inapplicable("SAT requires at least one example".into()));
    }
    if w.w.nrows() != prompt.y_query.len() {
        return Err(IceError::Config(format!(
            "attention weights are {}x{} but observations have length {}",
            w.w.nrows(),
            w.w.ncols(),
            prompt.y_query.len()
        )));
    }
    if let Some(bad) = prompt.s_seq.iter().find(|&&l| l >= s) {
        return Err(IceError::Config(format!("label {bad} outside a signal set of size {s}")));
    }
    Ok(())
}

/// Label block of the attention output, in the log domain. Sums to one unless
/// the query self-term is included.
pub fn sat_output_log(prompt: &Prompt, w: &AttentionWeights, s: usize, opts: SatOptions) -> Result<Vec<f64>> {
    check_prompt(prompt, w, s)?;
    let scores = attention_scores(prompt, w);
    let groups = group_log_mass(&scores, &prompt.s_seq, s);
    let mut all: Vec<f64> = groups.clone();
    if opts.include_query_self_term {
        all.push(prompt.y_query.dot(&(&w.w * &prompt.y_query)));
    }
    let norm = logsumexp(&all);
    Ok(groups.into_iter().map(|g| g - norm).collect())
}

/// Finite-context attention posterior
/// `p_i = Σ_{n: s_n = i} exp(y_qᵀ W y_n) / Σ_n exp(y_qᵀ W y_n)`.
pub fn sat_posterior(prompt: &Prompt, w: &AttentionWeights, s: usize) -> Result<Posterior> {
    sat_posterior_with(prompt, w, s, SatOptions::default())
}

pub fn sat_posterior_with(prompt: &Prompt, w: &AttentionWeights, s: usize, opts: SatOptions) -> Result<Posterior> {
    Ok(Posterior::from_log_scores(sat_output_log(prompt, w, s, opts)?))
}

/// Large-context limit `p_i ∝ ρ_i exp(y_qᵀ W H x_i)`.
pub fn sat_posterior_limit(y_q: &DVector<f64>, h: &DMatrix<f64>, w: &AttentionWeights, constellation: &Constellation) -> Posterior {
    let v = w.w.transpose() * y_q;
    Posterior::from_log_scores(
        constellation
            .lifted()
            .iter()
            .zip(constellation.log_priors())
            .map(|(x, lp)| lp + v.dot(&(h * x)))
            .collect(),
    )
}

/// Pointwise convexity of `W ↦ −log p_i(y_q, H; W)` (large-context posterior) along
/// the segment `λ W1 + (1−λ) W2`, checked for every symbol `i` with slack `1e-9`.
pub fn convexity_probe(
    y_q: &DVector<f64>,
    h: &DMatrix<f64>,
    w1: &AttentionWeights,
    w2: &AttentionWeights,
    lambda: f64,
    constellation: &Constellation,
) -> bool {
    let mixed = AttentionWeights {
        w: &w1.w * lambda + &w2.w * (1.0 - lambda),
    };
    let p1 = sat_posterior_limit(y_q, h, w1, constellation);
    let p2 = sat_posterior_limit(y_q, h, w2, constellation);
    let pm = sat_posterior_limit(y_q, h, &mixed, constellation);
    (0..constellation.len()).all(|i| -pm.log_prob(i) <= lambda * -p1.log_prob(i) + (1.0 - lambda) * -p2.log_prob(i) + 1e-9)
}

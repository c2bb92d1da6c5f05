use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use super::constellation::Constellation;
use super::noise::NoiseSpec;
use super::scenario::{ChannelRealization, ScenarioConfig};
use crate::error::{IceError, Result};

/// `k` in-context pairs `(y_n, s_n)` and a query `y_q` whose symbol is held out.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub y_seq: Vec<DVector<f64>>,
    pub s_seq: Vec<usize>,
    pub y_query: DVector<f64>,
    pub s_query_truth: usize,
    /// Channel over time indices `0..=k`; the query sits at index `k`.
    pub realization: Arc<ChannelRealization>,
}

impl Prompt {
    /// Number of context examples.
    pub fn k(&self) -> usize {
        self.y_seq.len()
    }

    pub fn d(&self) -> usize {
        self.y_query.len() / 2
    }

    pub fn theta(&self) -> f64 {
        self.realization.theta
    }

    /// Prefix view: the first `k` examples as context and observation `k` as the query.
    pub fn truncate(&self, k: usize) -> Result<Prompt> {
        let full = self.k();
        if k > full {
            return Err(IceError::Config(format!("cannot truncate a prompt with {full} examples to {k}")));
        }
        if k == full {
            return Ok(self.clone());
        }
        Ok(Prompt {
            y_seq: self.y_seq[..k].to_vec(),
            s_seq: self.s_seq[..k].to_vec(),
            y_query: self.y_seq[k].clone(),
            s_query_truth: self.s_seq[k],
            realization: Arc::new(self.realization.truncated(k + 1)),
        })
    }

    /// Same prompt with the context examples reordered by `perm` (the channel
    /// is left untouched, so this is only meaningful for time-invariant channels).
    pub fn permuted_context(&self, perm: &[usize]) -> Prompt {
        Prompt {
            y_seq: perm.iter().map(|&i| self.y_seq[i].clone()).collect(),
            s_seq: perm.iter().map(|&i| self.s_seq[i]).collect(),
            ..self.clone()
        }
    }

    pub fn to_record(&self) -> PromptRecord {
        let n_len = self.k() + 1;
        PromptRecord {
            theta: self.theta(),
            aoa: self.realization.aoa,
            k: self.k(),
            y_seq: self.y_seq.iter().map(|v| v.iter().copied().collect()).collect(),
            s_seq: self.s_seq.clone(),
            y_query: self.y_query.iter().copied().collect(),
            s_query: self.s_query_truth,
            h_real: (0..self.realization.stored_len().min(n_len))
                .map(|n| self.realization.real_vector_at(n).iter().copied().collect())
                .collect(),
        }
    }
}

/// Flat serializable view of a prompt, one JSON object per line in dataset files.
#[derive(Debug, Clone, Serialize)]
pub struct PromptRecord {
    pub theta: f64,
    pub aoa: Option<f64>,
    pub k: usize,
    pub y_seq: Vec<Vec<f64>>,
    pub s_seq: Vec<usize>,
    pub y_query: Vec<f64>,
    pub s_query: usize,
    /// `[Re h̃_n; Im h̃_n]` per stored time index.
    pub h_real: Vec<Vec<f64>>,
}

/// Observations `y_n = H_n x_{s_n} + z_n` for `n = 0..=k` on a given channel.
pub fn sample_prompt_on_channel<R: Rng + ?Sized>(
    realization: Arc<ChannelRealization>,
    k: usize,
    constellation: &Constellation,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Prompt {
    let mut y_seq = Vec::with_capacity(k);
    let mut s_seq = Vec::with_capacity(k);
    for n in 0..=k {
        let s = constellation.index_from_uniform(rng.gen());
        let z = noise.sample(rng);
        let y = realization.lifted_at(n) * constellation.lifted_point(s) + z;
        y_seq.push(y);
        s_seq.push(s);
    }
    let y_query = y_seq.pop().expect("at least the query was drawn");
    let s_query_truth = s_seq.pop().expect("at least the query was drawn");
    Prompt {
        y_seq,
        s_seq,
        y_query,
        s_query_truth,
        realization,
    }
}

/// Draw θ from the latent prior, a channel over `k + 1` indices, and the prompt.
pub fn sample_prompt<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    k: usize,
    constellation: &Constellation,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Prompt> {
    if noise.d() != config.d {
        return Err(IceError::Config(format!("noise has d = {} but scenario has d = {}", noise.d(), config.d)));
    }
    let theta = config.draw_latent(rng);
    let realization = Arc::new(config.draw_channel(theta, k + 1, rng)?);
    Ok(sample_prompt_on_channel(realization, k, constellation, noise, rng))
}

//! Cross-entropy of the finite-context attention posterior and its exact gradient in `W`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::estimator::{attention_scores, sat_posterior, AttentionWeights};
use crate::channel::Prompt;
use crate::error::{IceError, Result};
use crate::linalg::logsumexp;

/// Posterior entries are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-300;

/// Loss and gradient contribution of one prompt.
///
/// With `a_n = y_qᵀ W y_n`, `−log p_{s_q} = lse_n a_n − lse_{n ∈ S_{s_q}} a_n`, whose gradient is
/// `y_q (ȳ − ȳ_{s_q})ᵀ` where `ȳ` and `ȳ_{s_q}` are the attention-weighted means of the
/// context observations over all examples and over the true label's group.
pub fn prompt_loss_and_gradient(prompt: &Prompt, w: &AttentionWeights, s: usize) -> Result<(f64, DMatrix<f64>)> {
    // Shape and label checks.
    sat_posterior(prompt, w, s)?;
    if prompt.s_query_truth >= s {
        return Err(IceError::Config(format!("query label {} outside a signal set of size {s}", prompt.s_query_truth)));
    }
    let scores = attention_scores(prompt, w);
    let lse_all = logsumexp(scores.as_slice());
    let group: Vec<usize> = (0..prompt.k()).filter(|&n| prompt.s_seq[n] == prompt.s_query_truth).collect();
    let group_scores: Vec<f64> = group.iter().map(|&n| scores[n]).collect();
    let lse_group = logsumexp(&group_scores);
    let log_p = lse_group - lse_all;
    let dim = w.w.nrows();
    if !(log_p >= PROB_FLOOR.ln()) {
        return Ok((-PROB_FLOOR.ln(), DMatrix::zeros(dim, dim)));
    }
    let mean_all = prompt
        .y_seq
        .iter()
        .zip(scores.iter())
        .fold(DVector::zeros(dim), |acc, (y, a)| acc + y * (a - lse_all).exp());
    let mean_group = group
        .iter()
        .fold(DVector::zeros(dim), |acc, &n| acc + &prompt.y_seq[n] * (scores[n] - lse_group).exp());
    Ok((-log_p, &prompt.y_query * (mean_all - mean_group).transpose()))
}

fn prompt_loss(prompt: &Prompt, w: &AttentionWeights, s: usize) -> Result<f64> {
    let post = sat_posterior(prompt, w, s)?;
    if prompt.s_query_truth >= s {
        return Err(IceError::Config(format!("query label {} outside a signal set of size {s}", prompt.s_query_truth)));
    }
    Ok(-post.log_prob(prompt.s_query_truth).max(PROB_FLOOR.ln()))
}

/// Mean `−log p^N_{s_q}` over the batch.
pub fn cross_entropy_loss(batch: &[Prompt], w: &AttentionWeights, s: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(IceError::Config("empty prompt batch".into()));
    }
    let terms = batch.par_iter().map(|p| prompt_loss(p, w, s)).collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum::<f64>() / batch.len() as f64)
}

/// Mean loss and its gradient with respect to `W`.
pub fn loss_and_gradient(batch: &[Prompt], w: &AttentionWeights, s: usize) -> Result<(f64, DMatrix<f64>)> {
    if batch.is_empty() {
        return Err(IceError::Config("empty prompt batch".into()));
    }
    let terms = batch
        .par_iter()
        .map(|p| prompt_loss_and_gradient(p, w, s))
        .collect::<Result<Vec<_>>>()?;
    let dim = w.w.nrows();
    let (loss, grad) = terms
        .into_iter()
        .fold((0.0, DMatrix::zeros(dim, dim)), |(l, g), (pl, pg)| (l + pl, g + pg));
    let t = batch.len() as f64;
    Ok((loss / t, grad / t))
}

pub fn loss_gradient(batch: &[Prompt], w: &AttentionWeights, s: usize) -> Result<DMatrix<f64>> {
    Ok(loss_and_gradient(batch, w, s)?.1)
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimator::AttentionWeights;
use super::loss::{cross_entropy_loss, loss_and_gradient};
use crate::channel::{sample_prompt, Prompt, ScenarioConfig};
use crate::error::{IceError, Result};
use crate::rng::{stream_rng, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zero,
    ScaledIdentity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Context examples per training prompt.
    pub context_len: usize,
    /// Gradient steps, each on a fresh batch.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init: Init,
    /// Size of the fixed held-out set scored after every step.
    pub eval_prompts: usize,
    /// Halve the learning rate whenever the held-out loss goes up.
    pub halve_on_increase: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            context_len: 700,
            epochs: 1000,
            batch_size: 128,
            learning_rate: 0.01,
            init: Init::Zero,
            eval_prompts: 1024,
            halve_on_increase: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.context_len == 0 || self.batch_size == 0 || self.eval_prompts == 0 {
            return Err(IceError::Config("context_len, batch_size and eval_prompts must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(IceError::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Loss on the step's training batch, before the update.
    pub train_ce: f64,
    /// Held-out loss after the update.
    pub eval_ce: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: AttentionWeights,
    pub initial_eval_ce: f64,
    pub trace: Vec<TraceRow>,
}

impl TrainOutcome {
    /// `epoch,train_ce,eval_ce` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("epoch,train_ce,eval_ce\n");
        for row in &self.trace {
            out.push_str(&format!("{},{:.12e},{:.12e}\n", row.epoch, row.train_ce, row.eval_ce));
        }
        out
    }
}

/// On-disk form of trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub d: usize,
    #[serde(rename = "S")]
    pub s: usize,
    /// Row-major `2d × 2d` entries.
    pub w: Vec<f64>,
    pub train_config: TrainConfig,
    pub seed: u64,
}

impl WeightsFile {
    pub fn new(weights: &AttentionWeights, s: usize, train_config: TrainConfig, seed: u64) -> Self {
        Self {
            d: weights.d(),
            s,
            w: weights.row_major(),
            train_config,
            seed,
        }
    }

    pub fn weights(&self) -> Result<AttentionWeights> {
        AttentionWeights::from_row_major(2 * self.d, &self.w)
    }
}

fn prompts(scenario: &ScenarioConfig, k: usize, count: usize, seed: u64, domain: Domain, offset: u64) -> Result<Vec<Prompt>> {
    let constellation = scenario.constellation();
    let noise = scenario.noise()?;
    (0..count)
        .into_par_iter()
        .map(|j| sample_prompt(scenario, k, &constellation, &noise, &mut stream_rng(seed, domain, offset + j as u64)))
        .collect()
}

/// The fixed evaluation prompts used by [`train`] for a given seed.
pub fn held_out_set(scenario: &ScenarioConfig, cfg: &TrainConfig, seed: u64) -> Result<Vec<Prompt>> {
    prompts(scenario, cfg.context_len, cfg.eval_prompts, seed, Domain::HeldOut, 0)
}

/// Gradient descent on the cross-entropy with a fresh batch of prompts per step.
pub fn train(scenario: &ScenarioConfig, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    scenario.validate()?;
    cfg.validate()?;
    let s = scenario.constellation().len();
    let mut weights = match cfg.init {
        Init::Zero => AttentionWeights::zeros(scenario.d),
        Init::ScaledIdentity(scale) => AttentionWeights::scaled_identity(scenario.d, scale),
    };
    let held_out = held_out_set(scenario, cfg, seed)?;
    let initial_eval_ce = cross_entropy_loss(&held_out, &weights, s)?;
    let mut lr = cfg.learning_rate;
    let mut previous = initial_eval_ce;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let offset = (epoch as u64) * cfg.batch_size as u64;
        let batch = prompts(scenario, cfg.context_len, cfg.batch_size, seed, Domain::TrainBatch, offset)?;
        let (train_ce, grad) = loss_and_gradient(&batch, &weights, s)?;
        let stepped = &weights.w - grad * lr;
        if !train_ce.is_finite() || stepped.iter().any(|v| !v.is_finite()) {
            return Err(IceError::Numerical(format!(
                "training diverged at step {epoch} with learning rate {lr:e} (batch loss {train_ce})"
            )));
        }
        weights = AttentionWeights { w: stepped };
        let eval_ce = cross_entropy_loss(&held_out, &weights, s)?;
        if !eval_ce.is_finite() {
            return Err(IceError::Numerical(format!(
                "held-out loss is {eval_ce} at step {epoch} with learning rate {lr:e}"
            )));
        }
        trace.push(TraceRow {
            epoch,
            train_ce,
            eval_ce,
            learning_rate: lr,
        });
        if cfg.halve_on_increase && eval_ce > previous {
            lr *= 0.5;
        }
        previous = eval_ce;
    }
    Ok(TrainOutcome {
        weights,
        initial_eval_ce,
        trace,
    })
}

/// Trailing moving average; entry `i` averages `values[i+1-window..=i]` (shorter at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

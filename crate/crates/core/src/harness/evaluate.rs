use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{ca_post, context_posteriors, h_lmmse, h_mmse, point_estimate_posterior, StackedSystem};
use crate::channel::{sample_prompt, Constellation, NoiseSpec, Prompt, ScenarioConfig};
use crate::error::{IceError, Result};
use crate::oracle::Posterior;
use crate::rng::{stream_rng, Domain};
use crate::sat::{sat_posterior, sat_posterior_limit, AttentionWeights, PROB_FLOOR};

/// 90% two-sided normal quantile.
pub const Z90: f64 = 1.645;

/// Scored posteriors must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-8;

pub const CSV_HEADER: &str = "estimator,k,ce_mean,ce_ci90,acc_pct,trials";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EstimatorKind {
    CaPost,
    CuPost,
    CuPostHMmse,
    CuPostHLmmse,
    Sat,
    SatLimit,
    /// Ignores the data and returns the symbol prior.
    Uniform,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::CaPost,
        EstimatorKind::CuPost,
        EstimatorKind::CuPostHMmse,
        EstimatorKind::CuPostHLmmse,
        EstimatorKind::Sat,
        EstimatorKind::SatLimit,
        EstimatorKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::CaPost => "ca-post",
            EstimatorKind::CuPost => "cu-post",
            EstimatorKind::CuPostHMmse => "cu-post-h-mmse",
            EstimatorKind::CuPostHLmmse => "cu-post-h-lmmse",
            EstimatorKind::Sat => "sat",
            EstimatorKind::SatLimit => "sat-limit",
            EstimatorKind::Uniform => "uniform",
        }
    }

    /// Parses a comma-separated list, rejecting unknown names and duplicates.
    pub fn parse_list(list: &str) -> Result<Vec<EstimatorKind>> {
        let mut out = Vec::new();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: EstimatorKind = name.parse()?;
            if out.contains(&kind) {
                return Err(IceError::Config(format!("estimator '{name}' listed twice")));
            }
            out.push(kind);
        }
        if out.is_empty() {
            return Err(IceError::Config("empty estimator list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = IceError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let known: Vec<_> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
            IceError::Config(format!("unknown estimator '{s}' (expected one of {})", known.join(", ")))
        })
    }
}

/// Which estimators to score, plus the attention weights used by the SAT ones.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub kinds: Vec<EstimatorKind>,
    /// Defaults to the noise precision `Σ_z⁻¹` when absent.
    pub sat_weights: Option<AttentionWeights>,
}

impl EstimatorSpec {
    pub fn new(kinds: Vec<EstimatorKind>) -> Self {
        Self { kinds, sat_weights: None }
    }

    pub fn with_sat_weights(mut self, w: AttentionWeights) -> Self {
        self.sat_weights = Some(w);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub k_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// Score one prompt of length `k_max` at every prefix `k` (default), or draw
    /// an independent prompt for each `k`.
    pub prefix_truncation: bool,
}

impl EvalOptions {
    pub fn new(k_max: usize, trials: usize, seed: u64) -> Self {
        Self {
            k_max,
            trials,
            seed,
            prefix_truncation: true,
        }
    }
}

/// Statistics of one (estimator, k) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalCell {
    pub k: usize,
    /// Mean of `−log p[s_q]`, in nats.
    pub ce_mean: f64,
    /// Half-width of the 90% normal-approximation interval.
    pub ce_ci90: f64,
    pub ce_se: f64,
    pub acc_pct: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub estimator: EstimatorKind,
    /// Indexed by `k`; `None` where the estimator does not apply (SAT at `k = 0`).
    pub cells: Vec<Option<EvalCell>>,
}

impl EvalResult {
    pub fn cell(&self, k: usize) -> Option<&EvalCell> {
        self.cells.get(k).and_then(Option::as_ref)
    }
}

/// Argmax of the posterior equals the transmitted index (ties go to the lowest index).
pub fn map_accuracy(posterior: &Posterior, s_true: usize) -> bool {
    posterior.map_index() == s_true
}

/// `(−log p[s_q], MAP correct)` for one scored posterior.
type Score = (f64, bool);

struct Scorer<'a> {
    config: &'a ScenarioConfig,
    noise: NoiseSpec,
    constellation: Constellation,
    sat_weights: AttentionWeights,
    kinds: &'a [EstimatorKind],
}

impl Scorer<'_> {
    fn score_prompt(&self, prompt: &Prompt) -> Result<Vec<Option<Score>>> {
        let c = &self.constellation;
        let wants = |kind| self.kinds.contains(&kind);
        // CU-Post needs the likelihoods under every latent value; CA-Post alone
        // only under the true one.
        let (aware, unaware) = if wants(EstimatorKind::CuPost) {
            let both = context_posteriors(prompt, self.config, &self.noise, c)?;
            (Some(both.aware), Some(both.unaware))
        } else if wants(EstimatorKind::CaPost) {
            (Some(ca_post(prompt, prompt.theta(), self.config, &self.noise, c)?), None)
        } else {
            (None, None)
        };
        let sys = StackedSystem::from_prompt(prompt, c, self.config.kind);
        let mut out = Vec::with_capacity(self.kinds.len());
        for &kind in self.kinds {
            let posterior = match kind {
                EstimatorKind::CaPost => aware.clone(),
                EstimatorKind::CuPost => unaware.clone(),
                EstimatorKind::CuPostHMmse => {
                    let est = h_mmse(&sys, self.config, &self.noise)?;
                    Some(point_estimate_posterior(&prompt.y_query, &est.h, &self.noise, c))
                }
                EstimatorKind::CuPostHLmmse => {
                    let est = h_lmmse(&sys, self.config, &self.noise)?;
                    Some(point_estimate_posterior(&prompt.y_query, &est.h, &self.noise, c))
                }
                EstimatorKind::Sat => match sat_posterior(prompt, &self.sat_weights, c.len()) {
                    Ok(p) => Some(p),
                    Err(IceError::Inapplicable(_)) => None,
                    Err(e) => return Err(e),
                },
                EstimatorKind::SatLimit => {
                    let h = prompt.realization.lifted_at(prompt.k());
                    Some(sat_posterior_limit(&prompt.y_query, h, &self.sat_weights, c))
                }
                EstimatorKind::Uniform => Some(Posterior::from_log_scores(c.log_priors().to_vec())),
            };
            out.push(match posterior {
                None => None,
                Some(p) => {
                    let total = p.log_total();
                    if !(total.abs() <= NORMALIZATION_TOL) {
                        return Err(IceError::Numerical(format!(
                            "{kind} posterior at k = {} sums to {} instead of 1",
                            prompt.k(),
                            total.exp()
                        )));
                    }
                    let s = prompt.s_query_truth;
                    // A label absent from the context gets zero attention mass.
                    Some((-p.log_prob(s).max(PROB_FLOOR.ln()), map_accuracy(&p, s)))
                }
            });
        }
        Ok(out)
    }
}

/// Monte Carlo cross-entropy and MAP accuracy of each estimator for `k = 0..=k_max`.
///
/// Trial `t` draws from its own random stream, so the result does not depend on
/// how trials are spread over threads; the reduction runs in trial order.
pub fn evaluate_curve(config: &ScenarioConfig, spec: &EstimatorSpec, opts: &EvalOptions) -> Result<Vec<EvalResult>> {
    config.validate()?;
    if opts.trials == 0 {
        return Err(IceError::Config("at least one trial is required".into()));
    }
    let noise = config.noise()?;
    let constellation = config.constellation();
    let sat_weights = match &spec.sat_weights {
        Some(w) if w.d() != config.d => {
            return Err(IceError::Config(format!(
                "attention weights are for d = {} but the scenario has d = {}",
                w.d(),
                config.d
            )))
        }
        Some(w) => w.clone(),
        None => AttentionWeights::noise_precision(&noise),
    };
    let scorer = Scorer {
        config,
        noise,
        constellation,
        sat_weights,
        kinds: &spec.kinds,
    };
    let n_k = opts.k_max + 1;
    // per_trial[t][k][estimator]
    let per_trial: Vec<Vec<Vec<Option<Score>>>> = (0..opts.trials)
        .into_par_iter()
        .map(|t| -> Result<_> {
            if opts.prefix_truncation {
                let mut rng = stream_rng(opts.seed, Domain::Evaluation, t as u64);
                let full = sample_prompt(config, opts.k_max, &scorer.constellation, &scorer.noise, &mut rng)?;
                (0..n_k).map(|k| scorer.score_prompt(&full.truncate(k)?)).collect()
            } else {
                (0..n_k)
                    .map(|k| {
                        let mut rng = stream_rng(opts.seed, Domain::Evaluation, (t * n_k + k) as u64);
                        let prompt = sample_prompt(config, k, &scorer.constellation, &scorer.noise, &mut rng)?;
                        scorer.score_prompt(&prompt)
                    })
                    .collect()
            }
        })
        .collect::<Result<_>>()?;

    Ok(spec
        .kinds
        .iter()
        .enumerate()
        .map(|(e, &estimator)| EvalResult {
            estimator,
            cells: (0..n_k)
                .map(|k| {
                    let scores: Vec<Score> = per_trial.iter().filter_map(|trial| trial[k][e]).collect();
                    summarize(k, &scores)
                })
                .collect(),
        })
        .collect())
}

fn summarize(k: usize, scores: &[Score]) -> Option<EvalCell> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.0).sum::<f64>() / n;
    let var = if scores.len() > 1 {
        scores.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    let hits = scores.iter().filter(|s| s.1).count();
    Some(EvalCell {
        k,
        ce_mean: mean,
        ce_ci90: Z90 * se,
        ce_se: se,
        acc_pct: 100.0 * hits as f64 / n,
        trials: scores.len(),
    })
}

/// CSV with a units comment line, the fixed header, then one row per
/// (estimator, k). Absent cells are written as `NA` with zero trials.
pub fn results_csv(results: &[EvalResult]) -> String {
    let mut out = String::from("# ce_mean and ce_ci90 in nats (natural log); ce_ci90 is the 90% normal-approximation half-width\n");
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in results {
        for (k, cell) in r.cells.iter().enumerate() {
            match cell {
                Some(c) => writeln!(
                    out,
                    "{},{},{:.10},{:.10},{:.4},{}",
                    r.estimator, k, c.ce_mean, c.ce_ci90, c.acc_pct, c.trials
                ),
                None => writeln!(out, "{},{},NA,NA,NA,0", r.estimator, k),
            }
            .expect("writing to a String");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_s2() -> ScenarioConfig {
        ScenarioConfig { d: 2, ..ScenarioConfig::scenario2() }
    }

    #[test]
    fn map_accuracy_examples() {
        assert!(map_accuracy(&Posterior::from_probs(&[0.1, 0.6, 0.2, 0.1]), 1));
        assert!(map_accuracy(&Posterior::uniform(4), 0));
        assert!(!map_accuracy(&Posterior::uniform(4), 1));
    }

    #[test]
    fn parse_estimators() {
        let kinds = EstimatorKind::parse_list("ca-post, sat,cu-post-h-lmmse").unwrap();
        assert_eq!(kinds, vec![EstimatorKind::CaPost, EstimatorKind::Sat, EstimatorKind::CuPostHLmmse]);
        assert!(EstimatorKind::parse_list("ca-post,bogus").is_err());
        assert!(EstimatorKind::parse_list("sat,sat").is_err());
        assert!(EstimatorKind::parse_list("").is_err());
    }

    #[test]
    fn uniform_estimator_scores_log_s() {
        let cfg = small_s2();
        let res = evaluate_curve(&cfg, &EstimatorSpec::new(vec![EstimatorKind::Uniform]), &EvalOptions::new(3, 400, 1)).unwrap();
        for cell in res[0].cells.iter().flatten() {
            assert!((cell.ce_mean - 4f64.ln()).abs() < 1e-12);
            assert!(cell.ce_ci90 < 1e-12);
            // uniform ties resolve to index 0, hit with probability 1/4
            assert!((cell.acc_pct - 25.0).abs() < 7.0, "{}", cell.acc_pct);
        }
    }

    #[test]
    fn sat_at_zero_context_is_absent() {
        let res = evaluate_curve(&small_s2(), &EstimatorSpec::new(vec![EstimatorKind::Sat]), &EvalOptions::new(2, 5, 2)).unwrap();
        assert!(res[0].cell(0).is_none());
        assert_eq!(res[0].cell(1).unwrap().trials, 5);
        let csv = results_csv(&res);
        assert!(csv.contains("\nsat,0,NA,NA,NA,0\n"), "{csv}");
    }

    #[test]
    fn csv_layout() {
        let res = evaluate_curve(
            &small_s2(),
            &EstimatorSpec::new(vec![EstimatorKind::CaPost, EstimatorKind::CuPost]),
            &EvalOptions::new(0, 10, 3),
        )
        .unwrap();
        let csv = results_csv(&res);
        let lines: Vec<_> = csv.lines().collect();
        assert!(lines[0].starts_with('#') && lines[0].contains("nats"));
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("ca-post,0,"));
        assert!(lines[2].ends_with(",10"));
    }

    #[test]
    fn independent_prompts_mode_differs_but_is_reproducible() {
        let cfg = small_s2();
        let spec = EstimatorSpec::new(vec![EstimatorKind::CaPost]);
        let mut opts = EvalOptions::new(2, 20, 4);
        opts.prefix_truncation = false;
        let a = evaluate_curve(&cfg, &spec, &opts).unwrap();
        assert_eq!(a, evaluate_curve(&cfg, &spec, &opts).unwrap());
        opts.prefix_truncation = true;
        assert_ne!(a, evaluate_curve(&cfg, &spec, &opts).unwrap());
    }

    #[test]
    fn mismatched_weights_rejected() {
        let spec = EstimatorSpec::new(vec![EstimatorKind::Sat]).with_sat_weights(AttentionWeights::zeros(3));
        assert!(matches!(
            evaluate_curve(&small_s2(), &spec, &EvalOptions::new(1, 1, 0)),
            Err(IceError::Config(_))
        ));
    }
}

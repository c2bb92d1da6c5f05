//! Statistics behind the invariant suite. Each function is
//! deterministic in its seed and sequential, so reports are reproducible
//! byte for byte; `verify` runs them at small scale.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{ca_post, cu_post};
use crate::channel::{
    draw_channel_scenario2, lift_complex_vector, sample_prompt, sample_prompt_on_channel, ChannelRealization, ClarkeModel,
    Constellation, NoiseSpec, Prompt, ScenarioConfig,
};
use crate::error::Result;
use crate::oracle::{binary_tanh_estimate, true_posterior};
use crate::rng::{stream_rng, Domain};
use crate::sat::{convexity_probe, cross_entropy_loss, loss_gradient, sat_posterior, sat_posterior_limit, AttentionWeights};

/// Sub-streams of the verification domain, one per check.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Check {
    Expressivity = 1,
    Convexity = 2,
    Minimizer = 3,
    Degenerate = 4,
    Binary = 5,
    Gradient = 6,
    Clarke = 7,
    Convergence = 8,
    Normalization = 9,
}

fn rng_for(seed: u64, check: Check, i: u64) -> ChaCha8Rng {
    stream_rng(seed, Domain::Verification, ((check as u64) << 40) | i)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `CN(0, I)` vector of length `d`.
fn complex_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let s = 0.5f64.sqrt();
    (0..d).map(|_| Complex64::new(s * normal(rng), s * normal(rng))).collect()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| scale * normal(rng))
}

/// A random instance `(H, y_q, noise)` with `d ∈ 1..=4` and `σ²` log-uniform on `[1e-2, 10]`.
pub struct RandomInstance {
    pub h: DMatrix<f64>,
    pub y_q: DVector<f64>,
    pub s_q: usize,
    pub noise: NoiseSpec,
}

fn random_instance(rng: &mut ChaCha8Rng, c: &Constellation) -> Result<RandomInstance> {
    let d = rng.gen_range(1..=4);
    let sigma2 = 10f64.powf(rng.gen_range(-2.0..1.0));
    let noise = NoiseSpec::isotropic(sigma2, d)?;
    let h = lift_complex_vector(&complex_gaussian(rng, d));
    let s_q = c.index_from_uniform(rng.gen());
    let y_q = &h * c.lifted_point(s_q) + noise.sample(rng);
    Ok(RandomInstance { h, y_q, s_q, noise })
}

/// Largest `KL(true ‖ SAT limit at W = Σ_z⁻¹)` over `n` random instances.
pub fn expressivity_max_kl(n: usize, constellation: &Constellation, seed: u64) -> Result<f64> {
    let mut worst = 0f64;
    for i in 0..n {
        let mut rng = rng_for(seed, Check::Expressivity, i as u64);
        let inst = random_instance(&mut rng, constellation)?;
        let truth = true_posterior(&inst.y_q, &inst.h, &inst.noise, constellation);
        let w = AttentionWeights::noise_precision(&inst.noise);
        let sat = sat_posterior_limit(&inst.y_q, &inst.h, &w, constellation);
        worst = worst.max(truth.kl_divergence(&sat));
    }
    Ok(worst)
}

/// Number of failed convexity probes among `n` random `(H, y_q, W1, W2, λ)`.
pub fn convexity_failures(n: usize, seed: u64) -> Result<usize> {
    let c = Constellation::qpsk(true);
    let mut failures = 0;
    for i in 0..n {
        let mut rng = rng_for(seed, Check::Convexity, i as u64);
        let inst = random_instance(&mut rng, &c)?;
        let dim = inst.h.nrows();
        let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
        let w1 = AttentionWeights::new(gaussian_matrix(&mut rng, dim, scale))?;
        let w2 = AttentionWeights::new(gaussian_matrix(&mut rng, dim, scale))?;
        let lambda = rng.gen::<f64>();
        if !convexity_probe(&inst.y_q, &inst.h, &w1, &w2, lambda, &c) {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Paired Monte Carlo comparison of the large-context loss at a candidate `W`
/// against `W = Σ_z⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComparison {
    pub loss_candidate: f64,
    pub loss_reference: f64,
    /// Mean of the per-draw difference `ℓ(W) − ℓ(Σ_z⁻¹)`.
    pub mean_diff: f64,
    pub se_diff: f64,
}

impl LossComparison {
    /// The candidate does not beat the reference by more than `z` standard errors.
    pub fn holds(&self, z: f64) -> bool {
        self.mean_diff >= -z * self.se_diff
    }
}

/// Candidate weights for the minimizer check: `Σ_z⁻¹` plus a Gaussian
/// perturbation whose size ranges from 1% to 3× the reference scale.
pub fn random_candidate_weights(reference: &AttentionWeights, rng: &mut ChaCha8Rng) -> Result<AttentionWeights> {
    let dim = reference.w.nrows();
    let scale = reference.w.amax() * 10f64.powf(rng.gen_range(-2.0..0.5));
    AttentionWeights::new(&reference.w + gaussian_matrix(rng, dim, scale / (dim as f64).sqrt()))
}

/// Large-context loss of `n_weights` random `W` against `Σ_z⁻¹`, using the
/// same `n_draws` draws of `(θ, H, s_q, y_q)` for every `W`.
pub fn global_minimizer(config: &ScenarioConfig, n_weights: usize, n_draws: usize, seed: u64) -> Result<Vec<LossComparison>> {
    config.validate()?;
    let c = config.constellation();
    let noise = config.noise()?;
    let reference = AttentionWeights::noise_precision(&noise);
    let draws: Vec<(DMatrix<f64>, DVector<f64>, usize)> = (0..n_draws)
        .map(|i| {
            let mut rng = rng_for(seed, Check::Minimizer, i as u64);
            let prompt = sample_prompt(config, 0, &c, &noise, &mut rng)?;
            Ok((prompt.realization.lifted_at(0).clone(), prompt.y_query, prompt.s_query_truth))
        })
        .collect::<Result<_>>()?;
    let loss = |w: &AttentionWeights| -> Vec<f64> {
        draws
            .iter()
            .map(|(h, y, s)| -sat_posterior_limit(y, h, w, &c).log_prob(*s))
            .collect()
    };
    let base = loss(&reference);
    let n = n_draws as f64;
    let loss_reference = base.iter().sum::<f64>() / n;
    (0..n_weights)
        .map(|j| {
            let mut rng = rng_for(seed, Check::Minimizer, (1 << 32) | j as u64);
            let w = random_candidate_weights(&reference, &mut rng)?;
            let cand = loss(&w);
            let diffs: Vec<f64> = cand.iter().zip(&base).map(|(a, b)| a - b).collect();
            let mean = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            Ok(LossComparison {
                loss_candidate: cand.iter().sum::<f64>() / n,
                loss_reference,
                mean_diff: mean,
                se_diff: (var / n).sqrt(),
            })
        })
        .collect()
}

/// Largest `|log cu_post − log ca_post|` over `n` prompts drawn with a single
/// latent value (alternating Scenario 1 LoS / Rayleigh and Scenario 2 speeds).
pub fn degenerate_latent_max_diff(n: usize, seed: u64) -> Result<f64> {
    let configs: Vec<ScenarioConfig> = [0.0, 1.0]
        .into_iter()
        .map(|t| ScenarioConfig { latent_values: vec![t], ..ScenarioConfig::scenario1() })
        .chain([5.0, 15.0, 30.0].into_iter().map(|t| ScenarioConfig { latent_values: vec![t], ..ScenarioConfig::scenario2() }))
        .collect();
    let mut worst = 0f64;
    for i in 0..n {
        let cfg = &configs[i % configs.len()];
        let mut rng = rng_for(seed, Check::Degenerate, i as u64);
        let k = rng.gen_range(0..=8);
        let c = cfg.constellation();
        let noise = cfg.noise()?;
        let prompt = sample_prompt(cfg, k, &c, &noise, &mut rng)?;
        let aware = ca_post(&prompt, cfg.latent_values[0], cfg, &noise, &c)?;
        let unaware = cu_post(&prompt, cfg, &noise, &c)?;
        for (a, b) in aware.log_probs().iter().zip(unaware.log_probs()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Largest `|(p₊ − p₋) − tanh(yᵀ Σ⁻¹ h)|` over `n` random real antipodal instances.
pub fn binary_tanh_max_err(n: usize, seed: u64) -> Result<f64> {
    let bpsk = Constellation::bpsk();
    let mut worst = 0f64;
    for i in 0..n {
        let mut rng = rng_for(seed, Check::Binary, i as u64);
        let m = rng.gen_range(1..=4);
        let a = gaussian_matrix(&mut rng, m, 1.0);
        let sigma_eps = &a * a.transpose() + DMatrix::identity(m, m) * 10f64.powf(rng.gen_range(-1.0..1.0));
        let h = DVector::from_fn(m, |_, _| normal(&mut rng));
        let x = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let eps = sigma_eps.clone().cholesky().expect("positive definite").l() * DVector::from_fn(m, |_, _| normal(&mut rng));
        let y = &h * x + eps;
        // Real model embedded as the real part of a complex one; the real
        // noise block of Σ̃ = 2Σ_ε is then Σ_ε.
        let noise = NoiseSpec::with_complex_covariance(&sigma_eps * 2.0)?;
        let mut y_lift = DVector::zeros(2 * m);
        y_lift.rows_mut(0, m).copy_from(&y);
        let h_c: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let p = true_posterior(&y_lift, &lift_complex_vector(&h_c), &noise, &bpsk);
        let plus = bpsk.points().iter().position(|z| z.re > 0.0).expect("BPSK has +1");
        let diff = p.prob(plus) - p.prob(1 - plus);
        worst = worst.max((diff - binary_tanh_estimate(&y, &h, &sigma_eps)?).abs());
    }
    Ok(worst)
}

/// Worst [`gradient_rel_err`] over `n_cases` random `(batch, W)`.
pub fn gradient_max_rel_err(n_cases: usize, seed: u64) -> Result<f64> {
    let mut worst = 0f64;
    for i in 0..n_cases {
        let mut rng = rng_for(seed, Check::Gradient, i as u64);
        let d = rng.gen_range(1..=2);
        let cfg = ScenarioConfig { d, normalize: true, ..ScenarioConfig::scenario1() };
        let c = cfg.constellation();
        let noise = cfg.noise()?;
        let batch: Vec<Prompt> = (0..rng.gen_range(1..=6))
            .map(|_| {
                let k = rng.gen_range(1..=15);
                sample_prompt(&cfg, k, &c, &noise, &mut rng)
            })
            .collect::<Result<_>>()?;
        let scale = rng.gen_range(0.0..1.0);
        let w = AttentionWeights::new(gaussian_matrix(&mut rng, 2 * d, scale))?;
        worst = worst.max(gradient_rel_err(&batch, &w, c.len(), 1e-3)?);
    }
    Ok(worst)
}

/// Largest `|g − fd| / max(|g|, |fd|, 1e-3)` between the analytic gradient and
/// Richardson-extrapolated central differences with base step `step`.
pub fn gradient_rel_err(batch: &[Prompt], w: &AttentionWeights, s: usize, step: f64) -> Result<f64> {
    let g = loss_gradient(batch, w, s)?;
    let central = |i: usize, j: usize, h: f64| -> Result<f64> {
        let mut plus = w.clone();
        plus.w[(i, j)] += h;
        let mut minus = w.clone();
        minus.w[(i, j)] -= h;
        Ok((cross_entropy_loss(batch, &plus, s)? - cross_entropy_loss(batch, &minus, s)?) / (2.0 * h))
    };
    let dim = w.w.nrows();
    let mut worst = 0f64;
    for i in 0..dim {
        for j in 0..dim {
            let fd = (4.0 * central(i, j, step / 2.0)? - central(i, j, step)?) / 3.0;
            let a = g[(i, j)];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
    }
    Ok(worst)
}

/// Sample autocovariance of a real channel component at lags `0..=max_lag`,
/// pooled over the real and imaginary parts of all `d` antennas of `n_traj`
/// independent Clarke trajectories, next to the model value.
pub fn clarke_autocov(n_traj: usize, d: usize, theta: f64, max_lag: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let model = ClarkeModel::new(Default::default());
    let mut acc = vec![0.0; max_lag + 1];
    let mut count = 0usize;
    let parts: [fn(Complex64) -> f64; 2] = [|z| z.re, |z| z.im];
    for i in 0..n_traj {
        let mut rng = rng_for(seed, Check::Clarke, i as u64);
        let r = draw_channel_scenario2(theta, d, max_lag + 1, &model, &mut rng)?;
        for j in 0..d {
            for part in parts {
                let x0 = part(r.h_at(0)[j]);
                for (lag, a) in acc.iter_mut().enumerate() {
                    *a += x0 * part(r.h_at(lag)[j]);
                }
                count += 1;
            }
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(lag, a)| (a / count as f64, model.autocov(theta, lag)))
        .collect())
}

/// `L∞` distance between the finite-context SAT posterior at `W = Σ_z⁻¹` and its
/// large-context limit, for a prompt of `n_ctx` examples on the fixed channel.
pub fn sat_convergence_distance(
    h: &[Complex64],
    y_q: &DVector<f64>,
    noise: &NoiseSpec,
    constellation: &Constellation,
    n_ctx: usize,
    seed: u64,
    index: u64,
) -> Result<f64> {
    let realization = std::sync::Arc::new(ChannelRealization::constant(1.0, h.to_vec(), None));
    let mut rng = rng_for(seed, Check::Convergence, index);
    let mut prompt = sample_prompt_on_channel(realization, n_ctx, constellation, noise, &mut rng);
    prompt.y_query = y_q.clone();
    let w = AttentionWeights::noise_precision(noise);
    let finite = sat_posterior(&prompt, &w, constellation.len())?;
    let limit = sat_posterior_limit(y_q, &lift_complex_vector(h), &w, constellation);
    Ok(finite.linf_distance(&limit))
}

/// Largest `|log Σ p|` of the CA/CU/SAT posteriors and largest change of the SAT
/// posterior under a random reordering of the context, over `n` Scenario 1 prompts.
pub fn normalization_and_permutation(n: usize, seed: u64) -> Result<(f64, f64)> {
    let cfg = ScenarioConfig { d: 2, ..ScenarioConfig::scenario1() };
    let c = cfg.constellation();
    let noise = cfg.noise()?;
    let w = AttentionWeights::noise_precision(&noise);
    let (mut norm, mut perm_diff) = (0f64, 0f64);
    for i in 0..n {
        let mut rng = rng_for(seed, Check::Normalization, i as u64);
        let k = rng.gen_range(1..=10);
        let prompt = sample_prompt(&cfg, k, &c, &noise, &mut rng)?;
        let sat = sat_posterior(&prompt, &w, c.len())?;
        for p in [ca_post(&prompt, prompt.theta(), &cfg, &noise, &c)?, cu_post(&prompt, &cfg, &noise, &c)?, sat.clone()] {
            norm = norm.max(p.log_total().abs());
        }
        let mut order: Vec<usize> = (0..k).collect();
        for j in (1..k).rev() {
            order.swap(j, rng.gen_range(0..=j));
        }
        let permuted = sat_posterior(&prompt.permuted_context(&order), &w, c.len())?;
        perm_diff = perm_diff.max(sat.linf_distance(&permuted));
    }
    Ok((norm, perm_diff))
}

/// Fraction of trials in which the context-aware posterior's MAP symbol is the
/// transmitted one, at a given noise variance.
pub fn high_snr_map_hits(cfg: &ScenarioConfig, sigma2: f64, k: usize, n: usize, seed: u64) -> Result<usize> {
    let c = cfg.constellation();
    let noise = NoiseSpec::isotropic(sigma2, cfg.d)?;
    let mut hits = 0;
    for i in 0..n {
        let mut rng = rng_for(seed, Check::Normalization, (1 << 32) | i as u64);
        let prompt = sample_prompt(cfg, k, &c, &noise, &mut rng)?;
        if ca_post(&prompt, prompt.theta(), cfg, &noise, &c)?.map_index() == prompt.s_query_truth {
            hits += 1;
        }
    }
    Ok(hits)
}

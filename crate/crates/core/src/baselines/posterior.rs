use super::likelihood::{LatentLikelihoods, QuadratureOptions};
use super::stacked::StackedSystem;
use crate::channel::{Constellation, NoiseSpec, Prompt, ScenarioConfig};
use crate::error::Result;
use crate::oracle::Posterior;

/// Context-aware posterior: `log p_i ∝ log ρ_i + log ℓ_θ(i)` with the true latent value.
pub fn ca_post(
    prompt: &Prompt,
    theta_true: f64,
    config: &ScenarioConfig,
    noise: &NoiseSpec,
    constellation: &Constellation,
) -> Result<Posterior> {
    let sys = StackedSystem::from_prompt(prompt, constellation, config.kind);
    let ll = LatentLikelihoods::compute_for(&[theta_true], config, &sys, noise, constellation, &QuadratureOptions::default())?;
    Ok(aware_from(&ll.log_l[0], constellation))
}

/// Context-unaware posterior: `log p_i ∝ log ρ_i + log Σ_θ f_Θ(θ) ℓ_θ(i)`.
pub fn cu_post(prompt: &Prompt, config: &ScenarioConfig, noise: &NoiseSpec, constellation: &Constellation) -> Result<Posterior> {
    let sys = StackedSystem::from_prompt(prompt, constellation, config.kind);
    let ll = LatentLikelihoods::compute(&sys, config, noise, constellation, &QuadratureOptions::default())?;
    Ok(unaware_from(&ll, constellation))
}

/// Both posteriors from one set of latent likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextPosteriors {
    pub aware: Posterior,
    pub unaware: Posterior,
    pub quadrature_warning: bool,
}

pub fn context_posteriors(
    prompt: &Prompt,
    config: &ScenarioConfig,
    noise: &NoiseSpec,
    constellation: &Constellation,
) -> Result<ContextPosteriors> {
    let sys = StackedSystem::from_prompt(prompt, constellation, config.kind);
    let ll = LatentLikelihoods::compute(&sys, config, noise, constellation, &QuadratureOptions::default())?;
    let theta = prompt.theta();
    config.latent_index(theta)?;
    let row = ll.row(theta).expect("true latent value is in the configuration");
    Ok(ContextPosteriors {
        aware: aware_from(row, constellation),
        unaware: unaware_from(&ll, constellation),
        quadrature_warning: ll.quadrature_warning,
    })
}

fn aware_from(log_l: &[f64], constellation: &Constellation) -> Posterior {
    Posterior::from_log_scores(constellation.log_priors().iter().zip(log_l).map(|(a, b)| a + b).collect())
}

fn unaware_from(ll: &LatentLikelihoods, constellation: &Constellation) -> Posterior {
    Posterior::from_log_scores(
        constellation
            .log_priors()
            .iter()
            .zip(ll.marginal())
            .map(|(a, b)| a + b)
            .collect(),
    )
}

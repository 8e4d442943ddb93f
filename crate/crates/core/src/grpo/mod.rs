//! Group-relative advantages and the clipped policy-gradient update.

mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{loss_and_gradient, PolicyState, Sample, SurrogateSequence};
use crate::taskgen::{verify, Question};

pub use trainer::{StandaloneTrainer, TrainerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub eps_low: f64,
    pub eps_high: f64,
    /// Kept for config completeness; the KL term is not implemented and must be 0.
    pub kl_weight: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            eps_low: 0.2,
            eps_high: 0.28,
            kl_weight: 0.0,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            std_floor: 1e-4,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_low > 0.0
            && self.eps_low <= self.eps_high
            && self.eps_low < 1.0
            && self.learning_rate > 0.0
            && self.std_floor > 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid GRPO settings: {self:?}")));
        }
        if self.kl_weight != 0.0 {
            return Err(Error::Config("KL-regularized updates are not supported; kl_weight must be 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Local,
    External(String),
}

/// One question and the completions a policy produced for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub question: Question,
    pub samples: Vec<Sample>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub origin: Origin,
}

impl RolloutGroup {
    /// Scores every sample with the local verifier and fills in advantages.
    pub fn score(question: Question, samples: Vec<Sample>, origin: Origin, std_floor: f64) -> Result<RolloutGroup> {
        let rewards: Vec<f64> = samples
            .iter()
            .map(|s| verify(&question, &s.completion_text).score)
            .collect();
        let advantages = compute_advantages(&rewards, std_floor)?;
        Ok(RolloutGroup {
            question,
            samples,
            rewards,
            advantages,
            origin,
        })
    }

    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }

    pub fn completion_count(&self) -> usize {
        self.samples.len()
    }
}

/// `(r_i - mean) / (std + std_floor)` with population std; all-equal groups map
/// to exact zeros.
pub fn compute_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    let n = rewards.len();
    if n < 2 {
        return Err(Error::GroupTooSmall(n));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; n]);
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let denom = var.sqrt() + std_floor;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

pub fn is_zero_advantage(group: &RolloutGroup) -> bool {
    group.advantages.iter().all(|&a| a == 0.0)
}

fn clip(ratio: f64, cfg: &GrpoConfig) -> f64 {
    ratio.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high)
}

/// Per-token clipped surrogate `-min(ratio * A, clip(ratio) * A)`.
pub fn token_surrogate(ratio: f64, advantage: f64, cfg: &GrpoConfig) -> f64 {
    -(ratio * advantage).min(clip(ratio, cfg) * advantage)
}

/// Derivative of [`token_surrogate`] wrt the token's log-probability. The
/// unclipped branch wins ties, so the gradient is live inside the trust region.
pub fn token_surrogate_grad(ratio: f64, advantage: f64, cfg: &GrpoConfig) -> f64 {
    if ratio * advantage <= clip(ratio, cfg) * advantage {
        -ratio * advantage
    } else {
        0.0
    }
}

/// Token-mean clipped surrogate.
pub fn surrogate_loss(ratios: &[f64], advantages: &[f64], cfg: &GrpoConfig) -> Result<f64> {
    if ratios.len() != advantages.len() || ratios.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} ratios for {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !r.is_finite()) {
        return Err(Error::NonFinite(format!("importance ratio {r}")));
    }
    if let Some(r) = ratios.iter().find(|&&r| r <= 0.0) {
        return Err(Error::InvalidArgument(format!("importance ratio {r} is not positive")));
    }
    let total: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| token_surrogate(r, a, cfg))
        .sum();
    Ok(total / ratios.len() as f64)
}

/// Adam with bias correction. On a non-finite gradient or result the state is
/// left untouched.
pub fn adam_step(state: &mut PolicyState, gradient: &[f64], cfg: &GrpoConfig) -> Result<()> {
    if gradient.len() != state.params.len() {
        return Err(Error::InvalidArgument(format!(
            "gradient has {} entries, policy has {}",
            gradient.len(),
            state.params.len()
        )));
    }
    if let Some(i) = gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    let t = state.step + 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let n = gradient.len();
    let mut params = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let g = gradient[i];
        let mi = b1 * state.adam_m[i] + (1.0 - b1) * g;
        let vi = b2 * state.adam_v[i] + (1.0 - b2) * g * g;
        let update = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps);
        params.push(state.params[i] - update);
        m.push(mi);
        v.push(vi);
    }
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("parameter {i} after update")));
    }
    state.params = params;
    state.adam_m = m;
    state.adam_v = v;
    state.step = t;
    Ok(())
}

/// Builds the surrogate batch for `groups`. Old log-probabilities are the ones
/// stored on each sample, which were computed under the current policy.
pub fn surrogate_batch(groups: &[RolloutGroup]) -> Vec<SurrogateSequence<'_>> {
    groups
        .iter()
        .flat_map(|g| {
            g.samples.iter().zip(&g.advantages).map(|(s, &a)| SurrogateSequence {
                prompt_tokens: &s.prompt_tokens,
                completion_tokens: &s.completion_tokens,
                old_logprobs: &s.token_logprobs,
                advantage: a,
            })
        })
        .collect()
}

/// One GRPO update over the whole training set (single epoch, one minibatch).
/// Returns the surrogate loss; on error the state is unchanged.
pub fn train_step(state: &mut PolicyState, groups: &[RolloutGroup], cfg: &GrpoConfig) -> Result<f64> {
    let batch = surrogate_batch(groups);
    let (loss, grad) = loss_and_gradient(state, &batch, cfg)?;
    adam_step(state, &grad, cfg)?;
    Ok(loss)
}

#[cfg(test)]
mod tests;

//! Format priming for freshly initialized policies.
//!
//! A randomly initialized character model essentially never emits a well-formed
//! `<answer>...</answer>` span, so every group would be zero-advantage and RL
//! could not start. Priming imitates exemplars that pair each prompt with the
//! correctly formatted answer of a *different*, independently drawn question of
//! the same specialty: the policy learns the answer format and the marginal
//! shape of answers, but nothing about which answer fits which prompt.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grpo::{adam_step, GrpoConfig};
use crate::policy::{loss_and_gradient, score_group, Architecture, PolicyState, SurrogateSequence, Vocab};
use crate::seed;
use crate::taskgen::{generate, wrap_answer, Specialty};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrimingConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PrimingConfig {
    fn default() -> Self {
        PrimingConfig {
            steps: 1500,
            batch_size: 16,
            learning_rate: 0.01,
        }
    }
}

/// Prompt paired with an answer-shaped completion that ignores the prompt.
pub fn format_exemplar<R: Rng>(specialties: &[Specialty], rng: &mut R) -> (String, String) {
    let s = specialties[rng.gen_range(0..specialties.len())];
    let prompt = generate(s, rng.gen()).prompt;
    let decoy = generate(s, rng.gen()).ground_truth;
    (prompt, wrap_answer(&decoy))
}

/// A freshly initialized policy after `cfg.steps` imitation steps on format
/// exemplars. The returned state has a fresh optimizer (zero moments, step 0).
pub fn primed_policy(arch: Architecture, specialties: &[Specialty], seed: u64, cfg: &PrimingConfig) -> Result<PolicyState> {
    let mut state = PolicyState::init(arch, seed)?;
    let opt = GrpoConfig {
        learning_rate: cfg.learning_rate,
        ..GrpoConfig::default()
    };
    for step in 0..cfg.steps {
        let mut rng = seed::rng(seed, &[seed::tag::PRIMING, step as u64]);
        let mut prompts = Vec::with_capacity(cfg.batch_size);
        let mut completions = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let (p, c) = format_exemplar(specialties, &mut rng);
            prompts.push(Vocab::encode_prompt(&p)?);
            completions.push(Vocab::encode_completion(&c)?);
        }
        let mut old = Vec::with_capacity(cfg.batch_size);
        for (p, c) in prompts.iter().zip(&completions) {
            old.push(score_group(&state, p, std::slice::from_ref(c))?.remove(0));
        }
        // On-policy with unit advantage, the surrogate gradient is the negative
        // log-likelihood gradient.
        let batch: Vec<SurrogateSequence<'_>> = prompts
            .iter()
            .zip(&completions)
            .zip(&old)
            .map(|((p, c), o)| SurrogateSequence {
                prompt_tokens: p,
                completion_tokens: c,
                old_logprobs: o,
                advantage: 1.0,
            })
            .collect();
        let (_, grad) = loss_and_gradient(&state, &batch, &opt)?;
        adam_step(&mut state, &grad, &opt)?;
    }
    Ok(PolicyState::from_params(arch, state.params))
}

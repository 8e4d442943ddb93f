use serde::{Deserialize, Serialize};

use super::{train_step, GrpoConfig};
use crate::error::{Error, Result};
use crate::node::{rollout_batch, sample_questions};
use crate::policy::{PolicyState, Sampling, DEFAULT_MAX_NEW_TOKENS};
use crate::taskgen::Specialty;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub specialties: Vec<Specialty>,
    pub batch_size: usize,
    pub completions_per_question: usize,
    pub grpo: GrpoConfig,
    pub seed: u64,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
}

impl TrainerConfig {
    pub fn new(specialties: Vec<Specialty>, seed: u64) -> TrainerConfig {
        TrainerConfig {
            specialties,
            batch_size: 8,
            completions_per_question: 8,
            grpo: GrpoConfig::default(),
            seed,
            sampling: Sampling::Temperature(1.0),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

/// Plain single-policy GRPO fine-tuning: every round, roll out a batch of fresh
/// questions and update on all of it.
pub struct StandaloneTrainer {
    config: TrainerConfig,
    state: PolicyState,
}

impl StandaloneTrainer {
    pub fn new(config: TrainerConfig, state: PolicyState) -> Result<StandaloneTrainer> {
        if config.specialties.is_empty() || config.batch_size == 0 || config.completions_per_question < 2 {
            return Err(Error::Config(
                "trainer needs specialties, a positive batch and at least 2 completions".into(),
            ));
        }
        config.grpo.validate()?;
        state.validate()?;
        Ok(StandaloneTrainer { config, state })
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn into_state(self) -> PolicyState {
        self.state
    }

    /// Trains one round; returns the batch mean reward and the surrogate loss.
    pub fn step(&mut self, round: u64) -> Result<(f64, f64)> {
        let c = &self.config;
        let questions = sample_questions(&c.specialties, c.batch_size, c.seed, round);
        let groups = rollout_batch(
            &self.state,
            questions,
            c.completions_per_question,
            c.sampling,
            c.max_new_tokens,
            c.seed,
            round,
            c.grpo.std_floor,
        )?;
        let mean = groups.iter().map(|g| g.mean_reward()).sum::<f64>() / groups.len() as f64;
        let loss = train_step(&mut self.state, &groups, &c.grpo)?;
        Ok((mean, loss))
    }
}

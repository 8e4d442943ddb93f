//! The per-node round loop: sample a batch, roll out, score locally, share,
//! assemble the local/external training set, update.

mod assemble;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::{train_step, GrpoConfig, Origin, RolloutGroup};
use crate::policy::{sample_completions, PolicyState, Sampling, DEFAULT_MAX_NEW_TOKENS};
use crate::seed;
use crate::swarmnet::{broadcast, RolloutPacket, SwarmPool, Transport};
use crate::taskgen::{generate, Question, Specialty};

pub use assemble::{assemble_training_set, convert_packet, emulate_external, AssemblyStats, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub node_id: String,
    pub specialties: Vec<Specialty>,
    pub batch_size: usize,
    pub completions_per_question: usize,
    pub local_samples: usize,
    pub external_samples: usize,
    pub share_fraction: f64,
    pub grpo: GrpoConfig,
    pub seed: u64,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
}

impl NodeConfig {
    /// An `I`-local / `J`-external node with every other setting at its default.
    pub fn new(node_id: &str, specialties: Vec<Specialty>, local: usize, external: usize, seed: u64) -> NodeConfig {
        NodeConfig {
            node_id: node_id.to_string(),
            specialties,
            batch_size: local + external,
            completions_per_question: 8,
            local_samples: local,
            external_samples: external,
            share_fraction: 1.0,
            grpo: GrpoConfig::default(),
            seed,
            sampling: Sampling::Temperature(1.0),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("node {}: {m}", self.node_id)));
        if self.specialties.is_empty() {
            return fail("no specialties".into());
        }
        if self.local_samples < 1 {
            return fail("local_samples must be at least 1".into());
        }
        if self.local_samples + self.external_samples != self.batch_size {
            return fail(format!(
                "local_samples ({}) + external_samples ({}) must equal batch_size ({})",
                self.local_samples, self.external_samples, self.batch_size
            ));
        }
        if self.completions_per_question < 2 {
            return fail("completions_per_question must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.share_fraction) {
            return fail(format!("share_fraction {} outside [0, 1]", self.share_fraction));
        }
        if self.max_new_tokens == 0 {
            return fail("max_new_tokens must be positive".into());
        }
        self.grpo.validate()
    }

    /// Number of batch questions broadcast each round.
    pub fn shared_count(&self) -> usize {
        (self.share_fraction * self.batch_size as f64).ceil() as usize
    }
}

/// `count` questions with specialties drawn uniformly with replacement.
pub fn sample_questions(specialties: &[Specialty], count: usize, seed: u64, round: u64) -> Vec<Question> {
    let mut rng = seed::rng(seed, &[seed::tag::BATCH, round]);
    (0..count)
        .map(|_| {
            let s = specialties[rng.gen_range(0..specialties.len())];
            generate(s, rng.gen())
        })
        .collect()
}

pub fn sample_batch(config: &NodeConfig, round: u64) -> Vec<Question> {
    sample_questions(&config.specialties, config.batch_size, config.seed, round)
}

/// Seed for the completions of question `index` in `round`.
pub fn completion_seed(seed: u64, round: u64, index: usize) -> u64 {
    seed::derive(seed, &[seed::tag::COMPLETIONS, round, index as u64])
}

/// Rolls out and locally scores every question of a batch.
pub fn rollout_batch(
    state: &PolicyState,
    questions: Vec<Question>,
    completions: usize,
    sampling: Sampling,
    max_new_tokens: usize,
    seed: u64,
    round: u64,
    std_floor: f64,
) -> Result<Vec<RolloutGroup>> {
    questions
        .into_iter()
        .enumerate()
        .map(|(k, q)| {
            let samples = sample_completions(
                state,
                &q.prompt,
                completions,
                sampling,
                max_new_tokens,
                completion_seed(seed, round, k),
            )?;
            RolloutGroup::score(q, samples, Origin::Local, std_floor)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub node_id: String,
    pub round: u64,
    pub per_question_rewards: Vec<f64>,
    pub mean_reward: f64,
    pub external_used: usize,
    pub external_filtered: usize,
    pub external_skipped: usize,
    pub backfilled: usize,
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Node {
    config: NodeConfig,
    state: PolicyState,
    pool: Arc<SwarmPool>,
    transport: Arc<dyn Transport>,
    completed_rounds: u64,
}

impl Node {
    pub fn new(
        config: NodeConfig,
        state: PolicyState,
        pool: Arc<SwarmPool>,
        transport: Arc<dyn Transport>,
    ) -> Result<Node> {
        config.validate()?;
        state.validate()?;
        Ok(Node {
            config,
            state,
            pool,
            transport,
            completed_rounds: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.config.node_id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn pool(&self) -> &Arc<SwarmPool> {
        &self.pool
    }

    /// Rounds that finished with a policy update.
    pub fn completed_rounds(&self) -> u64 {
        self.completed_rounds
    }

    /// Runs one round. Errors never escape: a failed round leaves the policy
    /// bit-identical to its pre-round state and is recorded in the report.
    pub fn run_round(&mut self, round: u64) -> RoundReport {
        let mut report = RoundReport {
            node_id: self.config.node_id.clone(),
            round,
            ..Default::default()
        };
        if let Err(e) = self.try_round(round, &mut report) {
            report.error = Some(e.to_string());
        }
        report
    }

    fn try_round(&mut self, round: u64, report: &mut RoundReport) -> Result<()> {
        let cfg = &self.config;
        let questions = sample_batch(cfg, round);
        let local = rollout_batch(
            &self.state,
            questions,
            cfg.completions_per_question,
            cfg.sampling,
            cfg.max_new_tokens,
            cfg.seed,
            round,
            cfg.grpo.std_floor,
        )?;
        report.per_question_rewards = local.iter().map(RolloutGroup::mean_reward).collect();
        report.mean_reward =
            report.per_question_rewards.iter().sum::<f64>() / report.per_question_rewards.len() as f64;

        let packets: Vec<RolloutPacket> = local
            .iter()
            .take(cfg.shared_count())
            .map(|g| {
                let texts = g.samples.iter().map(|s| s.completion_text.clone()).collect();
                RolloutPacket::new(&cfg.node_id, round, &g.question, texts)
            })
            .collect();
        let delivery = broadcast(&cfg.node_id, round, &packets, self.transport.as_ref())?;
        if !delivery.unreached.is_empty() {
            tracing::debug!(node = %cfg.node_id, round, unreached = ?delivery.unreached, "partial delivery");
        }

        let pool = self.pool.poll(&cfg.node_id, round);
        let mut rng = seed::rng(cfg.seed, &[seed::tag::ASSEMBLE, round]);
        let (set, stats) = assemble_training_set(local, &pool, &self.state, cfg, round, &mut rng)?;
        report.external_used = stats.external_used;
        report.external_filtered = stats.external_filtered;
        report.external_skipped = stats.external_skipped;
        report.backfilled = stats.backfilled;

        let snapshot = self.state.clone();
        match train_step(&mut self.state, &set.all_groups(), &cfg.grpo) {
            Ok(loss) => {
                report.loss = Some(loss);
                self.completed_rounds += 1;
                Ok(())
            }
            Err(e) => {
                self.state = snapshot;
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests;

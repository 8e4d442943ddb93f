use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NodeConfig;
use crate::error::{Error, Result};
use crate::grpo::{is_zero_advantage, Origin, RolloutGroup};
use crate::policy::{score_group, PolicyState, Sample, Vocab};
use crate::swarmnet::RolloutPacket;

/// What one round trains on.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub round: u64,
    /// Exactly `I` of the node's own groups.
    pub local_groups: Vec<RolloutGroup>,
    /// Extra local groups standing in for external groups the pool could not supply.
    pub backfill_groups: Vec<RolloutGroup>,
    /// At most `J` re-verified swarm groups, none of them zero-advantage.
    pub external_groups: Vec<RolloutGroup>,
}

impl TrainingSet {
    pub fn all_groups(&self) -> Vec<RolloutGroup> {
        self.local_groups
            .iter()
            .chain(&self.backfill_groups)
            .chain(&self.external_groups)
            .cloned()
            .collect()
    }

    pub fn group_count(&self) -> usize {
        self.local_groups.len() + self.backfill_groups.len() + self.external_groups.len()
    }

    pub fn completion_count(&self) -> usize {
        self.local_groups
            .iter()
            .chain(&self.backfill_groups)
            .chain(&self.external_groups)
            .map(RolloutGroup::completion_count)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyStats {
    pub external_used: usize,
    /// Pool groups discarded for having zero advantage.
    pub external_filtered: usize,
    /// Pool packets that could not be emulated (unknown verifier, unencodable text).
    pub external_skipped: usize,
    pub backfilled: usize,
}

/// Uniform `k`-subset of `0..n` in ascending order; all of `0..n` when `k >= n`.
fn choose<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut picked = rand::seq::index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Re-encodes a packet under the local vocabulary and re-verifies it with the
/// local verifier. Log-probabilities are left empty; see [`emulate_external`].
pub fn convert_packet(packet: &RolloutPacket, context_length: usize, std_floor: f64) -> Result<RolloutGroup> {
    packet.validate()?;
    if packet.metadata.verifier().is_none() {
        return Err(Error::MalformedPacket(format!("unknown verifier `{}`", packet.metadata.verifier)));
    }
    let prompt_tokens = Vocab::encode_prompt(&packet.prompt)?;
    let samples = packet
        .completions
        .iter()
        .map(|text| {
            let completion_tokens = Vocab::encode_completion(text)?;
            let len = prompt_tokens.len() + completion_tokens.len();
            if len > context_length {
                return Err(Error::ContextOverflow {
                    len,
                    limit: context_length,
                });
            }
            Ok(Sample {
                prompt_tokens: prompt_tokens.clone(),
                completion_tokens,
                completion_text: text.clone(),
                token_logprobs: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RolloutGroup::score(packet.question(), samples, Origin::External(packet.sender.clone()), std_floor)
}

fn fill_logprobs(state: &PolicyState, group: &mut RolloutGroup) -> Result<()> {
    let completions: Vec<Vec<u32>> = group.samples.iter().map(|s| s.completion_tokens.clone()).collect();
    let prompt = group.samples[0].prompt_tokens.clone();
    let scored = score_group(state, &prompt, &completions)?;
    for (s, lp) in group.samples.iter_mut().zip(scored) {
        s.token_logprobs = lp;
    }
    Ok(())
}

/// Treats a shared rollout as if this node had generated it: local encoding,
/// local rewards, and log-probabilities under the receiver's current policy.
pub fn emulate_external(state: &PolicyState, packet: &RolloutPacket, std_floor: f64) -> Result<RolloutGroup> {
    let mut group = convert_packet(packet, state.arch.context_length, std_floor)?;
    fill_logprobs(state, &mut group)?;
    Ok(group)
}

/// Builds the round's training set: `I` local groups chosen uniformly without
/// replacement (no filtering), and up to `J` external groups sampled uniformly
/// from the pool after dropping zero-advantage groups. A shortfall on the
/// external side is backfilled from the unchosen local groups.
pub fn assemble_training_set<R: Rng>(
    local: Vec<RolloutGroup>,
    pool: &[Arc<RolloutPacket>],
    state: &PolicyState,
    config: &NodeConfig,
    round: u64,
    rng: &mut R,
) -> Result<(TrainingSet, AssemblyStats)> {
    let mut stats = AssemblyStats::default();
    let chosen_local = choose(local.len(), config.local_samples, rng);

    let mut survivors = Vec::new();
    if config.external_samples > 0 {
        for packet in pool {
            match convert_packet(packet, state.arch.context_length, config.grpo.std_floor) {
                Ok(g) if is_zero_advantage(&g) => stats.external_filtered += 1,
                Ok(g) => survivors.push(g),
                Err(e) => {
                    tracing::debug!("skipping packet from {}: {e}", packet.sender);
                    stats.external_skipped += 1;
                }
            }
        }
    }
    let picks = choose(survivors.len(), config.external_samples, rng);
    let mut external_groups = Vec::with_capacity(picks.len());
    let mut survivors: Vec<Option<RolloutGroup>> = survivors.into_iter().map(Some).collect();
    for i in picks {
        let mut g = survivors[i].take().expect("each survivor picked once");
        fill_logprobs(state, &mut g)?;
        external_groups.push(g);
    }
    stats.external_used = external_groups.len();

    let deficit = config.external_samples - external_groups.len();
    let remaining: Vec<usize> = (0..local.len()).filter(|i| !chosen_local.contains(i)).collect();
    let backfill: Vec<usize> = choose(remaining.len(), deficit, rng)
        .into_iter()
        .map(|i| remaining[i])
        .collect();
    stats.backfilled = backfill.len();

    let mut local: Vec<Option<RolloutGroup>> = local.into_iter().map(Some).collect();
    let take = |ids: &[usize], local: &mut Vec<Option<RolloutGroup>>| -> Vec<RolloutGroup> {
        ids.iter().map(|&i| local[i].take().expect("local group chosen once")).collect()
    };
    let local_groups = take(&chosen_local, &mut local);
    let backfill_groups = take(&backfill, &mut local);
    Ok((
        TrainingSet {
            round,
            local_groups,
            backfill_groups,
            external_groups,
        },
        stats,
    ))
}

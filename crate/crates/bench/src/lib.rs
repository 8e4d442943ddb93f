//! Shared fixtures for the benchmarks.

use sapo_core::node::rollout_batch;
use sapo_core::node::sample_questions;
use sapo_core::{Architecture, PolicyState, RolloutGroup, RolloutPacket, Sampling, Specialty, SpecialtyId};

pub const SEED: u64 = 7;

pub fn specialties() -> Vec<Specialty> {
    vec![
        Specialty::from(SpecialtyId::BasicArithmetic),
        Specialty::from(SpecialtyId::BaseConversion),
    ]
}

pub fn policy(layers: usize, hidden: usize) -> PolicyState {
    let arch = Architecture {
        layers,
        hidden,
        context_length: 256,
    };
    PolicyState::init(arch, SEED).expect("valid architecture")
}

/// One round's worth of locally scored groups for `state`.
pub fn groups(state: &PolicyState, questions: usize, completions: usize, max_new_tokens: usize) -> Vec<RolloutGroup> {
    let qs = sample_questions(&specialties(), questions, SEED, 0);
    rollout_batch(
        state,
        qs,
        completions,
        Sampling::Temperature(1.0),
        max_new_tokens,
        SEED,
        0,
        1e-4,
    )
    .expect("rollout succeeds")
}

/// Packets as a node would broadcast them for `groups`.
pub fn packets(sender: &str, round: u64, groups: &[RolloutGroup]) -> Vec<RolloutPacket> {
    groups
        .iter()
        .map(|g| {
            let texts = g.samples.iter().map(|s| s.completion_text.clone()).collect();
            RolloutPacket::new(sender, round, &g.question, texts)
        })
        .collect()
}

//! Swarm sampling policy optimization at desk scale.
//!
//! A swarm of nodes each trains a small character-level policy on procedurally
//! generated, verifiable micro-tasks with group-relative policy gradients. After
//! every round a node broadcasts its decoded rollouts, and when assembling its next
//! training set it mixes `I` of its own question groups with `J` groups sampled from
//! what the rest of the swarm shared.
//!
//! Module map:
//!
//! - [`taskgen`]: task generators and rule-based verifiers.
//! - [`policy`]: vocabulary, GRU sequence model, sampling, scoring, gradients, checkpoints.
//! - [`grpo`]: advantages, clipped surrogate, Adam, and the standalone trainer.
//! - [`swarmnet`]: rollout packets, per-node pools, in-memory and socket transports.
//! - [`node`]: the per-node round loop.
//! - [`judge`]: pass@1 evaluation exchange and cumulative curves.
//! - [`experiment`]: sweep orchestration, metrics, smoothing, and config comparison.

pub mod error;
pub mod experiment;
pub mod grpo;
pub mod judge;
pub mod node;
pub mod policy;
pub mod seed;
pub mod swarmnet;
pub mod taskgen;

pub use error::{Error, Result};
pub use grpo::{GrpoConfig, Origin, RolloutGroup};
pub use node::{Node, NodeConfig, RoundReport, TrainingSet};
pub use policy::{Architecture, PolicyState, Sample, Sampling, Vocab};
pub use swarmnet::{RolloutPacket, SwarmPool};
pub use taskgen::{Question, Specialty, SpecialtyId, VerifierResult};

//! Rollout sharing: the packet schema, each node's view of the swarm pool, and
//! the transports that move packets between nodes.
//!
//! Packets carry decoded text only. A receiver re-encodes completions with its
//! own vocabulary and re-verifies them with its own verifier; nothing the sender
//! computed about rewards or log-probabilities is trusted or even shipped.

mod pool;
mod socket;
mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taskgen::{Question, QuestionMetadata, Specialty};

pub use pool::{SwarmPool, DEFAULT_CAPACITY, DEFAULT_STALENESS_WINDOW};
pub use socket::{read_frame, write_frame, PeerAddr, PeerList, SocketEndpoint, SocketTransport, MAX_FRAME};
pub use transport::{broadcast, Delivery, InMemoryTransport, Transport};

pub const SCHEMA_VERSION: u32 = 1;

/// The shared tuple (question, ground truth, decoded completions, metadata) plus
/// its envelope. Field order is the wire order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutPacket {
    pub schema_version: u32,
    pub sender: String,
    pub round: u64,
    pub specialty: Specialty,
    pub instance_seed: u64,
    pub prompt: String,
    pub ground_truth: String,
    pub metadata: QuestionMetadata,
    pub completions: Vec<String>,
}

impl RolloutPacket {
    pub fn new(sender: &str, round: u64, question: &Question, completions: Vec<String>) -> RolloutPacket {
        RolloutPacket {
            schema_version: SCHEMA_VERSION,
            sender: sender.to_string(),
            round,
            specialty: question.specialty,
            instance_seed: question.instance_seed,
            prompt: question.prompt.clone(),
            ground_truth: question.ground_truth.clone(),
            metadata: question.metadata.clone(),
            completions,
        }
    }

    pub fn question(&self) -> Question {
        Question {
            specialty: self.specialty,
            prompt: self.prompt.clone(),
            ground_truth: self.ground_truth.clone(),
            instance_seed: self.instance_seed,
            metadata: self.metadata.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(self.schema_version));
        }
        if self.completions.is_empty() {
            return Err(Error::MalformedPacket("packet has no completions".into()));
        }
        if self.sender.is_empty() {
            return Err(Error::MalformedPacket("packet has no sender".into()));
        }
        Ok(())
    }
}

/// One JSON object followed by `\n`.
pub fn serialize(packet: &RolloutPacket) -> Result<Vec<u8>> {
    packet.validate()?;
    let mut out = serde_json::to_vec(packet)?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn deserialize(bytes: &[u8]) -> Result<RolloutPacket> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::MalformedPacket(format!("invalid UTF-8: {e}")))?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    let probe: VersionProbe = serde_json::from_str(line)
        .map_err(|e| Error::MalformedPacket(format!("missing schema_version: {e}")))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion(probe.schema_version));
    }
    let packet: RolloutPacket =
        serde_json::from_str(line).map_err(|e| Error::MalformedPacket(e.to_string()))?;
    packet.validate()?;
    Ok(packet)
}

#[cfg(test)]
mod tests;

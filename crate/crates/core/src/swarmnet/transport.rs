use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{RolloutPacket, SwarmPool};
use crate::error::{Error, Result};

/// Outcome of one broadcast: how many peers acknowledged, and which did not.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Delivery {
    pub acknowledged: usize,
    pub unreached: Vec<String>,
}

/// Moves a node's packets into every other live node's pool. Best effort: a
/// failure to reach a peer is reported, never raised.
pub trait Transport: Send + Sync {
    fn broadcast(&self, sender: &str, packets: &[RolloutPacket]) -> Delivery;
}

/// Checks the envelope of every packet, then hands them to `transport`.
pub fn broadcast(
    node_id: &str,
    round: u64,
    packets: &[RolloutPacket],
    transport: &dyn Transport,
) -> Result<Delivery> {
    for p in packets {
        if p.sender != node_id || p.round != round {
            return Err(Error::InvalidArgument(format!(
                "packet from {}@{} broadcast by {node_id}@{round}",
                p.sender, p.round
            )));
        }
        p.validate()?;
    }
    if packets.is_empty() {
        return Ok(Delivery::default());
    }
    Ok(transport.broadcast(node_id, packets))
}

/// In-process delivery: a registry of every node's pool.
#[derive(Default)]
pub struct InMemoryTransport {
    pools: RwLock<BTreeMap<String, Arc<SwarmPool>>>,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, node_id: &str, pool: Arc<SwarmPool>) {
        self.pools
            .write()
            .expect("registry lock poisoned")
            .insert(node_id.to_string(), pool);
    }

    /// Marks a node dead; it stops receiving.
    pub fn deregister(&self, node_id: &str) {
        self.pools.write().expect("registry lock poisoned").remove(node_id);
    }
}

impl Transport for InMemoryTransport {
    fn broadcast(&self, sender: &str, packets: &[RolloutPacket]) -> Delivery {
        let pools = self.pools.read().expect("registry lock poisoned");
        let mut delivery = Delivery::default();
        if packets.is_empty() {
            return delivery;
        }
        for (id, pool) in pools.iter() {
            if id == sender {
                continue;
            }
            for p in packets {
                pool.insert(p.clone());
            }
            delivery.acknowledged += 1;
        }
        delivery
    }
}

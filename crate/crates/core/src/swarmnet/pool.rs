use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use super::RolloutPacket;

pub const DEFAULT_STALENESS_WINDOW: u64 = 2;
pub const DEFAULT_CAPACITY: usize = 64;

struct Entry {
    round: u64,
    arrival: u64,
    packet: Arc<RolloutPacket>,
}

#[derive(Default)]
struct Inner {
    by_sender: BTreeMap<String, VecDeque<Entry>>,
    arrivals: u64,
}

/// One node's view of what the swarm has shared with it. Safe for concurrent
/// insertion (transport side) and polling (node side).
pub struct SwarmPool {
    staleness_window: u64,
    capacity: usize,
    inner: Mutex<Inner>,
}

impl Default for SwarmPool {
    fn default() -> Self {
        SwarmPool::new(DEFAULT_STALENESS_WINDOW, DEFAULT_CAPACITY)
    }
}

impl SwarmPool {
    pub fn new(staleness_window: u64, capacity: usize) -> SwarmPool {
        SwarmPool {
            staleness_window,
            capacity: capacity.max(1),
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn staleness_window(&self) -> u64 {
        self.staleness_window
    }

    /// Stores `packet`, evicting the sender's oldest arrivals beyond capacity.
    pub fn insert(&self, packet: RolloutPacket) {
        let mut inner = self.inner.lock().expect("pool lock poisoned");
        let arrival = inner.arrivals;
        inner.arrivals += 1;
        let queue = inner.by_sender.entry(packet.sender.clone()).or_default();
        queue.push_back(Entry {
            round: packet.round,
            arrival,
            packet: Arc::new(packet),
        });
        while queue.len() > self.capacity {
            queue.pop_front();
        }
    }

    /// Packets from senders other than `node_id` whose round lies in
    /// `[current_round - staleness_window, current_round]`, ordered by
    /// (sender, round, arrival).
    pub fn poll(&self, node_id: &str, current_round: u64) -> Vec<Arc<RolloutPacket>> {
        let oldest = current_round.saturating_sub(self.staleness_window);
        let inner = self.inner.lock().expect("pool lock poisoned");
        let mut out = Vec::new();
        for (sender, queue) in &inner.by_sender {
            if sender == node_id {
                continue;
            }
            let mut fresh: Vec<&Entry> = queue
                .iter()
                .filter(|e| (oldest..=current_round).contains(&e.round))
                .collect();
            fresh.sort_by_key(|e| (e.round, e.arrival));
            out.extend(fresh.into_iter().map(|e| Arc::clone(&e.packet)));
        }
        out
    }

    pub fn len(&self) -> usize {
        let inner = self.inner.lock().expect("pool lock poisoned");
        inner.by_sender.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

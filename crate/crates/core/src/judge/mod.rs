//! Pass@1 evaluation exchange: a node asks for an evaluation, the judge samples
//! a fresh question from its own seed stream, the node answers once, and the
//! judge scores the answer with its own verifier.

mod remote;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy::{sample_completions, PolicyState, Sampling, DEFAULT_MAX_NEW_TOKENS};
use crate::seed;
use crate::taskgen::{generate, verify, Question, Specialty};

pub use remote::{request_evaluation, JudgeServer};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timeout;

/// Anything that can be evaluated: reports its progress and answers one prompt.
pub trait Contestant {
    fn node_id(&self) -> String;
    fn completed_rounds(&self) -> u64;
    fn answer(&self, prompt: &str) -> std::result::Result<String, Timeout>;
}

/// Greedy pass@1 answer from a policy.
pub fn greedy_answer(state: &PolicyState, prompt: &str, max_new_tokens: usize) -> std::result::Result<String, Timeout> {
    sample_completions(state, prompt, 1, Sampling::Greedy, max_new_tokens, 0)
        .map(|mut s| s.remove(0).completion_text)
        .map_err(|e| {
            tracing::warn!("contestant failed to answer: {e}");
            Timeout
        })
}

/// A frozen policy standing in for a node.
pub struct PolicyContestant<'a> {
    pub node_id: String,
    pub state: &'a PolicyState,
    pub completed_rounds: u64,
    pub max_new_tokens: usize,
}

impl<'a> PolicyContestant<'a> {
    pub fn new(node_id: &str, state: &'a PolicyState, completed_rounds: u64) -> Self {
        PolicyContestant {
            node_id: node_id.to_string(),
            state,
            completed_rounds,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

impl Contestant for PolicyContestant<'_> {
    fn node_id(&self) -> String {
        self.node_id.clone()
    }

    fn completed_rounds(&self) -> u64 {
        self.completed_rounds
    }

    fn answer(&self, prompt: &str) -> std::result::Result<String, Timeout> {
        greedy_answer(self.state, prompt, self.max_new_tokens)
    }
}

impl Contestant for crate::node::Node {
    fn node_id(&self) -> String {
        self.id().to_string()
    }

    fn completed_rounds(&self) -> u64 {
        crate::node::Node::completed_rounds(self)
    }

    fn answer(&self, prompt: &str) -> std::result::Result<String, Timeout> {
        greedy_answer(self.state(), prompt, self.config().max_new_tokens)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub node_id: String,
    pub normalized_round: u64,
    pub specialty: Specialty,
    pub instance_seed: u64,
    pub score: f64,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeEntry {
    Eval(EvalRecord),
    Timeout {
        node_id: String,
        normalized_round: u64,
        timestamp: u64,
    },
}

#[derive(Default)]
struct PerNode {
    evaluations: u64,
    last_round: u64,
}

/// The evaluator. Distinct nodes may be evaluated concurrently; the log is
/// append-only.
pub struct Judge {
    seed: u64,
    specialties: Vec<Specialty>,
    clock: AtomicU64,
    nodes: Mutex<HashMap<String, PerNode>>,
    log: Mutex<Vec<JudgeEntry>>,
}

impl Judge {
    pub fn new(seed: u64, specialties: Vec<Specialty>) -> Judge {
        assert!(!specialties.is_empty(), "judge needs at least one specialty");
        Judge {
            seed,
            specialties,
            clock: AtomicU64::new(0),
            nodes: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    /// The `index`-th question of the judge's stream; every node sees the same
    /// sequence, so per-round comparisons are on equal footing.
    pub fn question(&self, index: u64) -> Question {
        let mut rng = seed::rng(self.seed, &[seed::tag::JUDGE, index]);
        let s = self.specialties[rng.gen_range(0..self.specialties.len())];
        generate(s, rng.gen())
    }

    /// Scores an answer; a pure function of question and answer.
    pub fn score(question: &Question, answer: &str) -> f64 {
        verify(question, answer).score
    }

    /// Reserves the next question index and normalized round for `node_id`.
    fn begin(&self, node_id: &str, reported_round: u64) -> (u64, u64) {
        let mut nodes = self.nodes.lock().expect("judge state poisoned");
        let entry = nodes.entry(node_id.to_string()).or_default();
        let index = entry.evaluations;
        entry.evaluations += 1;
        // Restarts can report fewer rounds; keep the per-node sequence monotone.
        entry.last_round = entry.last_round.max(reported_round);
        (index, entry.last_round)
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    fn push(&self, entry: JudgeEntry) {
        self.log.lock().expect("judge log poisoned").push(entry);
    }

    /// One evaluation exchange. Returns `None` when the contestant timed out.
    pub fn evaluate(&self, node: &dyn Contestant) -> Option<EvalRecord> {
        let node_id = node.node_id();
        let (index, normalized_round) = self.begin(&node_id, node.completed_rounds());
        let question = self.question(index);
        match node.answer(&question.prompt) {
            Ok(answer) => {
                let record = EvalRecord {
                    node_id,
                    normalized_round,
                    specialty: question.specialty,
                    instance_seed: question.instance_seed,
                    score: Judge::score(&question, &answer),
                    timestamp: self.tick(),
                };
                self.push(JudgeEntry::Eval(record.clone()));
                Some(record)
            }
            Err(Timeout) => {
                self.push(JudgeEntry::Timeout {
                    node_id,
                    normalized_round,
                    timestamp: self.tick(),
                });
                None
            }
        }
    }

    pub fn entries(&self) -> Vec<JudgeEntry> {
        self.log.lock().expect("judge log poisoned").clone()
    }

    pub fn records(&self) -> Vec<EvalRecord> {
        records_of(&self.entries())
    }

    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        for e in self.entries() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<JudgeEntry>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn records_of(entries: &[JudgeEntry]) -> Vec<EvalRecord> {
    entries
        .iter()
        .filter_map(|e| match e {
            JudgeEntry::Eval(r) => Some(r.clone()),
            JudgeEntry::Timeout { .. } => None,
        })
        .collect()
}

/// Running mean of scores, one point per record, keyed by normalized round.
/// `records` should belong to one node and be sorted by normalized round.
pub fn cumulative_curve(records: &[EvalRecord]) -> Vec<(u64, f64)> {
    let mut total = 0.0;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            total += r.score;
            (r.normalized_round, total / (i + 1) as f64)
        })
        .collect()
}

/// Splits an interleaved log into per-node curves. Each node's records are
/// ordered by (normalized round, timestamp), so the result does not depend on
/// how the log was interleaved.
pub fn curves_by_node(records: &[EvalRecord]) -> BTreeMap<String, Vec<(u64, f64)>> {
    let mut by_node: BTreeMap<String, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_node.entry(r.node_id.clone()).or_default().push(r.clone());
    }
    by_node
        .into_iter()
        .map(|(id, mut rs)| {
            rs.sort_by_key(|r| (r.normalized_round, r.timestamp));
            (id, cumulative_curve(&rs))
        })
        .collect()
}

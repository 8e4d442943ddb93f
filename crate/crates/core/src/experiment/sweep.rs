use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::{Judge, JudgeEntry};
use crate::node::{Node, NodeConfig, RoundReport};
use crate::policy::PolicyState;
use crate::seed;
use crate::swarmnet::{InMemoryTransport, PeerAddr, PeerList, SocketEndpoint, SocketTransport, SwarmPool, Transport};
use crate::taskgen::Specialty;

use super::compare::{compare_configs, ComparisonReport};
use super::config::{ExperimentConfig, TransportKind};
use super::metrics::{ConfigLabel, MetricsTable, SMOOTHING_WINDOW};
use super::priming::primed_policy;

const SOCKET_TIMEOUT: Duration = Duration::from_secs(10);

/// Everything one (configuration, seed) run produced.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: ConfigLabel,
    pub seed: u64,
    /// Reports per node, in round order; a crashed node's list stops early.
    pub reports: Vec<Vec<RoundReport>>,
    pub crashed: Vec<usize>,
    pub judge_log: Vec<JudgeEntry>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.crashed.is_empty()
    }

    pub fn failed_rounds(&self) -> usize {
        self.reports.iter().flatten().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ConfigLabel,
    pub seed: u64,
    pub directory: PathBuf,
    pub rounds_completed: Vec<usize>,
    pub crashed_nodes: Vec<usize>,
    pub failed_rounds: usize,
    pub cumulative_total: f64,
    pub oscillation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalsSummary {
    pub config: ConfigLabel,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub num_nodes: usize,
    pub rounds: usize,
    pub incomplete: bool,
    pub incomplete_configs: Vec<ConfigLabel>,
    pub runs: Vec<RunSummary>,
    pub totals: Vec<TotalsSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_error: Option<String>,
}

pub struct SweepResult {
    pub table: MetricsTable,
    pub runs: Vec<RunOutcome>,
    pub summary: SweepSummary,
    pub comparison: Option<ComparisonReport>,
}

pub fn node_id(index: usize) -> String {
    format!("node-{index}")
}

pub fn run_directory(output_dir: &Path, config: ConfigLabel, seed: u64) -> PathBuf {
    output_dir
        .join(format!("i{}_j{}", config.local, config.external))
        .join(format!("seed{seed}"))
}

fn node_config(cfg: &ExperimentConfig, specs: &[Specialty], label: ConfigLabel, run_seed: u64, k: usize) -> NodeConfig {
    let s = &cfg.node;
    NodeConfig {
        node_id: node_id(k),
        specialties: specs.to_vec(),
        batch_size: s.batch_size,
        completions_per_question: s.completions_per_question,
        local_samples: label.local,
        external_samples: label.external,
        share_fraction: s.share_fraction,
        grpo: cfg.grpo.clone(),
        seed: seed::derive(run_seed, &[seed::tag::NODE, k as u64]),
        sampling: s.sampling,
        max_new_tokens: s.max_new_tokens,
    }
}

/// The common starting policy of every node of every run that uses `run_seed`.
pub fn initial_policy(cfg: &ExperimentConfig, run_seed: u64) -> Result<PolicyState> {
    let specs = cfg.specialty_list()?;
    primed_policy(
        cfg.policy,
        &specs,
        seed::derive(run_seed, &[seed::tag::INIT]),
        &cfg.priming,
    )
}

/// Runs one (configuration, seed) pair from a given initial policy, without
/// touching the filesystem.
pub fn run_single(cfg: &ExperimentConfig, label: ConfigLabel, run_seed: u64, init: &PolicyState) -> Result<RunOutcome> {
    let specs = cfg.specialty_list()?;
    let judge = cfg
        .judge
        .then(|| Judge::new(seed::derive(run_seed, &[seed::tag::JUDGE]), specs.clone()));
    let mut outcome = RunOutcome {
        config: label,
        seed: run_seed,
        reports: vec![Vec::with_capacity(cfg.rounds); cfg.num_nodes],
        crashed: Vec::new(),
        judge_log: Vec::new(),
    };
    match cfg.transport {
        TransportKind::Inmemory => run_inmemory(cfg, &specs, label, run_seed, init, judge.as_ref(), &mut outcome)?,
        TransportKind::Socket => run_socket(cfg, &specs, label, run_seed, init, judge.as_ref(), &mut outcome)?,
    }
    if let Some(j) = judge {
        outcome.judge_log = j.entries();
    }
    Ok(outcome)
}

fn injected(cfg: &ExperimentConfig, k: usize, round: usize) -> bool {
    cfg.fault.is_some_and(|f| f.node == k && f.round == round)
}

/// One guarded round. `None` means the node crashed.
fn guarded_round(cfg: &ExperimentConfig, node: &mut Node, k: usize, round: usize) -> Option<RoundReport> {
    let result = catch_unwind(AssertUnwindSafe(|| {
        if injected(cfg, k, round) {
            panic!("injected fault at node {k} round {round}");
        }
        node.run_round(round as u64)
    }));
    match result {
        Ok(report) => Some(report),
        Err(_) => {
            tracing::warn!(node = k, round, "node crashed; continuing without it");
            None
        }
    }
}

/// Deterministic scheduler: every round, nodes act in index order.
fn run_inmemory(
    cfg: &ExperimentConfig,
    specs: &[Specialty],
    label: ConfigLabel,
    run_seed: u64,
    init: &PolicyState,
    judge: Option<&Judge>,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let transport = Arc::new(InMemoryTransport::new());
    let mut nodes = Vec::with_capacity(cfg.num_nodes);
    for k in 0..cfg.num_nodes {
        let pool = Arc::new(SwarmPool::new(cfg.node.staleness_window, cfg.node.pool_capacity));
        transport.register(&node_id(k), pool.clone());
        let node_cfg = node_config(cfg, specs, label, run_seed, k);
        nodes.push(Some(Node::new(node_cfg, init.clone(), pool, transport.clone())?));
    }
    for round in 0..cfg.rounds {
        for (k, slot) in nodes.iter_mut().enumerate() {
            let Some(node) = slot.as_mut() else { continue };
            match guarded_round(cfg, node, k, round) {
                Some(report) => {
                    outcome.reports[k].push(report);
                    if let Some(j) = judge {
                        j.evaluate(&*node);
                    }
                }
                None => {
                    transport.deregister(&node_id(k));
                    outcome.crashed.push(k);
                    *slot = None;
                }
            }
        }
    }
    Ok(())
}

/// One thread per node, each with its own listener; nodes proceed at their own
/// pace, so results depend on timing.
fn run_socket(
    cfg: &ExperimentConfig,
    specs: &[Specialty],
    label: ConfigLabel,
    run_seed: u64,
    init: &PolicyState,
    judge: Option<&Judge>,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let any: SocketAddr = "127.0.0.1:0".parse().expect("literal address");
    let mut pools = Vec::new();
    let mut endpoints = Vec::new();
    for _ in 0..cfg.num_nodes {
        let pool = Arc::new(SwarmPool::new(cfg.node.staleness_window, cfg.node.pool_capacity));
        endpoints.push(SocketEndpoint::spawn(any, pool.clone())?);
        pools.push(pool);
    }
    let peers = PeerList {
        peers: endpoints
            .iter()
            .enumerate()
            .map(|(k, e)| PeerAddr {
                id: node_id(k),
                addr: e.local_addr().to_string(),
            })
            .collect(),
    };
    let mut nodes = Vec::new();
    for (k, pool) in pools.into_iter().enumerate() {
        let transport: Arc<dyn Transport> = Arc::new(SocketTransport::new(&peers, SOCKET_TIMEOUT)?);
        nodes.push(Node::new(node_config(cfg, specs, label, run_seed, k), init.clone(), pool, transport)?);
    }

    let results: Vec<(Vec<RoundReport>, bool)> = std::thread::scope(|scope| {
        let handles: Vec<_> = nodes
            .into_iter()
            .enumerate()
            .map(|(k, mut node)| {
                scope.spawn(move || {
                    let mut reports = Vec::with_capacity(cfg.rounds);
                    for round in 0..cfg.rounds {
                        match guarded_round(cfg, &mut node, k, round) {
                            Some(r) => {
                                reports.push(r);
                                if let Some(j) = judge {
                                    j.evaluate(&node);
                                }
                            }
                            None => return (reports, true),
                        }
                    }
                    (reports, false)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| (Vec::new(), true)))
            .collect()
    });
    for (k, (reports, crashed)) in results.into_iter().enumerate() {
        if crashed {
            outcome.crashed.push(k);
        }
        outcome.reports[k] = reports;
    }
    drop(endpoints);
    Ok(())
}

pub fn table_of(runs: &[RunOutcome]) -> MetricsTable {
    let mut table = MetricsTable::new();
    for run in runs {
        for (k, reports) in run.reports.iter().enumerate() {
            table.insert_series(run.config, run.seed, k, reports.iter().map(|r| r.mean_reward).collect());
        }
    }
    table
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_run(output_dir: &Path, run: &RunOutcome) -> Result<PathBuf> {
    let dir = run_directory(output_dir, run.config, run.seed);
    fs::create_dir_all(&dir)?;
    for (k, reports) in run.reports.iter().enumerate() {
        write_jsonl(&dir.join(format!("{}.jsonl", node_id(k))), reports)?;
    }
    if !run.judge_log.is_empty() {
        write_jsonl(&dir.join("judge.jsonl"), &run.judge_log)?;
    }
    Ok(dir)
}

/// Runs every (configuration, seed) pair and writes per-node logs, `raw.csv`,
/// `smoothed.csv`, `summary.json` and `comparison.json` under the output
/// directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let out = cfg.output_dir.as_path();
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;

    let prime = |s: &u64| initial_policy(cfg, *s).map(|p| (*s, p));
    let inits: BTreeMap<u64, PolicyState> = if cfg.parallel {
        cfg.seeds.par_iter().map(prime).collect::<Result<_>>()?
    } else {
        cfg.seeds.iter().map(prime).collect::<Result<_>>()?
    };

    let jobs: Vec<(ConfigLabel, u64)> = cfg
        .configurations
        .iter()
        .flat_map(|&(i, j)| cfg.seeds.iter().map(move |&s| (ConfigLabel::new(i, j), s)))
        .collect();
    let run = |&(label, s): &(ConfigLabel, u64)| {
        tracing::info!(config = %label, seed = s, "run started");
        let outcome = run_single(cfg, label, s, &inits[&s]);
        tracing::info!(config = %label, seed = s, "run finished");
        outcome
    };
    // Socket runs open one listener per node; keep them sequential.
    let runs: Vec<RunOutcome> = if cfg.parallel && cfg.transport == TransportKind::Inmemory {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let table = table_of(&runs);
    let mut run_summaries = Vec::new();
    for r in &runs {
        let directory = write_run(out, r)?;
        run_summaries.push(RunSummary {
            config: r.config,
            seed: r.seed,
            directory,
            rounds_completed: r.reports.iter().map(Vec::len).collect(),
            crashed_nodes: r.crashed.clone(),
            failed_rounds: r.failed_rounds(),
            cumulative_total: table.cumulative_total(r.config, r.seed),
            oscillation: table.oscillation(r.config, r.seed, SMOOTHING_WINDOW)?,
        });
    }
    table.write_csv(BufWriter::new(File::create(out.join("raw.csv"))?))?;
    table.write_smoothed_csv(BufWriter::new(File::create(out.join("smoothed.csv"))?), SMOOTHING_WINDOW)?;

    let mut incomplete_configs: Vec<ConfigLabel> =
        runs.iter().filter(|r| !r.is_complete()).map(|r| r.config).collect();
    incomplete_configs.dedup();
    let totals = table
        .configs()
        .into_iter()
        .map(|c| {
            let t: Vec<f64> = table.seeds(c).iter().map(|&s| table.cumulative_total(c, s)).collect();
            TotalsSummary {
                config: c,
                mean: t.iter().sum::<f64>() / t.len() as f64,
                min: t.iter().copied().fold(f64::INFINITY, f64::min),
                max: t.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();

    let (comparison, comparison_error) = match compare_configs(&table) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(c) = &comparison {
        write_json(&out.join("comparison.json"), c)?;
    }
    let summary = SweepSummary {
        num_nodes: cfg.num_nodes,
        rounds: cfg.rounds,
        incomplete: !incomplete_configs.is_empty(),
        incomplete_configs,
        runs: run_summaries,
        totals,
        comparison_error,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(SweepResult {
        table,
        runs,
        summary,
        comparison,
    })
}

/// Reads `summary.json` from a sweep output directory.
pub fn read_summary(output_dir: &Path) -> Result<SweepSummary> {
    let text = fs::read_to_string(output_dir.join("summary.json"))?;
    serde_json::from_str(&text).map_err(Error::from)
}

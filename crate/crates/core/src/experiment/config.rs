use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;
use crate::policy::{Architecture, Sampling, DEFAULT_MAX_NEW_TOKENS};
use crate::swarmnet::{DEFAULT_CAPACITY, DEFAULT_STALENESS_WINDOW};
use crate::taskgen::Specialty;

use super::priming::PrimingConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inmemory,
    Socket,
}

/// Per-node settings shared by every node of every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeSettings {
    pub batch_size: usize,
    pub completions_per_question: usize,
    pub share_fraction: f64,
    pub sampling: Sampling,
    pub max_new_tokens: usize,
    pub staleness_window: u64,
    pub pool_capacity: usize,
}

impl Default for NodeSettings {
    fn default() -> Self {
        NodeSettings {
            batch_size: 8,
            completions_per_question: 8,
            share_fraction: 1.0,
            sampling: Sampling::Temperature(1.0),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            staleness_window: DEFAULT_STALENESS_WINDOW,
            pool_capacity: DEFAULT_CAPACITY,
        }
    }
}

/// Simulated crash of one node at the start of a round (testing aid).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub node: usize,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_nodes: usize,
    pub rounds: usize,
    /// `(I, J)` pairs: local and external groups per round.
    pub configurations: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub transport: TransportKind,
    /// `name` or `name:difficulty`.
    pub specialties: Vec<String>,
    pub output_dir: PathBuf,
    /// Run a pass@1 judge evaluation after every node round.
    pub judge: bool,
    /// Run independent (configuration, seed) pairs on a thread pool.
    pub parallel: bool,
    pub node: NodeSettings,
    pub grpo: GrpoConfig,
    pub policy: Architecture,
    pub priming: PrimingConfig,
    pub fault: Option<FaultInjection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            num_nodes: 8,
            rounds: 300,
            configurations: vec![(8, 0), (6, 2), (4, 4), (2, 6)],
            seeds: vec![0, 1, 2, 3, 4],
            transport: TransportKind::Inmemory,
            specialties: vec!["basic_arithmetic".into(), "base_conversion".into()],
            output_dir: PathBuf::from("runs"),
            judge: false,
            parallel: true,
            node: NodeSettings::default(),
            grpo: GrpoConfig::default(),
            policy: Architecture::default(),
            priming: PrimingConfig::default(),
            fault: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn specialty_list(&self) -> Result<Vec<Specialty>> {
        self.specialties.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.rounds == 0 {
            return Err(Error::Config("num_nodes and rounds must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.configurations.is_empty() {
            return Err(Error::Config("configurations must not be empty".into()));
        }
        for &(i, j) in &self.configurations {
            if i < 1 || i + j != self.node.batch_size {
                return Err(Error::Config(format!(
                    "configuration {i}/{j}: need I >= 1 and I + J == batch_size ({})",
                    self.node.batch_size
                )));
            }
        }
        if self.specialty_list()?.is_empty() {
            return Err(Error::Config("specialties must not be empty".into()));
        }
        self.policy.validate()?;
        self.grpo.validate()?;
        Ok(())
    }
}

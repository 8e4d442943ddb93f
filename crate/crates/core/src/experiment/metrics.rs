use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SMOOTHING_WINDOW: usize = 100;

/// An `I`-local / `J`-external configuration, written `I/J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigLabel {
    pub local: usize,
    pub external: usize,
}

impl ConfigLabel {
    pub fn new(local: usize, external: usize) -> Self {
        ConfigLabel { local, external }
    }
}

impl fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.local, self.external)
    }
}

impl FromStr for ConfigLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("configuration label `{s}` is not I/J"));
        let (i, j) = s.split_once('/').ok_or_else(bad)?;
        Ok(ConfigLabel::new(
            i.trim().parse().map_err(|_| bad())?,
            j.trim().parse().map_err(|_| bad())?,
        ))
    }
}

impl Serialize for ConfigLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConfigLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One row of `raw.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub config: ConfigLabel,
    pub seed: u64,
    pub node: usize,
    pub round: usize,
    pub mean_reward: f64,
}

/// Trailing moving average; positions with fewer than `window` predecessors
/// average the available prefix.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("smoothing window must be at least 1".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let span = &series[start..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

/// Population variance of consecutive differences; 0 for fewer than 3 points.
pub fn first_difference_variance(series: &[f64]) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Per-round mean rewards for every (configuration, seed, node).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    series: BTreeMap<(ConfigLabel, u64), BTreeMap<usize, Vec<f64>>>,
}

impl MetricsTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one node's series; rounds are its indices.
    pub fn insert_series(&mut self, config: ConfigLabel, seed: u64, node: usize, rewards: Vec<f64>) {
        self.series.entry((config, seed)).or_default().insert(node, rewards);
    }

    pub fn from_rows(rows: impl IntoIterator<Item = MetricRow>) -> Result<Self> {
        let mut staged: BTreeMap<(ConfigLabel, u64, usize), BTreeMap<usize, f64>> = BTreeMap::new();
        for r in rows {
            if staged
                .entry((r.config, r.seed, r.node))
                .or_default()
                .insert(r.round, r.mean_reward)
                .is_some()
            {
                return Err(Error::InvalidArgument(format!(
                    "duplicate row for {} seed {} node {} round {}",
                    r.config, r.seed, r.node, r.round
                )));
            }
        }
        let mut table = MetricsTable::new();
        for ((config, seed, node), rounds) in staged {
            if rounds.keys().enumerate().any(|(i, &r)| i != r) {
                return Err(Error::InvalidArgument(format!(
                    "{config} seed {seed} node {node}: rounds are not contiguous from 0"
                )));
            }
            table.insert_series(config, seed, node, rounds.into_values().collect());
        }
        Ok(table)
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        let mut out = Vec::new();
        for (&(config, seed), nodes) in &self.series {
            for (&node, rewards) in nodes {
                for (round, &mean_reward) in rewards.iter().enumerate() {
                    out.push(MetricRow {
                        config,
                        seed,
                        node,
                        round,
                        mean_reward,
                    });
                }
            }
        }
        out
    }

    pub fn configs(&self) -> Vec<ConfigLabel> {
        let mut c: Vec<ConfigLabel> = self.series.keys().map(|k| k.0).collect();
        c.dedup();
        c
    }

    pub fn seeds(&self, config: ConfigLabel) -> Vec<u64> {
        self.series.keys().filter(|k| k.0 == config).map(|k| k.1).collect()
    }

    pub fn agent_series(&self, config: ConfigLabel, seed: u64) -> Vec<&[f64]> {
        self.series
            .get(&(config, seed))
            .map(|nodes| nodes.values().map(Vec::as_slice).collect())
            .unwrap_or_default()
    }

    /// Round count shared by every agent of a run, or `None` if they differ.
    pub fn round_count(&self, config: ConfigLabel, seed: u64) -> Option<usize> {
        let series = self.agent_series(config, seed);
        let n = series.first()?.len();
        series.iter().all(|s| s.len() == n).then_some(n)
    }

    /// Sum over agents and rounds of the per-round mean reward.
    pub fn cumulative_total(&self, config: ConfigLabel, seed: u64) -> f64 {
        self.agent_series(config, seed).iter().flat_map(|s| s.iter()).sum()
    }

    /// Mean over agents at each round (over the shortest series).
    pub fn agent_average(&self, config: ConfigLabel, seed: u64) -> Vec<f64> {
        let series = self.agent_series(config, seed);
        let len = series.iter().map(|s| s.len()).min().unwrap_or(0);
        (0..len)
            .map(|r| series.iter().map(|s| s[r]).sum::<f64>() / series.len() as f64)
            .collect()
    }

    /// Smoothed agent-average with the min/max of the smoothed per-agent curves.
    pub fn smoothed_envelope(&self, config: ConfigLabel, seed: u64, window: usize) -> Result<Envelope> {
        let smoothed: Vec<Vec<f64>> = self
            .agent_series(config, seed)
            .iter()
            .map(|s| smooth(s, window))
            .collect::<Result<_>>()?;
        let len = smoothed.iter().map(Vec::len).min().unwrap_or(0);
        let column = |r: usize| smoothed.iter().map(move |s| s[r]);
        Ok(Envelope {
            mean: smooth(&self.agent_average(config, seed), window)?,
            min: (0..len).map(|r| column(r).fold(f64::INFINITY, f64::min)).collect(),
            max: (0..len).map(|r| column(r).fold(f64::NEG_INFINITY, f64::max)).collect(),
        })
    }

    /// Variance of the first differences of the smoothed agent-average curve.
    pub fn oscillation(&self, config: ConfigLabel, seed: u64, window: usize) -> Result<f64> {
        Ok(first_difference_variance(&smooth(&self.agent_average(config, seed), window)?))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.rows() {
            out.serialize(row).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let rows = reader
            .deserialize::<MetricRow>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(csv_err)?;
        MetricsTable::from_rows(rows)
    }

    /// `smoothed.csv`: per (config, seed, round) the smoothed agent mean and
    /// the agent min/max envelope.
    pub fn write_smoothed_csv<W: Write>(&self, w: W, window: usize) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["config", "seed", "round", "mean", "min", "max"])
            .map_err(csv_err)?;
        for &(config, seed) in self.series.keys() {
            let env = self.smoothed_envelope(config, seed, window)?;
            for r in 0..env.mean.len() {
                out.write_record(&[
                    config.to_string(),
                    seed.to_string(),
                    r.to_string(),
                    env.mean[r].to_string(),
                    env.min[r].to_string(),
                    env.max[r].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth(&[0.0, 1.0, 1.0], 2).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(smooth(&[2.0; 5], 100).unwrap(), vec![2.0; 5]);
        assert_eq!(smooth(&[1.0, 2.0, 3.0], 10).unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(smooth(&[], 3).unwrap().is_empty());
        assert!(smooth(&[1.0], 0).is_err());
    }

    #[test]
    fn label_round_trips() {
        let l: ConfigLabel = "4/4".parse().unwrap();
        assert_eq!(l, ConfigLabel::new(4, 4));
        assert_eq!(l.to_string(), "4/4");
        assert!("4-4".parse::<ConfigLabel>().is_err());
    }

    #[test]
    fn first_difference_variance_of_line_is_zero() {
        let line: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        assert!(first_difference_variance(&line).abs() < 1e-15);
        // Differences [1, -1, 1]: mean 1/3, variance 8/9.
        let zig = [0.0, 1.0, 0.0, 1.0];
        assert!((first_difference_variance(&zig) - 8.0 / 9.0).abs() < 1e-12);
    }

    fn sample_table() -> MetricsTable {
        let mut t = MetricsTable::new();
        t.insert_series(ConfigLabel::new(8, 0), 1, 0, vec![0.0, 0.5, 1.0]);
        t.insert_series(ConfigLabel::new(8, 0), 1, 1, vec![1.0, 0.5, 0.0]);
        t.insert_series(ConfigLabel::new(4, 4), 1, 0, vec![0.25, 0.25, 0.25]);
        t
    }

    #[test]
    fn totals_averages_and_envelopes() {
        let t = sample_table();
        let base = ConfigLabel::new(8, 0);
        assert!((t.cumulative_total(base, 1) - 3.0).abs() < 1e-12);
        assert_eq!(t.agent_average(base, 1), vec![0.5, 0.5, 0.5]);
        let env = t.smoothed_envelope(base, 1, 1).unwrap();
        assert_eq!(env.min, vec![0.0, 0.5, 0.0]);
        assert_eq!(env.max, vec![1.0, 0.5, 1.0]);
        assert_eq!(t.round_count(base, 1), Some(3));
        assert_eq!(t.configs(), vec![ConfigLabel::new(4, 4), base]);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let t = sample_table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("config,seed,node,round,mean_reward\n"));
        assert_eq!(MetricsTable::read_csv(buf.as_slice()).unwrap(), t);
        let mut sm = Vec::new();
        t.write_smoothed_csv(&mut sm, 100).unwrap();
        assert_eq!(String::from_utf8(sm).unwrap().lines().count(), 1 + 6);
    }

    #[test]
    fn gaps_and_duplicates_rejected() {
        let row = |round| MetricRow {
            config: ConfigLabel::new(8, 0),
            seed: 0,
            node: 0,
            round,
            mean_reward: 0.0,
        };
        assert!(MetricsTable::from_rows([row(0), row(2)]).is_err());
        assert!(MetricsTable::from_rows([row(0), row(0)]).is_err());
        assert!(MetricsTable::from_rows([row(1), row(0)]).is_ok());
    }

    proptest! {
        #[test]
        fn smoothing_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 0..200),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            window in 1usize..150,
        ) {
            let ys: Vec<f64> = xs.iter().map(|x| x.sin() * 4.0).collect();
            let mix: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = smooth(&mix, window).unwrap();
            let sx = smooth(&xs, window).unwrap();
            let sy = smooth(&ys, window).unwrap();
            prop_assert_eq!(lhs.len(), xs.len());
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * sx[i] + b * sy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn smoothing_constant_is_identity(c in -5.0f64..5.0, n in 0usize..300, window in 1usize..200) {
            for v in smooth(&vec![c; n], window).unwrap() {
                prop_assert!((v - c).abs() < 1e-12);
            }
        }

        #[test]
        fn cumulative_total_is_additive(series in proptest::collection::vec(
            proptest::collection::vec(0.0f64..1.0, 20), 1..6)) {
            let mut t = MetricsTable::new();
            let label = ConfigLabel::new(6, 2);
            for (k, s) in series.iter().enumerate() {
                t.insert_series(label, 3, k, s.clone());
            }
            let direct: f64 = series.iter().flatten().sum();
            prop_assert!((t.cumulative_total(label, 3) - direct).abs() < 1e-9);
        }
    }
}

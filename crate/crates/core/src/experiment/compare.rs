use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::{ConfigLabel, Envelope, MetricsTable, SMOOTHING_WINDOW};

/// Floored integer percentage of `total` over `baseline`; `None` for a zero baseline.
pub fn improvement_percent(baseline: f64, total: f64) -> Option<i64> {
    if baseline == 0.0 {
        return None;
    }
    let pct = (total - baseline) / baseline * 100.0;
    // Guard against 94.99999999 from rounding noise in the ratio.
    let nudged = pct + 1e-9 * pct.abs().max(1.0);
    Some(nudged.floor() as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Nonzero paired differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Exact two-sided p-value.
    pub p_value: f64,
    /// No nonzero differences: the test carries no information.
    pub degenerate: bool,
}

/// Paired Wilcoxon signed-rank test on `a[i] - b[i]`; zero differences are
/// dropped and tied magnitudes get average ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("wilcoxon difference".into()));
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            n: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        });
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    // Doubled ranks stay integral under averaging of ties.
    let mut doubled = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let rank_sum = (i + 1 + j + 1) as u64;
        for r in &mut doubled[i..=j] {
            *r = rank_sum;
        }
        i = j + 1;
    }
    let plus2: u64 = diffs.iter().zip(&doubled).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = doubled.iter().sum();
    let minus2 = total2 - plus2;

    let mut counts = vec![0f64; total2 as usize + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r as usize..=total2 as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let all: f64 = counts.iter().sum();
    let lower = plus2.min(minus2) as usize;
    let tail: f64 = counts[..=lower].iter().sum::<f64>() / all;
    Ok(WilcoxonResult {
        n,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        statistic: lower as f64 / 2.0,
        p_value: (2.0 * tail).min(1.0),
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: ConfigLabel,
    pub seeds: Vec<u64>,
    pub totals: Vec<f64>,
    pub mean_total: f64,
    pub min_total: f64,
    pub max_total: f64,
    /// Floored percent improvement of `mean_total` over the baseline mean.
    pub improvement_percent: Option<i64>,
    /// Mean over seeds of the paired relative improvement (a fraction).
    pub mean_improvement: Option<f64>,
    /// Seeds whose total beats the paired baseline total.
    pub seeds_beating_baseline: usize,
    pub oscillation: Vec<f64>,
    pub mean_oscillation: f64,
    /// Per seed: agent-averaged smoothed curve and agent envelope.
    pub envelopes: Vec<Envelope>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: ConfigLabel,
    pub b: ConfigLabel,
    pub seeds: Vec<u64>,
    pub wilcoxon: WilcoxonResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: ConfigLabel,
    pub rounds: usize,
    pub window: usize,
    pub configs: Vec<ConfigSummary>,
    pub pairwise: Vec<PairwiseComparison>,
}

impl ComparisonReport {
    pub fn config(&self, label: ConfigLabel) -> Option<&ConfigSummary> {
        self.configs.iter().find(|c| c.config == label)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Picks the configuration without external groups, else the first one.
pub fn default_baseline(table: &MetricsTable) -> Option<ConfigLabel> {
    let configs = table.configs();
    configs.iter().copied().find(|c| c.external == 0).or_else(|| configs.first().copied())
}

/// Requires at least 2 configurations and 3 seeds per configuration.
pub fn compare_configs(table: &MetricsTable) -> Result<ComparisonReport> {
    compare_with(table, None, 2, 3, SMOOTHING_WINDOW)
}

pub fn compare_with(
    table: &MetricsTable,
    baseline: Option<ConfigLabel>,
    min_configs: usize,
    min_seeds: usize,
    window: usize,
) -> Result<ComparisonReport> {
    let configs = table.configs();
    if configs.len() < min_configs {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_configs} configurations, found {}",
            configs.len()
        )));
    }
    let baseline = match baseline {
        Some(b) if configs.contains(&b) => b,
        Some(b) => return Err(Error::InvalidArgument(format!("baseline {b} has no data"))),
        None => default_baseline(table).expect("configs nonempty"),
    };

    let mut rounds: Option<(String, usize)> = None;
    for &c in &configs {
        let seeds = table.seeds(c);
        if seeds.len() < min_seeds {
            return Err(Error::InvalidArgument(format!(
                "configuration {c} has {} seeds, need at least {min_seeds}",
                seeds.len()
            )));
        }
        for s in seeds {
            let label = format!("{c} seed {s}");
            let n = table.round_count(c, s).ok_or_else(|| {
                Error::InvalidArgument(format!("{label}: agents report different round counts"))
            })?;
            match &rounds {
                None => rounds = Some((label, n)),
                Some((first, m)) if *m != n => {
                    return Err(Error::MismatchedRounds {
                        a: first.clone(),
                        b: label,
                        rounds_a: *m,
                        rounds_b: n,
                    })
                }
                Some(_) => {}
            }
        }
    }

    let base_seeds = table.seeds(baseline);
    let base_totals: Vec<f64> = base_seeds.iter().map(|&s| table.cumulative_total(baseline, s)).collect();
    let base_mean = mean(&base_totals);

    let mut summaries = Vec::new();
    for &c in &configs {
        let seeds = table.seeds(c);
        let totals: Vec<f64> = seeds.iter().map(|&s| table.cumulative_total(c, s)).collect();
        let oscillation = seeds
            .iter()
            .map(|&s| table.oscillation(c, s, window))
            .collect::<Result<Vec<_>>>()?;
        let envelopes = seeds
            .iter()
            .map(|&s| table.smoothed_envelope(c, s, window))
            .collect::<Result<Vec<_>>>()?;

        let mut ratios = Vec::new();
        let mut beating = 0;
        for (s, t) in seeds.iter().zip(&totals) {
            if let Some(k) = base_seeds.iter().position(|b| b == s) {
                let base = base_totals[k];
                if *t > base {
                    beating += 1;
                }
                if base != 0.0 {
                    ratios.push((t - base) / base);
                }
            }
        }
        let mean_total = mean(&totals);
        summaries.push(ConfigSummary {
            config: c,
            seeds,
            mean_total,
            min_total: totals.iter().copied().fold(f64::INFINITY, f64::min),
            max_total: totals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            totals,
            improvement_percent: improvement_percent(base_mean, mean_total),
            mean_improvement: (!ratios.is_empty()).then(|| mean(&ratios)),
            seeds_beating_baseline: beating,
            mean_oscillation: mean(&oscillation),
            oscillation,
            envelopes,
        });
    }

    let mut pairwise = Vec::new();
    for (i, &a) in configs.iter().enumerate() {
        for &b in &configs[i + 1..] {
            let seeds: Vec<u64> = table.seeds(a).into_iter().filter(|s| table.seeds(b).contains(s)).collect();
            let ta: Vec<f64> = seeds.iter().map(|&s| table.cumulative_total(a, s)).collect();
            let tb: Vec<f64> = seeds.iter().map(|&s| table.cumulative_total(b, s)).collect();
            pairwise.push(PairwiseComparison {
                a,
                b,
                wilcoxon: wilcoxon_signed_rank(&ta, &tb)?,
                seeds,
            });
        }
    }

    Ok(ComparisonReport {
        baseline,
        rounds: rounds.map(|r| r.1).unwrap_or(0),
        window,
        configs: summaries,
        pairwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_totals_floor_to_94() {
        assert_eq!(improvement_percent(561.79, 1093.31), Some(94));
        assert_eq!(improvement_percent(561.79, 561.79), Some(0));
        assert_eq!(improvement_percent(0.0, 3.0), None);
        assert_eq!(improvement_percent(100.0, 50.0), Some(-50));
        assert_eq!(improvement_percent(3.0, 2.0), Some(-34));
    }

    #[test]
    fn wilcoxon_exact_small_cases() {
        // All five differences positive: W- = 0, p = 2/32.
        let w = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(w.w_plus, 15.0);
        assert_eq!(w.statistic, 0.0);
        assert!((w.p_value - 0.0625).abs() < 1e-12);

        // Ranks 1..4 with signs (+,-,+,+): W+ = 1+3+4 = 8, W- = 2.
        // P(W <= 2) over 16 sign patterns: sums 0,1,2,(1+... ) -> {},{1},{2} = 3/16.
        let w = wilcoxon_signed_rank(&[1.0, -2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        assert_eq!((w.w_plus, w.w_minus), (8.0, 2.0));
        assert!((w.p_value - 6.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_ties_get_average_ranks() {
        let w = wilcoxon_signed_rank(&[1.0, -1.0, 2.0], &[0.0; 3]).unwrap();
        assert_eq!((w.w_plus, w.w_minus), (4.5, 1.5));
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(w.degenerate);
        assert_eq!(w.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[1.0], &[]).is_err());
    }

    fn table(spec: &[(ConfigLabel, u64, f64, usize)]) -> MetricsTable {
        let mut t = MetricsTable::new();
        for &(c, s, level, rounds) in spec {
            for node in 0..2 {
                t.insert_series(c, s, node, vec![level; rounds]);
            }
        }
        t
    }

    #[test]
    fn compare_reports_improvement_and_wins() {
        let base = ConfigLabel::new(8, 0);
        let mixed = ConfigLabel::new(4, 4);
        let mut spec = Vec::new();
        for s in 0..4 {
            spec.push((base, s, 0.25, 10));
            spec.push((mixed, s, 0.5, 10));
        }
        let report = compare_configs(&table(&spec)).unwrap();
        assert_eq!(report.baseline, base);
        let m = report.config(mixed).unwrap();
        assert_eq!(m.improvement_percent, Some(100));
        assert_eq!(m.seeds_beating_baseline, 4);
        assert!((m.mean_total - 10.0).abs() < 1e-12);
        let b = report.config(base).unwrap();
        assert_eq!(b.improvement_percent, Some(0));
        assert!(b.mean_improvement.unwrap().abs() < 1e-9);
        assert_eq!(report.pairwise.len(), 1);
        assert!(!report.pairwise[0].wilcoxon.degenerate);
    }

    #[test]
    fn mismatched_rounds_name_both_configs() {
        let a = ConfigLabel::new(8, 0);
        let b = ConfigLabel::new(2, 6);
        let spec: Vec<_> = (0..3).flat_map(|s| [(a, s, 0.1, 10), (b, s, 0.1, 12)]).collect();
        match compare_configs(&table(&spec)) {
            Err(Error::MismatchedRounds { a, b, rounds_a, rounds_b }) => {
                assert!(a.contains("2/6") || b.contains("2/6"));
                assert!(a.contains("8/0") || b.contains("8/0"));
                assert_ne!(rounds_a, rounds_b);
            }
            other => panic!("expected MismatchedRounds, got {other:?}"),
        }
    }

    #[test]
    fn too_few_seeds_or_configs_rejected() {
        let a = ConfigLabel::new(8, 0);
        let b = ConfigLabel::new(4, 4);
        let spec: Vec<_> = (0..2).flat_map(|s| [(a, s, 0.1, 5), (b, s, 0.1, 5)]).collect();
        assert!(compare_configs(&table(&spec)).is_err());
        let spec: Vec<_> = (0..3).map(|s| (a, s, 0.1, 5)).collect();
        assert!(compare_configs(&table(&spec)).is_err());
    }
}

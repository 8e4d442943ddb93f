//! The controlled sweep over `I`/`J` configurations, plus metrics, smoothing
//! and configuration comparison.

mod compare;
mod config;
mod metrics;
mod priming;
mod sweep;

pub use compare::{
    compare_configs, compare_with, default_baseline, improvement_percent, wilcoxon_signed_rank, ComparisonReport,
    ConfigSummary, PairwiseComparison, WilcoxonResult,
};
pub use config::{ExperimentConfig, FaultInjection, NodeSettings, TransportKind};
pub use metrics::{first_difference_variance, smooth, ConfigLabel, Envelope, MetricRow, MetricsTable, SMOOTHING_WINDOW};
pub use priming::{format_exemplar, primed_policy, PrimingConfig};
pub use sweep::{
    initial_policy, node_id, read_summary, run_directory, run_single, run_sweep, table_of, RunOutcome, RunSummary,
    SweepResult, SweepSummary, TotalsSummary,
};

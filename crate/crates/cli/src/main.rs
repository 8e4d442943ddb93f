use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use sapo_core::experiment::{
    compare_with, run_sweep, ConfigLabel, ExperimentConfig, MetricsTable, SMOOTHING_WINDOW,
};
use sapo_core::judge::{curves_by_node, read_log, records_of};

#[derive(Parser)]
#[command(name = "sapo", version, about = "Swarm sampling policy optimization at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a TOML config file.
    Run {
        /// Config file; omit to use the built-in defaults.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the effective config as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Smooth a raw metrics CSV into per-run mean/min/max curves.
    Smooth {
        input: PathBuf,
        #[arg(short, long, default_value_t = SMOOTHING_WINDOW)]
        window: usize,
        /// Defaults to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare configurations in a raw metrics CSV.
    Compare {
        input: PathBuf,
        /// Baseline configuration as `I/J`; defaults to the one with J = 0.
        #[arg(short, long)]
        baseline: Option<ConfigLabel>,
        #[arg(short, long, default_value_t = SMOOTHING_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        min_seeds: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Per-node cumulative pass@1 curves from a judge log.
    JudgeCurve {
        log: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn sink(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn read_table(path: &PathBuf) -> anyhow::Result<MetricsTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(MetricsTable::read_csv(BufReader::new(file))?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            output,
            print_config,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
                None => ExperimentConfig::default(),
            };
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if print_config {
                print!("{}", cfg.to_toml_string());
                return Ok(ExitCode::SUCCESS);
            }
            let result = run_sweep(&cfg)?;
            for t in &result.summary.totals {
                println!("{:>5}  total {:>10.3}  [{:.3}, {:.3}]", t.config, t.mean, t.min, t.max);
            }
            if let Some(c) = &result.comparison {
                for s in &c.configs {
                    if let Some(p) = s.improvement_percent {
                        println!("{:>5}  {:+}% vs {}", s.config, p, c.baseline);
                    }
                }
            }
            println!("wrote {}", cfg.output_dir.display());
            if result.summary.incomplete {
                eprintln!("sweep incomplete: {:?}", result.summary.incomplete_configs);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Smooth { input, window, output } => {
            let table = read_table(&input)?;
            table.write_smoothed_csv(sink(output.as_ref())?, window)?;
        }
        Command::Compare {
            input,
            baseline,
            window,
            min_seeds,
            output,
        } => {
            let table = read_table(&input)?;
            let report = compare_with(&table, baseline, 2, min_seeds, window)?;
            let mut w = sink(output.as_ref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
        }
        Command::JudgeCurve { log, output } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let records = records_of(&read_log(BufReader::new(file))?);
            if records.is_empty() {
                bail!("{} has no evaluation records", log.display());
            }
            let mut w = sink(output.as_ref())?;
            writeln!(w, "node_id,normalized_round,cumulative_mean")?;
            for (node, curve) in curves_by_node(&records) {
                for (round, mean) in curve {
                    writeln!(w, "{node},{round},{mean}")?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}


//! Command-line surface: dataset generation, fitting, oracles, benchmarks and
//! the synthetic experiment suites. Every command reads one JSON config
//! (`--config`), lets `--seed` override its top-level seed, and writes under
//! `--out`.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod io;
pub mod oracle;
pub mod pipeline;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::synthdata::{self, SynthSpec};

pub use config::{DatasetSource, Pipeline, RunConfig};
pub use experiment::ExperimentName;
pub use pipeline::{fit, FitOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "gcr", version, about = "Groupwise constrained reconstruction subspace clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the command; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record wall time in result files (makes them run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset CSV and its JSON sidecar.
    Gen,
    /// Run a clustering pipeline end to end.
    Fit,
    /// Compare the sampler against the enumeration and quadrature oracles.
    Oracle,
    /// Time one Gibbs epoch on the cached and naive paths.
    Bench,
    /// Run a synthetic experiment suite.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Generator settings; its `seed` is replaced by one derived from `seed`.
    pub dataset: SynthSpec,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct GenSidecar<'a> {
    version: &'a str,
    seed: u64,
    spec: SynthSpec,
    noisy: &'a [usize],
}

#[derive(Debug, Serialize)]
struct FitResults<'a> {
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    n: usize,
    dim: usize,
    accuracy: Option<f64>,
    init_accuracy: Option<f64>,
    clusters_last: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
struct OracleResults<'a> {
    version: &'a str,
    seed: u64,
    config: &'a oracle::OracleConfig,
    checks: &'a [oracle::CheckReport],
    pass: bool,
}

#[derive(Debug, Serialize)]
struct ExperimentResults<'a> {
    version: &'a str,
    name: ExperimentName,
    seed: u64,
    config: &'a experiment::ExperimentConfig,
    summary: &'a [experiment::SummaryRow],
    runs: &'a [experiment::RunRecord],
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_seconds: Option<f64>,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one command. `Ok(false)` means it completed but a requested check failed.
pub fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(threads) = cli.threads {
        // A second call in the same process keeps the existing pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let cfg_path = cli.config.as_deref();
    match &cli.command {
        Command::Gen => {
            let mut cfg: GenConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cmd_gen(&cfg, &cli.out)?;
            Ok(true)
        }
        Command::Fit => {
            let mut cfg: RunConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = cmd_fit(cfg, &cli.out, cli.timing)?;
            match out.accuracy {
                Some(a) => println!("accuracy {a:.4}"),
                None => println!("fit complete ({} samples)", out.labels.len()),
            }
            Ok(true)
        }
        Command::Oracle => {
            let mut cfg: oracle::OracleConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cmd_oracle(&cfg, &cli.out)
        }
        Command::Bench => {
            let mut cfg: bench::BenchConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let rows = bench::run_bench(&cfg)?;
            write_csv_rows(&cli.out.join("bench.csv"), &rows)?;
            for r in &rows {
                match r.naive_seconds {
                    Some(nv) => println!("N={} cached {:.4}s naive {:.4}s", r.n, r.cached_seconds, nv),
                    None => println!("N={} cached {:.4}s", r.n, r.cached_seconds),
                }
            }
            Ok(true)
        }
        Command::Experiment { name } => {
            let mut cfg: experiment::ExperimentConfig = load_config(cfg_path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cmd_experiment(*name, &cfg, &cli.out, cli.timing)?;
            Ok(true)
        }
    }
}

pub fn cmd_gen(cfg: &GenConfig, out: &Path) -> anyhow::Result<()> {
    let spec = SynthSpec {
        seed: config::derive_seed(cfg.seed, config::STREAM_GENERATOR),
        ..cfg.dataset
    };
    let noisy = synthdata::gen_noisy(&spec)?;
    io::write_dataset_csv(&noisy.data, io::create(&out.join("dataset.csv"))?)?;
    io::write_json(
        &out.join("dataset.json"),
        &GenSidecar {
            version: VERSION,
            seed: cfg.seed,
            spec,
            noisy: &noisy.noisy,
        },
    )
}

pub fn cmd_fit(cfg: RunConfig, out: &Path, timing: bool) -> anyhow::Result<FitOutcome> {
    let start = Instant::now();
    let cfg = cfg.resolve()?;
    let data = match &cfg.dataset {
        DatasetSource::Generate(spec) => synthdata::gen_noisy(spec)?.data,
        DatasetSource::Csv { path } => io::read_dataset_csv(path)?,
    };
    let outcome = fit(&data, &cfg)?;
    io::write_labels_csv(&outcome.labels, io::create(&out.join("labels.csv"))?)?;
    if cfg.write_affinity {
        let mut f = io::create(&out.join("affinity.csv"))?;
        outcome.affinity.write_csv(&mut f)?;
    }
    io::write_json(
        &out.join("results.json"),
        &FitResults {
            version: VERSION,
            seed: cfg.seed,
            config: &cfg,
            n: data.len(),
            dim: data.dim(),
            accuracy: outcome.accuracy,
            init_accuracy: outcome.init_accuracy,
            clusters_last: outcome.clusters_last,
            wall_seconds: timing.then(|| start.elapsed().as_secs_f64()),
        },
    )?;
    Ok(outcome)
}

pub fn cmd_oracle(cfg: &oracle::OracleConfig, out: &Path) -> anyhow::Result<bool> {
    let checks = oracle::run_checks(cfg)?;
    for c in &checks {
        println!("{}: {}", c.name, c.line());
    }
    let pass = checks.iter().all(|c| c.pass);
    io::write_json(
        &out.join("oracle.json"),
        &OracleResults {
            version: VERSION,
            seed: cfg.seed,
            config: cfg,
            checks: &checks,
            pass,
        },
    )?;
    Ok(pass)
}

pub fn cmd_experiment(
    name: ExperimentName,
    cfg: &experiment::ExperimentConfig,
    out: &Path,
    timing: bool,
) -> anyhow::Result<Vec<experiment::SummaryRow>> {
    let start = Instant::now();
    let runs = experiment::run_experiment(name, cfg)?;
    let summary = experiment::summarize(&runs);
    let stem = match name {
        ExperimentName::Fig3a => "fig3a",
        ExperimentName::Fig3b => "fig3b",
    };
    write_csv_rows(&out.join(format!("{stem}.csv")), &summary)?;
    write_csv_rows(&out.join(format!("{stem}_runs.csv")), &runs)?;
    io::write_json(
        &out.join(format!("{stem}.json")),
        &ExperimentResults {
            version: VERSION,
            name,
            seed: cfg.seed,
            config: cfg,
            summary: &summary,
            runs: &runs,
            wall_seconds: timing.then(|| start.elapsed().as_secs_f64()),
        },
    )?;
    for row in &summary {
        println!(
            "{stem} {:?} k={} noise={:.2} mean={:.4} min={:.4} max={:.4}",
            row.method, row.k, row.noise_fraction, row.mean, row.min, row.max
        );
    }
    Ok(summary)
}

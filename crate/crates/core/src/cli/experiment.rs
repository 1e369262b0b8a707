//! The two synthetic suites: growing `K` on noise-free lines, and a growing
//! fraction of noisy samples at `K = 2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::synthdata::{self, SynthSpec};

use super::config::{ChainParams, DatasetSource, ModelParams, Pipeline, RunConfig};
use super::pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    /// K = 2..8 noise-free lines.
    Fig3a,
    /// K = 2 with 0%..40% noisy samples.
    Fig3b,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub methods: Vec<Pipeline>,
    pub model: ModelParams,
    pub chain: ChainParams,
    pub n_per_cluster: usize,
    /// Cluster counts for fig3a.
    pub ks: Vec<usize>,
    /// Noise fractions for fig3b.
    pub noise_fractions: Vec<f64>,
    /// Repeat `r` uses root seed `seed + r`, shared by every setting and method.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            methods: vec![Pipeline::GcrMap, Pipeline::GcrDpBayes],
            model: ModelParams::default(),
            chain: ChainParams::default(),
            n_per_cluster: 50,
            ks: (2..=8).collect(),
            noise_fractions: (0..=8).map(|i| i as f64 * 0.05).collect(),
            seed: 0,
        }
    }
}

/// One (setting, method, repeat) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Pipeline,
    pub k: usize,
    pub noise_fraction: f64,
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub init_accuracy: f64,
    pub clusters_last: usize,
}

/// Accuracy over repeats for one (setting, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Pipeline,
    pub k: usize,
    pub noise_fraction: f64,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

fn settings(name: ExperimentName, cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
    match name {
        ExperimentName::Fig3a => cfg.ks.iter().map(|&k| (k, 0.0)).collect(),
        ExperimentName::Fig3b => cfg.noise_fractions.iter().map(|&f| (2, f)).collect(),
    }
}

/// Every run of the suite, in (setting, method, repeat) order regardless of
/// how the worker pool schedules them.
pub fn run_experiment(name: ExperimentName, cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let mut jobs = Vec::new();
    for (k, f) in settings(name, cfg) {
        for &method in &cfg.methods {
            for r in 0..cfg.repeats {
                jobs.push((k, f, method, r));
            }
        }
    }
    jobs.par_iter()
        .map(|&(k, noise_fraction, method, repeat)| {
            let seed = cfg.seed.wrapping_add(repeat as u64);
            let run = RunConfig {
                dataset: DatasetSource::Generate(SynthSpec {
                    noise_fraction,
                    ..SynthSpec::new(k, cfg.n_per_cluster, 0)
                }),
                model: cfg.model,
                chain: cfg.chain,
                pipeline: method,
                k: Some(k),
                seed,
                ..RunConfig::default()
            }
            .resolve()?;
            let DatasetSource::Generate(spec) = &run.dataset else {
                unreachable!("generated above")
            };
            let data = synthdata::gen_noisy(spec)?.data;
            let out = pipeline::fit(&data, &run)?;
            Ok(RunRecord {
                method,
                k,
                noise_fraction,
                repeat,
                seed,
                accuracy: out.accuracy.expect("synthetic data is labeled"),
                init_accuracy: out.init_accuracy.expect("synthetic data is labeled"),
                clusters_last: out.clusters_last,
            })
        })
        .collect()
}

/// Groups consecutive records of the same (setting, method).
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for r in records {
        match rows.last_mut() {
            Some(row) if row.method == r.method && row.k == r.k && row.noise_fraction == r.noise_fraction => {
                row.mean += r.accuracy;
                row.min = row.min.min(r.accuracy);
                row.max = row.max.max(r.accuracy);
                row.runs += 1;
            }
            _ => rows.push(SummaryRow {
                method: r.method,
                k: r.k,
                noise_fraction: r.noise_fraction,
                runs: 1,
                mean: r.accuracy,
                min: r.accuracy,
                max: r.accuracy,
            }),
        }
    }
    for row in &mut rows {
        row.mean /= row.runs as f64;
    }
    rows
}

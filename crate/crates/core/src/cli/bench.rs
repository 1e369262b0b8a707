//! Wall time of one Gibbs epoch on the cached and naive paths.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{self, Hyperparams};
use crate::sampler;
use crate::synthdata::{self, SynthSpec};

use super::config::{stream_rng, STREAM_CHAIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub dim: usize,
    pub k: usize,
    /// Epochs timed per point; the reported figure is their mean.
    pub epochs: usize,
    /// Largest `N` timed on the naive path (it scales as `N²KD³`).
    pub naive_max_n: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![100, 200, 400, 800],
            dim: 50,
            k: 4,
            epochs: 3,
            naive_max_n: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub cached_seconds: f64,
    pub naive_seconds: Option<f64>,
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let hp = Hyperparams::finite(cfg.k);
    let epochs = cfg.epochs.max(1);
    ns.into_iter()
        .map(|n| {
            let per = n.div_ceil(cfg.k).max(2);
            let spec = SynthSpec {
                ambient_dim: cfg.dim,
                ..SynthSpec::new(cfg.k, per, cfg.seed)
            };
            let full = synthdata::gen_subspace_lines(&spec)?;
            let data = model::Dataset::new(full.x().columns(0, n.min(full.len())).into_owned(), None)?;
            let z0: Vec<usize> = (0..data.len()).map(|i| i % cfg.k).collect();

            let mut rng = stream_rng(cfg.seed, STREAM_CHAIN);
            let mut state = model::init_state(&data, &z0, &hp)?;
            let start = Instant::now();
            for _ in 0..epochs {
                sampler::gibbs_sweep(&mut state, &data, &hp, &mut rng)?;
            }
            let cached_seconds = start.elapsed().as_secs_f64() / epochs as f64;

            let naive_seconds = if data.len() <= cfg.naive_max_n {
                let mut rng = stream_rng(cfg.seed, STREAM_CHAIN);
                let mut z = z0.clone();
                let start = Instant::now();
                sampler::naive_gibbs_sweep(&mut z, &data, &hp, &mut rng)?;
                Some(start.elapsed().as_secs_f64())
            } else {
                None
            };
            Ok(BenchRow {
                n: data.len(),
                cached_seconds,
                naive_seconds,
            })
        })
        .collect()
}

use crate::affinity::{self, AffinityMatrix};
use crate::error::Result;
use crate::eval::{self, clustering_accuracy};
use crate::model::Dataset;
use crate::sampler;

use super::config::{stream_rng, RunConfig, STREAM_KMEANS};

/// Outputs of one end-to-end fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Labels from the NCut initialization.
    pub init_labels: Vec<usize>,
    pub labels: Vec<usize>,
    /// Probabilistic affinity over the retained samples.
    pub affinity: AffinityMatrix,
    /// Clusters occupied in the last retained sample.
    pub clusters_last: usize,
    pub init_accuracy: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Initialization affinity and NCut, the chain, then MAP ascent or NCut on
/// the probabilistic affinity. `cfg` must already be resolved.
pub fn fit(data: &Dataset, cfg: &RunConfig) -> Result<FitOutcome> {
    let k = cfg.resolved_k()?;
    let hp = cfg.hyperparams()?;
    let reduced;
    let data = match cfg.pca {
        Some(target) => {
            reduced = eval::pca_reduce(data, target)?.with_labels(data.labels().map(<[usize]>::to_vec))?;
            &reduced
        }
        None => data,
    };
    let mut krng = stream_rng(cfg.seed, STREAM_KMEANS);
    let delta = cfg.delta.unwrap_or_else(|| affinity::default_delta(data));
    let g0 = affinity::init_affinity(data, delta)?;
    let init_labels = affinity::ncut_cluster(&g0, k, &mut krng)?;

    let samples = sampler::run_chain(data, &hp, &cfg.chain_config(), &init_labels)?;
    let last = samples.last().expect("retain is positive").to_vec();
    let g = affinity::probabilistic_affinity(&samples)?;
    let labels = match cfg.pipeline {
        super::config::Pipeline::GcrMap => sampler::map_ascent(data, &hp, &last)?,
        _ => affinity::ncut_cluster(&g, k, &mut krng)?,
    };

    let score = |z: &[usize]| data.labels().map(|t| clustering_accuracy(z, t)).transpose();
    Ok(FitOutcome {
        init_accuracy: score(&init_labels)?,
        accuracy: score(&labels)?,
        clusters_last: crate::model::compact_labels(&last).into_iter().max().map_or(0, |m| m + 1),
        init_labels,
        labels,
        affinity: g,
    })
}

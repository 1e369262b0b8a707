//! Synthetic benchmarks: `K` one-dimensional lines lying in a shared random
//! 2-D subspace of a 50-D ambient space, optionally with a fraction of the
//! samples corrupted by isotropic Gaussian noise.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::model::Dataset;

/// How the per-cluster slope angle is formed from `16k / (17K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleConvention {
    /// `θ_k = 16kπ / (17K)`, spreading the lines over `(0, 16π/17]`.
    #[default]
    PiScaled,
    /// `θ_k = 16k / (17K)` radians.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub k: usize,
    pub n_per_cluster: usize,
    pub ambient_dim: usize,
    pub noise_fraction: f64,
    pub noise_variance: f64,
    pub seed: u64,
    pub angle: AngleConvention,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            k: 2,
            n_per_cluster: 50,
            ambient_dim: 50,
            noise_fraction: 0.0,
            noise_variance: 3.0,
            seed: 0,
            angle: AngleConvention::PiScaled,
        }
    }
}

impl SynthSpec {
    pub fn new(k: usize, n_per_cluster: usize, seed: u64) -> Self {
        Self {
            k,
            n_per_cluster,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(GcrError::InvalidConfig("K must be at least 1".into()));
        }
        if self.n_per_cluster < 2 {
            return Err(GcrError::InvalidConfig("need at least 2 samples per cluster".into()));
        }
        if self.ambient_dim < 2 {
            return Err(GcrError::InvalidConfig("ambient dimension must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(GcrError::InvalidConfig("noise_fraction must lie in [0, 1]".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(GcrError::InvalidConfig("noise_variance must be positive".into()));
        }
        Ok(())
    }

    /// Slope angle of cluster `k` (one-based).
    pub fn angle_of(&self, k: usize) -> f64 {
        let frac = 16.0 * k as f64 / (17.0 * self.k as f64);
        match self.angle {
            AngleConvention::PiScaled => frac * std::f64::consts::PI,
            AngleConvention::Literal => frac,
        }
    }

    pub fn total(&self) -> usize {
        self.k * self.n_per_cluster
    }
}

/// A generated dataset together with the indices of the corrupted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    pub data: Dataset,
    pub noisy: Vec<usize>,
}

/// Noise-free lines; sample columns are grouped by cluster, labels `0..K`.
pub fn gen_subspace_lines(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.ambient_dim;
    // Column-wise draw of the 2×D basis.
    let mut basis = DMatrix::<f64>::zeros(2, dim);
    for c in 0..dim {
        basis[(0, c)] = rng.sample(StandardNormal);
        basis[(1, c)] = rng.sample(StandardNormal);
    }

    let n = spec.total();
    let mut x = DMatrix::<f64>::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..spec.k {
        let theta = spec.angle_of(k + 1);
        if theta.cos().abs() < 1e-9 {
            return Err(GcrError::DegenerateAngle { theta });
        }
        let slope = theta.tan();
        for s in 0..spec.n_per_cluster {
            let y1: f64 = rng.random_range(-1.0..=1.0);
            let y2 = slope * y1;
            let col = k * spec.n_per_cluster + s;
            for d in 0..dim {
                x[(d, col)] = y1 * basis[(0, d)] + y2 * basis[(1, d)];
            }
            labels.push(k);
        }
    }
    Dataset::new(x, Some(labels))
}

/// Clean lines plus `N(0, noise_variance)` noise on every coordinate of
/// `⌊noise_fraction·N⌋` samples chosen without replacement.
pub fn gen_noisy(spec: &SynthSpec) -> Result<NoisyDataset> {
    let clean = gen_subspace_lines(spec)?;
    let n = clean.len();
    let count = (spec.noise_fraction * n as f64 + 1e-9).floor() as usize;
    let count = count.min(n);
    if count == 0 {
        return Ok(NoisyDataset {
            data: clean,
            noisy: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut noisy = index::sample(&mut rng, n, count).into_vec();
    noisy.sort_unstable();
    let normal = Normal::new(0.0, spec.noise_variance.sqrt())
        .map_err(|e| GcrError::InvalidConfig(e.to_string()))?;
    let labels = clean.labels().map(<[usize]>::to_vec);
    let mut x = clean.x().clone();
    for &i in &noisy {
        for d in 0..x.nrows() {
            x[(d, i)] += normal.sample(&mut rng);
        }
    }
    Ok(NoisyDataset {
        data: Dataset::new(x, labels)?,
        noisy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SVD;

    fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
        let mut s: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    fn numerical_rank(m: &DMatrix<f64>) -> usize {
        let s = singular_values(m);
        s.iter().filter(|&&v| v > 1e-9 * s[0]).count()
    }

    #[test]
    fn clean_data_rank_two_and_blocks_rank_one() {
        for k in 2..=8 {
            let ds = gen_subspace_lines(&SynthSpec::new(k, 20, 40 + k as u64)).unwrap();
            assert_eq!(numerical_rank(ds.x()), 2);
            for c in 0..k {
                let block = ds.x().columns(c * 20, 20).into_owned();
                assert_eq!(numerical_rank(&block), 1);
            }
        }
    }

    #[test]
    fn labels_partition_evenly() {
        let spec = SynthSpec::new(5, 7, 1);
        let ds = gen_subspace_lines(&spec).unwrap();
        let labels = ds.labels().unwrap();
        for k in 0..5 {
            assert_eq!(labels.iter().filter(|&&l| l == k).count(), 7);
        }
        assert_eq!((ds.dim(), ds.len()), (50, 35));
    }

    #[test]
    fn reproducible() {
        let spec = SynthSpec::new(3, 10, 99);
        assert_eq!(gen_subspace_lines(&spec).unwrap(), gen_subspace_lines(&spec).unwrap());
        let other = SynthSpec::new(3, 10, 100);
        assert_ne!(gen_subspace_lines(&spec).unwrap(), gen_subspace_lines(&other).unwrap());
    }

    #[test]
    fn samples_in_shared_plane() {
        let spec = SynthSpec::new(4, 10, 5);
        let ds = gen_subspace_lines(&spec).unwrap();
        // Project onto the span of the first two left singular vectors.
        let svd = SVD::new(ds.x().clone(), true, false);
        let u = svd.u.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
        let basis = DMatrix::from_columns(&[u.column(idx[0]), u.column(idx[1])]);
        for i in 0..ds.len() {
            let x = ds.sample(i);
            let resid = &x - &basis * (basis.transpose() * &x);
            assert!(resid.norm() <= 1e-9 * x.norm().max(1.0));
        }
    }

    #[test]
    fn angles_increase() {
        for k in 1..=16 {
            let spec = SynthSpec::new(k, 2, 0);
            let th: Vec<f64> = (1..=k).map(|c| spec.angle_of(c)).collect();
            assert!(th.windows(2).all(|w| w[1] > w[0]));
            assert!(th.iter().all(|t| t.cos().abs() > 1e-9));
        }
        let lit = SynthSpec {
            angle: AngleConvention::Literal,
            ..SynthSpec::new(4, 2, 0)
        };
        assert!((lit.angle_of(4) - 16.0 / 17.0).abs() < 1e-15);
    }

    #[test]
    fn noise_counts_and_identity_at_zero() {
        let mut spec = SynthSpec::new(2, 50, 8);
        let clean = gen_subspace_lines(&spec).unwrap();
        assert_eq!(gen_noisy(&spec).unwrap().data, clean);

        spec.noise_fraction = 0.4;
        let noisy = gen_noisy(&spec).unwrap();
        assert_eq!(noisy.noisy.len(), 40);
        let changed: Vec<usize> = (0..100)
            .filter(|&i| (noisy.data.sample(i) - clean.sample(i)).norm() > 0.0)
            .collect();
        assert_eq!(changed, noisy.noisy);
        assert_eq!(noisy.data.labels(), clean.labels());

        for (f, want) in [(0.05, 5), (0.15, 15), (0.35, 35)] {
            spec.noise_fraction = f;
            assert_eq!(gen_noisy(&spec).unwrap().noisy.len(), want);
        }
    }

    #[test]
    fn noise_variance_monte_carlo() {
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..20 {
            let spec = SynthSpec {
                noise_fraction: 0.5,
                ..SynthSpec::new(2, 50, seed)
            };
            let clean = gen_subspace_lines(&spec).unwrap();
            let noisy = gen_noisy(&spec).unwrap();
            for &i in &noisy.noisy {
                let dev = noisy.data.sample(i) - clean.sample(i);
                total += dev.norm_squared();
                count += dev.len();
            }
        }
        let var = total / count as f64;
        assert!((var - 3.0).abs() < 0.3, "variance {var}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_subspace_lines(&SynthSpec::new(0, 5, 0)).is_err());
        assert!(gen_subspace_lines(&SynthSpec::new(2, 1, 0)).is_err());
        let spec = SynthSpec {
            noise_fraction: 1.5,
            ..SynthSpec::default()
        };
        assert!(gen_noisy(&spec).is_err());
    }
}

//! Co-assignment and probabilistic affinities, the precision-based
//! initialization affinity, and normalized-cut spectral clustering.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::model::{ChainSamples, Dataset};
use crate::numerics;

/// Default number of k-means restarts in [`ncut_cluster`].
pub const KMEANS_RESTARTS: usize = 20;

const KMEANS_MAX_ITER: usize = 300;
const DEGREE_FLOOR: f64 = 1e-12;
/// Added to every degree as a multiple of the mean degree, so weakly
/// connected samples cannot claim their own eigenvectors.
pub const DEGREE_REGULARIZATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffinityKind {
    CoAssignment,
    Probabilistic,
    Init,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub values: DMatrix<f64>,
    pub kind: AffinityKind,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Wraps an arbitrary symmetric nonnegative matrix.
    pub fn from_values(values: DMatrix<f64>, kind: AffinityKind) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(GcrError::LengthMismatch {
                left: values.nrows(),
                right: values.ncols(),
            });
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GcrError::DomainError("affinity entries must be finite and nonnegative".into()));
        }
        Ok(Self { values, kind })
    }

    /// Dense row-major CSV, full matrix, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for r in 0..self.values.nrows() {
            let row: Vec<String> = self.values.row(r).iter().map(|v| format!("{v}")).collect();
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// `G[i][j] = 1` iff `s_i == s_j`.
pub fn coassignment_matrix(s: &[usize]) -> AffinityMatrix {
    let n = s.len();
    AffinityMatrix {
        values: DMatrix::from_fn(n, n, |i, j| if s[i] == s[j] { 1.0 } else { 0.0 }),
        kind: AffinityKind::CoAssignment,
    }
}

/// Entrywise mean of the co-assignment matrices of the retained samples.
pub fn probabilistic_affinity(samples: &ChainSamples) -> Result<AffinityMatrix> {
    let first = samples.samples.first().ok_or(GcrError::EmptyInput)?;
    let n = first.len();
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for s in &samples.samples {
        if s.len() != n {
            return Err(GcrError::LengthMismatch {
                left: s.len(),
                right: n,
            });
        }
        for j in 0..n {
            for i in j..n {
                if s[i] == s[j] {
                    counts[(i, j)] += 1.0;
                }
            }
        }
    }
    let m = samples.samples.len() as f64;
    let mut values = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = counts[(i, j)] / m;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(AffinityMatrix {
        values,
        kind: AffinityKind::Probabilistic,
    })
}

/// Jitter `10⁻³·trace(XᵀX)/N`.
pub fn default_delta(data: &Dataset) -> f64 {
    1e-3 * data.x().norm_squared() / data.len() as f64
}

/// `|(XᵀX + δI)⁻¹|` taken entrywise.
pub fn init_affinity(data: &Dataset, delta: f64) -> Result<AffinityMatrix> {
    let x = data.x();
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += delta;
    }
    let state = numerics::build_psd(&gram)?;
    let mut values = state.inverse().abs();
    numerics::symmetrize(&mut values);
    Ok(AffinityMatrix {
        values,
        kind: AffinityKind::Init,
    })
}

/// Rows of the top-`k` eigenvectors of `D_τ^{-1/2} W D_τ^{-1/2}`, each row
/// scaled to unit length (numerically zero rows stay zero). `D_τ` is the
/// degree matrix plus [`DEGREE_REGULARIZATION`] times the mean degree.
///
/// `W` is `G` with its diagonal removed: the cut is defined on edges between
/// distinct samples, and self-affinities (`1/δ`-sized on the initialization
/// affinity) would otherwise dominate the degrees.
pub fn spectral_embed(g: &AffinityMatrix, k: usize) -> Result<DMatrix<f64>> {
    let n = g.len();
    if k == 0 || k > n {
        return Err(GcrError::InvalidConfig(format!("cannot embed {n} nodes in {k} dimensions")));
    }
    let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { g.values[(i, j)] });
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let tau = DEGREE_REGULARIZATION * deg.iter().sum::<f64>() / n as f64;
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| 1.0 / (d + tau).max(DEGREE_FLOOR).sqrt())
        .collect();
    let mut m = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    numerics::symmetrize(&mut m);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1000 * n.max(10))
        .ok_or(GcrError::EigenFailure)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut emb = DMatrix::<f64>::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        emb.set_column(c, &eig.eigenvectors.column(idx));
    }
    for mut row in emb.row_iter_mut() {
        let norm = row.norm();
        if norm > 1e-12 {
            row /= norm;
        } else {
            row.fill(0.0);
        }
    }
    Ok(emb)
}

/// Result of [`kmeans`]: labels in `0..k` and the within-cluster sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub wcss: f64,
}

/// Lloyd's algorithm from k-means++ seeding, best of `restarts` by WCSS.
/// `points` holds one point per row.
pub fn kmeans<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut R,
    restarts: usize,
) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(GcrError::InvalidConfig(format!("k-means with k = {k} on {n} points")));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
        let fit = lloyd(points, k, &mut sub);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centers.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centers = DMatrix::<f64>::zeros(k, points.ncols());
    centers.set_row(0, &points.row(rng.random_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn lloyd<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> KMeansFit {
    let n = points.nrows();
    let dims = points.ncols();
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(points, i, &centers, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }

        let mut sums = DMatrix::<f64>::zeros(k, dims);
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += points.row(i);
            sizes[labels[i]] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centers.set_row(c, &(sums.row(c) / sizes[c] as f64));
            }
        }
        // Empty clusters take the point farthest from its current center.
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(points, a, &centers, labels[a])
                        .partial_cmp(&sq_dist(points, b, &centers, labels[b]))
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                });
            if let Some(i) = far {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                centers.set_row(c, &points.row(i));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = (0..n).map(|i| sq_dist(points, i, &centers, labels[i])).sum();
    KMeansFit { labels, wcss }
}

/// Spectral embedding followed by k-means; labels in `0..k`.
pub fn ncut_cluster<R: Rng + ?Sized>(
    g: &AffinityMatrix,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let emb = spectral_embed(g, k)?;
    Ok(kmeans(&emb, k, rng, KMEANS_RESTARTS)?.labels)
}

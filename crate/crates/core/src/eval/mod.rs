//! Clustering accuracy, subspace-dimension diagnostics, PCA, and the two
//! independent oracles (exhaustive enumeration and 1-D quadrature).

mod enumerate;
mod quadrature;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::model::Dataset;

pub use enumerate::{
    decode_assignment, enumerate_partitions_dp, enumerate_posterior, PosteriorEnumeration,
    ENUMERATION_LIMIT,
};
pub use quadrature::{integrate_adaptive, quadrature_marginal_check};

/// Best fraction of samples matched under a one-to-one relabeling of the
/// predicted clusters onto the true ones (optimal assignment).
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(GcrError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(GcrError::EmptyInput);
    }
    let p = dense_ids(pred);
    let t = dense_ids(truth);
    let kp = p.iter().max().map_or(0, |m| m + 1);
    let kt = t.iter().max().map_or(0, |m| m + 1);
    let side = kp.max(kt);
    let mut table = Matrix::new(side, side, 0i64);
    for (&a, &b) in p.iter().zip(&t) {
        table[(a, b)] += 1;
    }
    let (matched, _) = kuhn_munkres(&table);
    Ok(matched as f64 / pred.len() as f64)
}

fn dense_ids(labels: &[usize]) -> Vec<usize> {
    crate::model::compact_labels(labels)
}

/// Pooled and per-cluster subspace dimensions at a given energy level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimStats {
    /// Dimension of the span of all samples.
    pub lhs: usize,
    /// Sum of the per-cluster dimensions.
    pub rhs: usize,
}

/// Smallest `r` whose top-`r` squared singular values reach `energy` of the total.
pub fn rank_for_energy(m: &DMatrix<f64>, energy: f64) -> usize {
    let mut sq: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .map(|s| s * s)
        .collect();
    sq.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let total: f64 = sq.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (r, v) in sq.iter().enumerate() {
        acc += v;
        if acc >= energy * total {
            return r + 1;
        }
    }
    sq.len()
}

pub fn dim_stats(data: &Dataset, energy: f64) -> Result<DimStats> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(GcrError::DomainError(format!("energy {energy} not in (0, 1]")));
    }
    let labels = data
        .labels()
        .ok_or_else(|| GcrError::InvalidDataset("dim_stats needs labels".into()))?;
    let lhs = rank_for_energy(data.x(), energy);
    let ids = dense_ids(labels);
    let k = ids.iter().max().map_or(0, |m| m + 1);
    let mut rhs = 0;
    for c in 0..k {
        let cols: Vec<_> = (0..data.len())
            .filter(|&i| ids[i] == c)
            .map(|i| data.x().column(i))
            .collect();
        rhs += rank_for_energy(&DMatrix::from_columns(&cols), energy);
    }
    Ok(DimStats { lhs, rhs })
}

/// Output size for [`pca_reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaTarget {
    Dims(usize),
    Energy(f64),
}

/// Centers each feature and projects onto the leading principal directions.
pub fn pca_reduce(data: &Dataset, target: PcaTarget) -> Result<Dataset> {
    let d = data.dim();
    let n = data.len();
    let mut xc = data.x().clone();
    for r in 0..d {
        let mean = xc.row(r).sum() / n as f64;
        xc.row_mut(r).add_scalar_mut(-mean);
    }
    let scatter = &xc * xc.transpose();
    let eig = SymmetricEigen::new(scatter);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let r = match target {
        PcaTarget::Dims(r) => {
            if r == 0 || r > d {
                return Err(GcrError::InvalidConfig(format!("cannot keep {r} of {d} dims")));
            }
            r
        }
        PcaTarget::Energy(e) => {
            if !(e > 0.0 && e <= 1.0) {
                return Err(GcrError::DomainError(format!("energy {e} not in (0, 1]")));
            }
            let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
            let total: f64 = vals.iter().sum();
            let mut acc = 0.0;
            let mut r = d;
            for (idx, v) in vals.iter().enumerate() {
                acc += v;
                if acc >= e * total {
                    r = idx + 1;
                    break;
                }
            }
            r.max(1)
        }
    };
    let basis = DMatrix::from_columns(
        &order[..r]
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    let projected = basis.transpose() * xc;
    Dataset::new(projected, data.labels().map(<[usize]>::to_vec))
}

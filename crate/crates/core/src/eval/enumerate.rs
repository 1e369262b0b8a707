use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GcrError, Result};
use crate::model::{self, Dataset, Hyperparams, Mode};
use crate::numerics;

/// Largest number of assignments [`enumerate_posterior`] will visit.
pub const ENUMERATION_LIMIT: u128 = 2_000_000;

/// Exact posterior over every assignment of a small instance.
#[derive(Debug, Clone)]
pub struct PosteriorEnumeration {
    /// Assignments in enumeration order.
    pub assignments: Vec<Vec<usize>>,
    /// Normalized probabilities, aligned with `assignments`.
    pub probs: Vec<f64>,
    /// `P(z_i = z_j)` for every pair.
    pub coassignment: DMatrix<f64>,
    /// Highest-probability assignment (first in enumeration order on ties).
    pub map: Vec<usize>,
}

/// Base-`k` digits of `index`, least significant digit first.
pub fn decode_assignment(mut index: usize, n: usize, k: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let d = index % k;
            index /= k;
            d
        })
        .collect()
}

/// Evaluates [`model::log_posterior_naive`] on all `K^N` labelings (finite mode).
pub fn enumerate_posterior(data: &Dataset, hp: &Hyperparams) -> Result<PosteriorEnumeration> {
    let k = match hp.mode {
        Mode::Finite { k } => k,
        Mode::Dp => {
            return Err(GcrError::InvalidConfig("enumeration over labelings needs finite K".into()))
        }
    };
    let n = data.len();
    let total = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(GcrError::TooLarge(total));
    }
    let assignments: Vec<Vec<usize>> = (0..total as usize)
        .map(|idx| decode_assignment(idx, n, k))
        .collect();
    summarize(data, hp, assignments)
}

/// Exact DP-mode posterior over every set partition of the samples
/// (restricted growth strings, so each partition appears once).
pub fn enumerate_partitions_dp(data: &Dataset, hp: &Hyperparams) -> Result<PosteriorEnumeration> {
    if !matches!(hp.mode, Mode::Dp) {
        return Err(GcrError::InvalidConfig("partition enumeration is for DP mode".into()));
    }
    let n = data.len();
    if n > 12 {
        return Err(GcrError::TooLarge(u128::MAX));
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn grow(pos: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            cur[pos] = v;
            grow(pos + 1, max.max(v), cur, out);
        }
    }
    if n > 0 {
        grow(1, 0, &mut cur, &mut out);
    }
    summarize(data, hp, out)
}

fn summarize(
    data: &Dataset,
    hp: &Hyperparams,
    assignments: Vec<Vec<usize>>,
) -> Result<PosteriorEnumeration> {
    let n = data.len();
    // Ordered collect keeps the reduction below independent of scheduling.
    let logs: Vec<f64> = assignments
        .par_iter()
        .map(|z| model::log_posterior_naive(data, z, hp))
        .collect::<Result<_>>()?;
    let norm = numerics::log_sum_exp(&logs)?;
    let probs: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();

    let mut coassignment = DMatrix::<f64>::zeros(n, n);
    for (z, p) in assignments.iter().zip(&probs) {
        for j in 0..n {
            for i in 0..n {
                if z[i] == z[j] {
                    coassignment[(i, j)] += p;
                }
            }
        }
    }
    let best = logs
        .iter()
        .enumerate()
        .fold(0, |b, (i, l)| if *l > logs[b] { i } else { b });
    let map = assignments[best].clone();
    Ok(PosteriorEnumeration {
        assignments,
        probs,
        coassignment,
        map,
    })
}

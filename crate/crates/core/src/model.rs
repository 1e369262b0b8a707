//! Domain types and the collapsed posterior over cluster indicators.
//!
//! Cluster ids are zero-based throughout the library. With `c = α_H − α_L`,
//!
//! ```text
//! H_k = α_L·XXᵀ + c·Σ_{z_j = k} x_j x_jᵀ + I
//! C_i = H_{z_i} − α_H·x_i x_iᵀ
//! log f_i = −½·log det C_i − ((D+ν)/2)·ln(x_iᵀC_i⁻¹x_i + νλ)
//! ```
//!
//! and `log q(z) = log f₀ + Σ_i log f_i` up to a z-independent constant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::numerics::{self, PsdState};

/// Samples stored as the columns of a D×N matrix, with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if x.nrows() < 1 {
            return Err(GcrError::InvalidDataset("dimension must be at least 1".into()));
        }
        if x.ncols() < 2 {
            return Err(GcrError::InvalidDataset("need at least 2 samples".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GcrError::InvalidDataset("non-finite entry".into()));
        }
        if let Some(l) = &labels {
            if l.len() != x.ncols() {
                return Err(GcrError::LengthMismatch {
                    left: l.len(),
                    right: x.ncols(),
                });
            }
            if l.iter().any(|&v| v >= x.ncols()) {
                return Err(GcrError::InvalidDataset("label exceeds sample count".into()));
            }
        }
        Ok(Self { x, labels })
    }

    /// Builds a dataset from rows of features (one row per sample).
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(GcrError::InvalidDataset("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(d, n, |r, c| rows[c][r]), labels)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.x.column(i).into_owned()
    }

    /// Copy of the data with every entry multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(&self.x * s, self.labels.clone())
    }

    pub fn with_labels(self, labels: Option<Vec<usize>>) -> Result<Self> {
        Self::new(self.x, labels)
    }
}

/// Finite cluster count or the Dirichlet-process limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Finite { k: usize },
    Dp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub beta0: f64,
    pub nu: f64,
    pub lambda: f64,
    pub alpha_h: f64,
    pub alpha_l: f64,
    pub mode: Mode,
}

impl Hyperparams {
    /// β₀ = 1, ν = 1, α_H = 0.1, λ·α_H = 0.1, α_H/α_L = 10⁴.
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            beta0: 1.0,
            nu: 1.0,
            lambda: 1.0,
            alpha_h: 0.1,
            alpha_l: 1e-5,
            mode,
        }
    }

    pub fn finite(k: usize) -> Self {
        Self::with_mode(Mode::Finite { k })
    }

    pub fn dp() -> Self {
        Self::with_mode(Mode::Dp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GcrError::InvalidHyperparams(m.to_string()));
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return bad("beta0 must be positive");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.alpha_l >= 0.0) {
            return bad("alpha_l must be nonnegative");
        }
        if !(self.alpha_h > self.alpha_l && self.alpha_h.is_finite()) {
            return bad("alpha_h must exceed alpha_l");
        }
        if let Mode::Finite { k } = self.mode {
            if k == 0 {
                return bad("K must be at least 1");
            }
        }
        Ok(())
    }

    /// Like [`Hyperparams::validate`] but also admits `α_H = α_L`, the collapse
    /// used by symmetry checks and oracles.
    pub(crate) fn validate_relaxed(&self) -> Result<()> {
        let mut probe = *self;
        if probe.alpha_h == probe.alpha_l {
            probe.alpha_h = probe.alpha_l + 1.0;
        }
        probe.validate()
    }

    /// Slab minus spike, the weight of a sample's own contribution to its cluster's H.
    pub fn contrast(&self) -> f64 {
        self.alpha_h - self.alpha_l
    }
}

/// Retained indicator vectors from the tail of a Gibbs chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    pub samples: Vec<Vec<usize>>,
    pub epochs_total: usize,
    pub burn_in: usize,
}

impl ChainSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&[usize]> {
        self.samples.last().map(Vec::as_slice)
    }
}

/// Checks indicator length and range for the given mode.
pub fn validate_indicators(z: &[usize], n: usize, mode: Mode) -> Result<()> {
    if z.len() != n {
        return Err(GcrError::LengthMismatch {
            left: z.len(),
            right: n,
        });
    }
    match mode {
        Mode::Finite { k } => {
            if let Some(&bad) = z.iter().find(|&&v| v >= k) {
                return Err(GcrError::InvalidIndicators(format!(
                    "label {bad} out of range for K = {k}"
                )));
            }
        }
        Mode::Dp => {}
    }
    Ok(())
}

/// Relabels to `0..K̂` preserving the order of the original label values.
pub fn compact_labels(z: &[usize]) -> Vec<usize> {
    let mut uniq: Vec<usize> = z.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    z.iter()
        .map(|v| uniq.binary_search(v).expect("label present"))
        .collect()
}

/// `H_k` summed term by term from its definition.
pub fn build_h_naive(data: &Dataset, z: &[usize], k: usize, hp: &Hyperparams) -> DMatrix<f64> {
    let d = data.dim();
    let mut h = DMatrix::<f64>::identity(d, d);
    for (j, &zj) in z.iter().enumerate() {
        let xj = data.x().column(j);
        let a = if zj == k { hp.alpha_h } else { hp.alpha_l };
        h.ger(a, &xj, &xj, 1.0);
    }
    h
}

/// `log f_i` given `log det H_{z_i}` and `q = x_iᵀH_{z_i}⁻¹x_i`.
pub fn log_f_from_stats(dim: usize, hp: &Hyperparams, logdet_h: f64, q: f64) -> Result<f64> {
    let (logdet_c, quad_c) = numerics::self_downdate_stats(q, logdet_h, hp.alpha_h)?;
    Ok(log_f_from_c(dim, hp, logdet_c, quad_c))
}

fn log_f_from_c(dim: usize, hp: &Hyperparams, logdet_c: f64, quad_c: f64) -> f64 {
    -0.5 * logdet_c - 0.5 * (dim as f64 + hp.nu) * (quad_c + hp.nu * hp.lambda).ln()
}

/// `log f_i` evaluated from the cached state of `H_{z_i}`.
pub fn log_f_i(
    data: &Dataset,
    _z: &[usize],
    i: usize,
    hp: &Hyperparams,
    h_state: &PsdState,
) -> Result<f64> {
    let xi = data.sample(i);
    log_f_from_stats(data.dim(), hp, h_state.logdet(), h_state.quad_form(&xi))
}

/// `log f_i` with `C_i` built and factorized from scratch.
pub fn log_f_i_naive(data: &Dataset, z: &[usize], i: usize, hp: &Hyperparams) -> Result<f64> {
    let xi = data.sample(i);
    let mut c = build_h_naive(data, z, z[i], hp);
    c.ger(-hp.alpha_h, &xi, &xi, 1.0);
    let cs = numerics::build_psd(&c)?;
    Ok(log_f_from_c(data.dim(), hp, cs.logdet(), cs.quad_form(&xi)))
}

/// `Σ_k ln Γ(β₀/K + n_k)`.
pub fn log_f0_finite(counts: &[usize], beta0: f64, k: usize) -> Result<f64> {
    let a = beta0 / k as f64;
    counts
        .iter()
        .map(|&n| numerics::log_gamma(a + n as f64))
        .sum()
}

/// `(K̂−1)·ln β₀ + Σ_k ln Γ(n_k)` over non-empty clusters.
pub fn log_f0_dp(counts: &[usize], beta0: f64) -> Result<f64> {
    if counts.is_empty() {
        return Err(GcrError::EmptyInput);
    }
    let mut acc = (counts.len() as f64 - 1.0) * beta0.ln();
    for (k, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(GcrError::EmptyCluster(k));
        }
        acc += numerics::log_gamma(n as f64)?;
    }
    Ok(acc)
}

fn counts_of(z: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &v in z {
        counts[v] += 1;
    }
    counts
}

fn log_f0_for(z: &[usize], hp: &Hyperparams) -> Result<f64> {
    match hp.mode {
        Mode::Finite { k } => log_f0_finite(&counts_of(z, k), hp.beta0, k),
        Mode::Dp => {
            let compact = compact_labels(z);
            let kk = compact.iter().max().map_or(0, |m| m + 1);
            log_f0_dp(&counts_of(&compact, kk), hp.beta0)
        }
    }
}

/// Reference evaluation of `log q(z)`: every `H_k` and `C_i` is rebuilt and
/// factorized from scratch.
pub fn log_posterior_naive(data: &Dataset, z: &[usize], hp: &Hyperparams) -> Result<f64> {
    hp.validate_relaxed()?;
    validate_indicators(z, data.len(), hp.mode)?;
    let mut total = log_f0_for(z, hp)?;
    for i in 0..data.len() {
        total += log_f_i_naive(data, z, i, hp)?;
    }
    Ok(total)
}

/// Indicator vector plus the cached statistics the sampler needs.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub(crate) z: Vec<usize>,
    pub(crate) counts: Vec<usize>,
    pub(crate) h_states: Vec<PsdState>,
    pub(crate) q_cache: Vec<f64>,
    pub(crate) log_fi_cache: Vec<f64>,
    pub(crate) log_post: f64,
    /// State of `α_L·XXᵀ + I`; the H of a cluster with no members.
    pub(crate) low_gram: PsdState,
}

impl ClusterState {
    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn h_states(&self) -> &[PsdState] {
        &self.h_states
    }

    pub fn q_cache(&self) -> &[f64] {
        &self.q_cache
    }

    pub fn log_fi_cache(&self) -> &[f64] {
        &self.log_fi_cache
    }

    /// Current `log q(z)` up to an additive constant.
    pub fn log_post(&self) -> f64 {
        self.log_post
    }

    pub fn num_clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn low_gram(&self) -> &PsdState {
        &self.low_gram
    }

    /// Rebuilds every cached quantity for the current `z`.
    pub fn refresh(&mut self, data: &Dataset, hp: &Hyperparams) -> Result<()> {
        *self = init_state(data, &self.z, hp)?;
        Ok(())
    }

    pub(crate) fn log_f0(&self, hp: &Hyperparams) -> Result<f64> {
        match hp.mode {
            Mode::Finite { k } => log_f0_finite(&self.counts, hp.beta0, k),
            Mode::Dp => log_f0_dp(&self.counts, hp.beta0),
        }
    }

    pub(crate) fn recompute_log_post(&mut self, hp: &Hyperparams) -> Result<()> {
        self.log_post = self.log_f0(hp)? + self.log_fi_cache.iter().sum::<f64>();
        Ok(())
    }
}

/// Builds H states, per-sample caches and `log q(z)` for the assignment `z`.
/// In DP mode labels are compacted so every stored cluster is non-empty.
pub fn init_state(data: &Dataset, z: &[usize], hp: &Hyperparams) -> Result<ClusterState> {
    hp.validate_relaxed()?;
    validate_indicators(z, data.len(), hp.mode)?;
    let (z, k) = match hp.mode {
        Mode::Finite { k } => (z.to_vec(), k),
        Mode::Dp => {
            let c = compact_labels(z);
            let k = c.iter().max().map_or(0, |m| m + 1);
            (c, k)
        }
    };
    let d = data.dim();
    let x = data.x();
    let mut low = x * x.transpose() * hp.alpha_l;
    for i in 0..d {
        low[(i, i)] += 1.0;
    }
    let low_gram = numerics::build_psd(&low)?;

    let counts = counts_of(&z, k);
    let c = hp.contrast();
    let mut h_mats = vec![low.clone(); k];
    for (j, &zj) in z.iter().enumerate() {
        let xj = x.column(j);
        h_mats[zj].ger(c, &xj, &xj, 1.0);
    }
    let h_states = h_mats
        .iter()
        .map(numerics::build_psd)
        .collect::<Result<Vec<_>>>()?;

    let n = data.len();
    let mut q_cache = Vec::with_capacity(n);
    let mut log_fi_cache = Vec::with_capacity(n);
    for i in 0..n {
        let hs = &h_states[z[i]];
        let q = hs.quad_form(&data.sample(i));
        let lf = match log_f_from_stats(d, hp, hs.logdet(), q) {
            Ok(v) => v,
            Err(GcrError::DowndateSingular { .. }) => log_f_i_naive(data, &z, i, hp)?,
            Err(e) => return Err(e),
        };
        q_cache.push(q);
        log_fi_cache.push(lf);
    }
    let mut state = ClusterState {
        z,
        counts,
        h_states,
        q_cache,
        log_fi_cache,
        log_post: 0.0,
        low_gram,
    };
    state.recompute_log_post(hp)?;
    Ok(state)
}

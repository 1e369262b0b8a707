//! Collapsed Gibbs sweeps over the indicators, chain orchestration and MAP
//! coordinate ascent.
//!
//! Moving sample `i` from cluster `a` to `k` changes `H_a` by `−c·x_i x_iᵀ` and
//! `H_k` by `+c·x_i x_iᵀ` (`c = α_H − α_L`), so only `f_i`, the `f_j` of the
//! members of `a` and `k`, and the count terms of `f₀` move. Each candidate is
//! scored from one solve `H_k⁻¹x_i` and the Sherman–Morrison cross terms
//! `q_j' = q_j ∓ c·(x_jᵀH⁻¹x_i)² / (1 ± c·x_iᵀH⁻¹x_i)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::model::{self, ChainSamples, ClusterState, Dataset, Hyperparams, Mode};
use crate::numerics;

/// Cached statistics are rebuilt from scratch every this many sweeps.
pub const REFRESH_INTERVAL: usize = 25;

/// Guard on the number of full MAP sweeps.
pub const MAP_MAX_SWEEPS: usize = 1000;

/// Logit improvements at or below this are treated as ties by MAP ascent.
const MAP_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub epochs: usize,
    pub retain: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            retain: 100,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.retain == 0 {
            return Err(GcrError::InvalidConfig("epochs and retain must be positive".into()));
        }
        if self.retain > self.epochs {
            return Err(GcrError::InvalidConfig("retain must not exceed epochs".into()));
        }
        Ok(())
    }
}

/// Unnormalized log-probabilities for the next value of `z_i`.
///
/// Finite mode returns `K` entries. DP mode returns `K̂ + 1` entries, the last
/// one for a fresh singleton cluster; when `i` is already alone in its
/// cluster that configuration is carried by the last slot and its own slot is
/// `−∞`, so no partition is counted twice. Entries are `log q` of the moved
/// configuration on the same additive scale as `state.log_post()`.
pub fn conditional_logits(
    state: &ClusterState,
    data: &Dataset,
    hp: &Hyperparams,
    i: usize,
) -> Result<Vec<f64>> {
    match cached_deltas(state, data, hp, i) {
        Ok(deltas) => Ok(deltas.into_iter().map(|d| state.log_post + d).collect()),
        Err(GcrError::DowndateSingular { .. }) => naive_conditional_logits(data, hp, &state.z, i),
        Err(e) => Err(e),
    }
}

fn cached_deltas(
    state: &ClusterState,
    data: &Dataset,
    hp: &Hyperparams,
    i: usize,
) -> Result<Vec<f64>> {
    let dim = data.dim();
    let c = hp.contrast();
    let x = data.x();
    let xi = data.sample(i);
    let a = state.z[i];
    let kk = state.num_clusters();
    let dp = matches!(hp.mode, Mode::Dp);
    let n_a = state.counts[a];

    // Solves and post-move log-determinants for every existing cluster.
    let mut u = DMatrix::<f64>::zeros(dim, kk);
    let mut s = vec![0.0; kk];
    let mut t = vec![0.0; kk];
    let mut logdet_new = vec![0.0; kk];
    for k in 0..kk {
        let hs = &state.h_states[k];
        let uk = hs.solve(&xi);
        s[k] = xi.dot(&uk);
        u.set_column(k, &uk);
        t[k] = if k == a { 1.0 - c * s[k] } else { 1.0 + c * s[k] };
        if !(t[k] > numerics::PD_TOL) {
            return Err(GcrError::DowndateSingular { denominator: t[k] });
        }
        logdet_new[k] = hs.logdet() + t[k].ln();
    }

    // Change in Σ log f_j for the members of each cluster.
    let mut member_delta = vec![0.0; kk];
    for j in 0..data.len() {
        if j == i {
            continue;
        }
        let zj = state.z[j];
        let p = x.column(j).dot(&u.column(zj));
        let q_new = if zj == a {
            state.q_cache[j] + c * p * p / t[zj]
        } else {
            state.q_cache[j] - c * p * p / t[zj]
        };
        let lf = model::log_f_from_stats(dim, hp, logdet_new[zj], q_new)?;
        member_delta[zj] += lf - state.log_fi_cache[j];
    }
    let removal = member_delta[a] - state.log_fi_cache[i];

    let width = if dp { kk + 1 } else { kk };
    let mut deltas = vec![0.0; width];
    for k in 0..kk {
        if k == a {
            continue;
        }
        let lf_i = model::log_f_from_stats(dim, hp, logdet_new[k], s[k] / t[k])?;
        let prior = match hp.mode {
            Mode::Finite { k: big_k } => {
                let b = hp.beta0 / big_k as f64;
                (b + state.counts[k] as f64).ln() - (b + n_a as f64 - 1.0).ln()
            }
            Mode::Dp => {
                let leave = if n_a == 1 {
                    -hp.beta0.ln()
                } else {
                    -((n_a - 1) as f64).ln()
                };
                leave + (state.counts[k] as f64).ln()
            }
        };
        deltas[k] = removal + member_delta[k] + lf_i + prior;
    }
    if dp {
        let low = &state.low_gram;
        let s0 = low.quad_form(&xi);
        let t0 = 1.0 + c * s0;
        let lf_i = model::log_f_from_stats(dim, hp, low.logdet() + t0.ln(), s0 / t0)?;
        let leave = if n_a == 1 {
            -hp.beta0.ln()
        } else {
            -((n_a - 1) as f64).ln()
        };
        deltas[kk] = removal + lf_i + leave + hp.beta0.ln();
        if n_a == 1 {
            deltas[a] = f64::NEG_INFINITY;
        }
    }
    Ok(deltas)
}

/// Conditional logits with every candidate scored by [`model::log_posterior_naive`].
/// Same layout as [`conditional_logits`]; `z` must be compact in DP mode.
pub fn naive_conditional_logits(
    data: &Dataset,
    hp: &Hyperparams,
    z: &[usize],
    i: usize,
) -> Result<Vec<f64>> {
    let kk = match hp.mode {
        Mode::Finite { k } => k,
        Mode::Dp => z.iter().max().map_or(0, |m| m + 1),
    };
    let alone = z.iter().filter(|&&v| v == z[i]).count() == 1;
    let width = if matches!(hp.mode, Mode::Dp) { kk + 1 } else { kk };
    let mut moved = z.to_vec();
    (0..width)
        .map(|k| {
            if matches!(hp.mode, Mode::Dp) && alone && k == z[i] {
                return Ok(f64::NEG_INFINITY);
            }
            moved[i] = k;
            model::log_posterior_naive(data, &moved, hp)
        })
        .collect()
}

/// Moves sample `i` to candidate slot `target` (slot `K̂` opens a new cluster
/// in DP mode) and updates every cache.
pub fn apply_move(
    state: &mut ClusterState,
    data: &Dataset,
    hp: &Hyperparams,
    i: usize,
    target: usize,
) -> Result<()> {
    let a = state.z[i];
    let kk = state.num_clusters();
    let dp = matches!(hp.mode, Mode::Dp);
    if target == a || (dp && target == kk && state.counts[a] == 1) {
        return Ok(());
    }
    if target > kk || (!dp && target == kk) {
        return Err(GcrError::InvalidIndicators(format!("no candidate slot {target}")));
    }
    match apply_move_cached(state, data, hp, i, target) {
        Ok(()) => Ok(()),
        Err(GcrError::DowndateSingular { .. }) => {
            let mut z = state.z.clone();
            z[i] = target;
            *state = model::init_state(data, &z, hp)?;
            Ok(())
        }
        Err(e) => Err(e),
    }
}

fn apply_move_cached(
    state: &mut ClusterState,
    data: &Dataset,
    hp: &Hyperparams,
    i: usize,
    target: usize,
) -> Result<()> {
    let dim = data.dim();
    let c = hp.contrast();
    let x = data.x();
    let xi = data.sample(i);
    let a = state.z[i];

    if target == state.num_clusters() {
        state.h_states.push(state.low_gram.clone());
        state.counts.push(0);
    }
    let k = target;

    let ua = state.h_states[a].solve(&xi);
    let sa = xi.dot(&ua);
    let ta = 1.0 - c * sa;
    let uk = state.h_states[k].solve(&xi);
    let sk = xi.dot(&uk);
    let tk = 1.0 + c * sk;
    state.h_states[a].rank1_update_with(&ua, sa, -c)?;
    state.h_states[k].rank1_update_with(&uk, sk, c)?;
    let logdet_a = state.h_states[a].logdet();
    let logdet_k = state.h_states[k].logdet();

    for j in 0..data.len() {
        if j == i {
            continue;
        }
        let zj = state.z[j];
        if zj == a {
            let p = x.column(j).dot(&ua);
            state.q_cache[j] += c * p * p / ta;
            state.log_fi_cache[j] = model::log_f_from_stats(dim, hp, logdet_a, state.q_cache[j])?;
        } else if zj == k {
            let p = x.column(j).dot(&uk);
            state.q_cache[j] -= c * p * p / tk;
            state.log_fi_cache[j] = model::log_f_from_stats(dim, hp, logdet_k, state.q_cache[j])?;
        }
    }
    state.q_cache[i] = sk / tk;
    state.log_fi_cache[i] = model::log_f_from_stats(dim, hp, logdet_k, state.q_cache[i])?;
    state.z[i] = k;
    state.counts[a] -= 1;
    state.counts[k] += 1;

    if matches!(hp.mode, Mode::Dp) && state.counts[a] == 0 {
        state.h_states.remove(a);
        state.counts.remove(a);
        for v in state.z.iter_mut() {
            if *v > a {
                *v -= 1;
            }
        }
    }
    state.recompute_log_post(hp)
}

/// Inverse-CDF draw from the softmax of `logits`.
pub fn sample_categorical<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> Result<usize> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GcrError::DomainError("no finite logit".into()));
    }
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = k;
            if acc > target {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

/// One systematic-scan epoch over `i = 0..N`.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ClusterState,
    data: &Dataset,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    for i in 0..data.len() {
        let logits = conditional_logits(state, data, hp, i)?;
        if logits.len() == 1 {
            continue;
        }
        let pick = sample_categorical(&logits, rng)?;
        apply_move(state, data, hp, i, pick)?;
    }
    Ok(())
}

/// One epoch where each conditional is scored by full naive recomputation.
/// Used as the reference path in benchmarks.
pub fn naive_gibbs_sweep<R: Rng + ?Sized>(
    z: &mut Vec<usize>,
    data: &Dataset,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    for i in 0..data.len() {
        let logits = naive_conditional_logits(data, hp, z, i)?;
        if logits.len() == 1 {
            continue;
        }
        let pick = sample_categorical(&logits, rng)?;
        z[i] = pick;
        if matches!(hp.mode, Mode::Dp) {
            *z = model::compact_labels(z);
        }
    }
    Ok(())
}

/// Runs `cfg.epochs` sweeps from `init_z` and keeps the last `cfg.retain`
/// indicator vectors.
pub fn run_chain(
    data: &Dataset,
    hp: &Hyperparams,
    cfg: &ChainConfig,
    init_z: &[usize],
) -> Result<ChainSamples> {
    run_chain_observed(data, hp, cfg, init_z, |_, _| {})
}

/// [`run_chain`] with a callback invoked after every sweep with the epoch
/// index and the state.
pub fn run_chain_observed<F>(
    data: &Dataset,
    hp: &Hyperparams,
    cfg: &ChainConfig,
    init_z: &[usize],
    mut observe: F,
) -> Result<ChainSamples>
where
    F: FnMut(usize, &ClusterState),
{
    cfg.validate()?;
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = model::init_state(data, init_z, hp)?;
    let burn_in = cfg.epochs - cfg.retain;
    let mut samples = Vec::with_capacity(cfg.retain);
    for epoch in 0..cfg.epochs {
        gibbs_sweep(&mut state, data, hp, &mut rng)?;
        if (epoch + 1) % REFRESH_INTERVAL == 0 {
            state.refresh(data, hp)?;
        }
        observe(epoch, &state);
        if epoch >= burn_in {
            samples.push(state.z.clone());
        }
    }
    Ok(ChainSamples {
        samples,
        epochs_total: cfg.epochs,
        burn_in,
    })
}

/// Independent chains, one per config, run in parallel. Results come back in
/// the order of `cfgs`.
pub fn run_chains_parallel(
    data: &Dataset,
    hp: &Hyperparams,
    cfgs: &[ChainConfig],
    init_z: &[usize],
) -> Vec<Result<ChainSamples>> {
    cfgs.par_iter()
        .map(|cfg| run_chain(data, hp, cfg, init_z))
        .collect()
}

/// Coordinate ascent on `log q(z)` from `start_z` (finite mode only).
pub fn map_ascent(data: &Dataset, hp: &Hyperparams, start_z: &[usize]) -> Result<Vec<usize>> {
    map_ascent_observed(data, hp, start_z, |_| {})
}

/// [`map_ascent`] with a callback invoked after every applied coordinate update.
///
/// Each coordinate moves to the argmax of its conditional; the current value
/// is kept when it is among the maximizers, otherwise the smallest index wins.
pub fn map_ascent_observed<F>(
    data: &Dataset,
    hp: &Hyperparams,
    start_z: &[usize],
    mut observe: F,
) -> Result<Vec<usize>>
where
    F: FnMut(&ClusterState),
{
    if !matches!(hp.mode, Mode::Finite { .. }) {
        return Err(GcrError::InvalidConfig("MAP ascent requires finite mode".into()));
    }
    hp.validate()?;
    let mut state = model::init_state(data, start_z, hp)?;
    for sweep in 0..MAP_MAX_SWEEPS {
        let mut changed = false;
        for i in 0..data.len() {
            let logits = conditional_logits(&state, data, hp, i)?;
            let current = state.z[i];
            let best = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if best - logits[current] <= MAP_TIE_TOL {
                continue;
            }
            let pick = logits
                .iter()
                .position(|&l| best - l <= MAP_TIE_TOL)
                .expect("maximum exists");
            apply_move(&mut state, data, hp, i, pick)?;
            observe(&state);
            changed = true;
        }
        if !changed {
            return Ok(state.z);
        }
        if (sweep + 1) % REFRESH_INTERVAL == 0 {
            state.refresh(data, hp)?;
        }
    }
    Err(GcrError::NonConvergence(MAP_MAX_SWEEPS))
}

//! Self-checks against the independent oracles: naive recomputation,
//! exhaustive enumeration and direct quadrature.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity;
use crate::error::Result;
use crate::eval;
use crate::model::{self, Dataset, Hyperparams, Mode};
use crate::sampler::{self, ChainConfig};

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Human-readable statistic name, e.g. "max logit deviation".
    pub statistic: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, statistic: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            statistic: statistic.into(),
            value,
            tolerance,
            pass: value <= tolerance,
            detail,
        }
    }

    /// `"<statistic> ≤ <tolerance>: pass|FAIL (<value>)"`.
    pub fn line(&self) -> String {
        format!(
            "{} ≤ {:e}: {} ({:.3e}; {})",
            self.statistic,
            self.tolerance,
            if self.pass { "pass" } else { "FAIL" },
            self.value,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogitCheck {
    pub instances: usize,
    pub max_n: usize,
    pub max_d: usize,
    pub max_k: usize,
    /// Sweeps per instance; every conditional visited along the way is compared.
    pub sweeps: usize,
    pub tolerance: f64,
}

impl Default for LogitCheck {
    fn default() -> Self {
        Self {
            instances: 200,
            max_n: 8,
            max_d: 4,
            max_k: 3,
            sweeps: 2,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationCheck {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub burn_in: usize,
    pub retain: usize,
    pub tolerance: f64,
}

impl Default for EnumerationCheck {
    fn default() -> Self {
        Self {
            n: 7,
            d: 2,
            k: 2,
            burn_in: 2_000,
            retain: 20_000,
            tolerance: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureCheck {
    pub draws: usize,
    pub tolerance: f64,
}

impl Default for QuadratureCheck {
    fn default() -> Self {
        Self {
            draws: 20,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Logits,
    Enumeration,
    DpEnumeration,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub checks: Vec<OracleKind>,
    pub logits: LogitCheck,
    pub enumeration: EnumerationCheck,
    pub quadrature: QuadratureCheck,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            checks: vec![
                OracleKind::Logits,
                OracleKind::Enumeration,
                OracleKind::DpEnumeration,
                OracleKind::Quadrature,
            ],
            logits: LogitCheck::default(),
            enumeration: EnumerationCheck::default(),
            quadrature: QuadratureCheck::default(),
            seed: 0,
        }
    }
}

pub fn run_checks(cfg: &OracleConfig) -> Result<Vec<CheckReport>> {
    cfg.checks
        .iter()
        .map(|kind| match kind {
            OracleKind::Logits => logit_check(&cfg.logits, cfg.seed),
            OracleKind::Enumeration => enumeration_check(&cfg.enumeration, cfg.seed),
            OracleKind::DpEnumeration => dp_enumeration_check(&cfg.enumeration, cfg.seed),
            OracleKind::Quadrature => quadrature_check(&cfg.quadrature, cfg.seed),
        })
        .collect()
}

fn uniform_data<R: Rng>(d: usize, n: usize, rng: &mut R) -> Result<Dataset> {
    Dataset::new(DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.5..1.5)), None)
}

/// Largest gap between cached and naive conditional log-odds (relative to
/// the current label) over random instances in both modes, checked at every
/// site of a few live sweeps.
pub fn logit_check(cfg: &LogitCheck, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for inst in 0..cfg.instances {
        let n = rng.random_range(2..=cfg.max_n.max(2));
        let d = rng.random_range(1..=cfg.max_d.max(1));
        let data = uniform_data(d, n, &mut rng)?;
        let mut hp = if inst % 2 == 0 {
            Hyperparams::finite(rng.random_range(1..=cfg.max_k.max(1)))
        } else {
            Hyperparams::dp()
        };
        hp.alpha_h = rng.random_range(0.05..2.0);
        hp.alpha_l = hp.alpha_h * rng.random_range(1e-4..0.5);
        hp.nu = rng.random_range(0.5..4.0);
        hp.lambda = rng.random_range(0.1..3.0);
        hp.beta0 = rng.random_range(0.3..3.0);
        let labels = match hp.mode {
            Mode::Finite { k } => k,
            Mode::Dp => cfg.max_k.max(1),
        };
        let mut z: Vec<usize> = (0..n).map(|_| rng.random_range(0..labels)).collect();
        if hp.mode == Mode::Dp {
            z = model::compact_labels(&z);
        }
        let mut state = model::init_state(&data, &z, &hp)?;
        for _ in 0..cfg.sweeps {
            for i in 0..n {
                let cached = sampler::conditional_logits(&state, &data, &hp, i)?;
                let naive = sampler::naive_conditional_logits(&data, &hp, state.z(), i)?;
                let reference = naive
                    .iter()
                    .copied()
                    .find(|v| v.is_finite())
                    .expect("some candidate is finite");
                let base = cached[naive.iter().position(|v| *v == reference).unwrap_or(0)];
                for (c, v) in cached.iter().zip(&naive) {
                    if v.is_finite() != c.is_finite() {
                        worst = f64::INFINITY;
                    } else if v.is_finite() {
                        worst = worst.max(((c - base) - (v - reference)).abs());
                    }
                    compared += 1;
                }
                let pick = sampler::sample_categorical(&cached, &mut rng)?;
                sampler::apply_move(&mut state, &data, &hp, i, pick)?;
            }
        }
    }
    Ok(CheckReport::new(
        "logits",
        "max logit deviation",
        worst,
        cfg.tolerance,
        format!("{} instances, {compared} logits", cfg.instances),
    ))
}

fn chain_vs_exact(
    data: &Dataset,
    hp: &Hyperparams,
    exact: &DMatrix<f64>,
    cfg: &EnumerationCheck,
    seed: u64,
) -> Result<f64> {
    let chain = ChainConfig {
        epochs: cfg.burn_in + cfg.retain,
        retain: cfg.retain,
        seed,
    };
    let samples = sampler::run_chain(data, hp, &chain, &vec![0; data.len()])?;
    let g = affinity::probabilistic_affinity(&samples)?;
    Ok((&g.values - exact).abs().max())
}

/// Chain co-assignment frequencies against the exact finite-K posterior.
pub fn enumeration_check(cfg: &EnumerationCheck, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let data = uniform_data(cfg.d, cfg.n, &mut rng)?;
    let hp = Hyperparams::finite(cfg.k);
    let exact = eval::enumerate_posterior(&data, &hp)?;
    let err = chain_vs_exact(&data, &hp, &exact.coassignment, cfg, rng.random())?;
    Ok(CheckReport::new(
        "enumeration",
        "max co-assignment error",
        err,
        cfg.tolerance,
        format!(
            "N={}, D={}, K={}, {} retained sweeps after {}",
            cfg.n, cfg.d, cfg.k, cfg.retain, cfg.burn_in
        ),
    ))
}

/// As [`enumeration_check`] for the DP sampler against all set partitions.
pub fn dp_enumeration_check(cfg: &EnumerationCheck, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd9);
    let data = uniform_data(cfg.d, cfg.n, &mut rng)?;
    let hp = Hyperparams::dp();
    let exact = eval::enumerate_partitions_dp(&data, &hp)?;
    let err = chain_vs_exact(&data, &hp, &exact.coassignment, cfg, rng.random())?;
    Ok(CheckReport::new(
        "dp-enumeration",
        "max DP co-assignment error",
        err,
        cfg.tolerance,
        format!(
            "N={}, D={}, DP, {} retained sweeps after {}",
            cfg.n, cfg.d, cfg.retain, cfg.burn_in
        ),
    ))
}

/// Random one-dimensional pairs and hyperparameters; relative gap between
/// the collapsed posterior ratio and its quadrature value.
pub fn quadrature_check(cfg: &QuadratureCheck, seed: u64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a4d);
    let mut worst = 0.0f64;
    for _ in 0..cfg.draws {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let mut hp = Hyperparams::finite(2);
        hp.nu = rng.random_range(0.5..5.0);
        hp.lambda = 10f64.powf(rng.random_range(-1.0..1.0));
        hp.alpha_h = 10f64.powf(rng.random_range(-2.0..1.0));
        hp.alpha_l = hp.alpha_h * 10f64.powf(rng.random_range(-4.0..-0.3));
        hp.beta0 = rng.random_range(0.5..3.0);
        let (closed, quad) = eval::quadrature_marginal_check(x, &hp)?;
        worst = worst.max((closed - quad).abs() / closed.abs());
    }
    Ok(CheckReport::new(
        "quadrature",
        "ratio agreement",
        worst,
        cfg.tolerance,
        format!("{} draws, D=1, N=2", cfg.draws),
    ))
}

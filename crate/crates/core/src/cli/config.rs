use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GcrError, Result};
use crate::eval::PcaTarget;
use crate::model::{Hyperparams, Mode};
use crate::sampler::ChainConfig;
use crate::synthdata::SynthSpec;

/// Stream ids for [`derive_seed`] and [`stream_rng`].
pub const STREAM_GENERATOR: u64 = 1;
pub const STREAM_CHAIN: u64 = 2;
pub const STREAM_KMEANS: u64 = 3;

/// A ChaCha stream keyed by the root seed; distinct ids never overlap.
pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// First word of [`stream_rng`], for components that take a `u64` seed.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    stream_rng(root, stream).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Finite-K chain, then MAP coordinate ascent from the last sample.
    GcrMap,
    /// Finite-K chain, then NCut on the probabilistic affinity.
    GcrBayes,
    /// DP chain, then NCut on the probabilistic affinity.
    GcrDpBayes,
}

impl Pipeline {
    pub fn mode(self, k: usize) -> Mode {
        match self {
            Pipeline::GcrMap | Pipeline::GcrBayes => Mode::Finite { k },
            Pipeline::GcrDpBayes => Mode::Dp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum DatasetSource {
    /// Synthetic lines; the generator seed is derived from the root seed.
    Generate(SynthSpec),
    /// Dataset CSV with a header row and an optional trailing `label` column.
    Csv { path: PathBuf },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Generate(SynthSpec::default())
    }
}

/// Model hyperparameters without the mode, which the pipeline determines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub beta0: f64,
    pub nu: f64,
    pub lambda: f64,
    pub alpha_h: f64,
    pub alpha_l: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let hp = Hyperparams::dp();
        Self {
            beta0: hp.beta0,
            nu: hp.nu,
            lambda: hp.lambda,
            alpha_h: hp.alpha_h,
            alpha_l: hp.alpha_l,
        }
    }
}

impl ModelParams {
    pub fn with_mode(&self, mode: Mode) -> Hyperparams {
        Hyperparams {
            beta0: self.beta0,
            nu: self.nu,
            lambda: self.lambda,
            alpha_h: self.alpha_h,
            alpha_l: self.alpha_l,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    pub epochs: usize,
    pub retain: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        let c = ChainConfig::default();
        Self {
            epochs: c.epochs,
            retain: c.retain,
        }
    }
}

/// Everything `fit` needs; a pure function of this value and `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub model: ModelParams,
    pub chain: ChainParams,
    pub pipeline: Pipeline,
    /// Final cluster count for NCut and, in finite mode, the model's `K`.
    /// Defaults to the generator's `K`.
    pub k: Option<usize>,
    /// Jitter for the initialization affinity; `None` uses the data-scaled default.
    pub delta: Option<f64>,
    pub pca: Option<PcaTarget>,
    pub write_affinity: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            model: ModelParams::default(),
            chain: ChainParams::default(),
            pipeline: Pipeline::GcrMap,
            k: None,
            delta: None,
            pca: None,
            write_affinity: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Final `K`: explicit, else the generator's.
    pub fn resolved_k(&self) -> Result<usize> {
        match (self.k, &self.dataset) {
            (Some(k), _) => Ok(k),
            (None, DatasetSource::Generate(spec)) => Ok(spec.k),
            (None, DatasetSource::Csv { .. }) => Err(GcrError::InvalidConfig(
                "k is required when the dataset comes from a file".into(),
            )),
        }
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let k = self.resolved_k()?;
        let hp = self.model.with_mode(self.pipeline.mode(k));
        hp.validate()?;
        Ok(hp)
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            epochs: self.chain.epochs,
            retain: self.chain.retain,
            seed: derive_seed(self.seed, STREAM_CHAIN),
        }
    }

    /// Fills in the derived generator seed so the echo is self-contained.
    pub fn resolve(mut self) -> Result<Self> {
        if let DatasetSource::Generate(spec) = &mut self.dataset {
            spec.seed = derive_seed(self.seed, STREAM_GENERATOR);
            spec.validate()?;
        }
        self.k = Some(self.resolved_k()?);
        self.hyperparams()?;
        self.chain_config().validate()?;
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(GcrError::InvalidConfig("delta must be positive".into()));
            }
        }
        Ok(self)
    }
}

//! Subspace clustering with the groupwise constrained reconstruction model.
//!
//! The reconstruction weights, noise scales and cluster proportions are
//! integrated out analytically, leaving a posterior over cluster indicators
//! that is explored by collapsed Gibbs sampling (finite `K` or the
//! Dirichlet-process limit). Final clusterings come either from MAP coordinate
//! ascent or from normalized-cut spectral clustering of the probabilistic
//! co-assignment affinity.

pub mod affinity;
pub mod cli;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod synthdata;

pub use error::{GcrError, Result};
pub use model::{ChainSamples, ClusterState, Dataset, Hyperparams, Mode};
pub use sampler::ChainConfig;

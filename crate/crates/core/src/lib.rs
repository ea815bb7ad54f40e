//! Minimax risk classifiers (MRCs) for high-dimensional data.
//!
//! The 0-1 MRC learning problem is an exact linear program over features
//! `Φ(x, y) = e_y ⊗ Ψ(x)`. Because the optimal coefficient vector is sparse,
//! the LP is solved by constraint generation: a sequence of small
//! subproblems over selected features, each warm-started from the previous
//! basis. Every iteration yields a worst-case error probability `R^k`, and
//! the sequence is non-increasing.
//!
//! Module map:
//!
//! - [`datasets`]: CSV ingestion, standardization, stratified folds and
//!   synthetic Gaussian problems.
//! - [`featmap`]: identity and random Fourier instance maps, block-sparse `Φ`.
//! - [`problem`]: moment estimates `τ`, `λ` and the implicit constraint
//!   matrix over (instance, label subset) pairs.
//! - [`lp`]: LP model, a dense revised simplex with warm starts, certificates.
//! - [`cg`]: the constraint-generation driver, greedy feature selection and
//!   the all-features baseline.
//! - [`classifier`]: the learned model, prediction rules, model files.

pub mod cg;
pub mod classifier;
pub mod datasets;
mod error;
pub mod featmap;
pub mod lp;
pub mod problem;
mod sparse;

pub use cg::{CgConfig, CgTrace, FeatureMapSpec, InitStrategy, IterationRecord};
pub use classifier::MrcModel;
pub use datasets::{Dataset, ScalerParams};
pub use error::{Error, Result};
pub use featmap::{FeatureMap, InstanceMap};
pub use problem::{ConstraintSystem, MomentStats};
pub use sparse::SparseVector;

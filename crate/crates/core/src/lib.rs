//! Validated prior integration for tabular learning: LLM-derived (or
//! file-supplied) feature-importance priors are injected into a dictionary
//! of base learners through monotone transforms, validated by out-of-fold
//! stacking with a nonnegative meta-learner, and evaluated with paired
//! split experiments and synthetic oracle/adversarial simulations.

pub mod config;
pub mod data;
pub mod error;
pub mod evalsim;
pub mod learners;
pub mod priors;
pub mod rng;
pub mod scalar;
pub mod scores;
pub mod stacking;

pub use config::{LearnerConfig, LearnerId, RunConfig};
pub use data::{Dataset, FeaturePrior, Standardizer, TaskKind};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete aliases for the default double-precision pipeline.
pub type Dataset64 = data::Dataset<f64>;
pub type FeaturePrior64 = data::FeaturePrior<f64>;
pub type Standardizer64 = data::Standardizer<f64>;
pub type Model64 = stacking::StatsformerModel<f64>;
pub type FittedLearner64 = learners::FittedLearner<f64>;

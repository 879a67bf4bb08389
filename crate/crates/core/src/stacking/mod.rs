//! Out-of-fold stacking: fold construction, the OOF prediction engine, the
//! nonnegative meta-learner, and the assembled final predictor.

pub mod folds;
pub mod meta;
pub mod model;
pub mod oof;

pub use folds::{fold_plan, make_folds, FoldPlan};
pub use meta::{fit_meta_classification, fit_meta_regression, MetaWeights};
pub use model::{fit_statsformer, predict_model, Prediction, StatsformerModel};
pub use oof::{compute_oof, prepare_dictionary, OofMatrix, PreparedConfig};

//! Base learners and the adapter wiring that injects a transformed feature
//! prior into each one.

pub mod forest;
pub mod gbt;
pub mod lasso;
pub mod svm;
pub mod tree;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{LearnerConfig, LearnerId, TiltMode};
use crate::data::{FeaturePrior, Targets, TaskKind};
use crate::error::{Error, Result};
use crate::priors::{
    feature_sampling_probs, feature_scales, instance_weights, penalty_weights, raw_activation,
    TransformParams,
};
use crate::scalar::Scalar;

pub use forest::{fit_random_forest, ForestModel};
pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use lasso::{fit_lasso, LambdaChoice, LassoModel};
pub use svm::{fit_kernel_svm, GammaChoice, SvmModel};

/// A fitted base learner; prediction maps standardized rows to scores
/// (regression value, binary logit, or per-class logits).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum FittedLearner<F: Scalar> {
    Lasso(LassoModel<F>),
    Forest(ForestModel<F>),
    Gbt(GbtModel<F>),
    Svm(SvmModel<F>),
}

impl<F: Scalar> FittedLearner<F> {
    pub fn n_features(&self) -> usize {
        match self {
            FittedLearner::Lasso(m) => m.n_features(),
            FittedLearner::Forest(m) => m.feature_probs.len(),
            FittedLearner::Gbt(m) => m.feature_probs.len(),
            FittedLearner::Svm(m) => m.scales.len(),
        }
    }

    pub fn predict(&self, x_std: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if x_std.ncols() != self.n_features() {
            return Err(Error::data(format!(
                "prediction input has {} columns, model expects {}",
                x_std.ncols(),
                self.n_features()
            )));
        }
        Ok(match self {
            FittedLearner::Lasso(m) => m.predict(x_std),
            FittedLearner::Forest(m) => m.predict(x_std),
            FittedLearner::Gbt(m) => m.predict(x_std),
            FittedLearner::Svm(m) => m.predict(x_std),
        })
    }

    /// Frozen per-head lasso regularization strengths, if this is a lasso.
    pub fn lasso_lambdas(&self) -> Option<Vec<f64>> {
        match self {
            FittedLearner::Lasso(m) => Some(m.lambdas()),
            _ => None,
        }
    }
}

/// Everything a configuration needs to fit on one slice of data. The prior
/// is transformed here, against the standardized training slice, so
/// out-of-fold fits never see information from their held-out fold.
pub struct FitContext<'a, F: Scalar> {
    pub x_std: ArrayView2<'a, F>,
    pub targets: &'a Targets<F>,
    pub task: TaskKind,
    pub prior: &'a FeaturePrior<F>,
    pub epsilon: F,
    pub q: u32,
    pub tilt_mode: TiltMode,
    pub tilt_target_fraction: F,
    /// seed for this particular fit task
    pub seed: u64,
    /// lasso regularization: frozen values, or None to select by internal CV
    pub lasso_lambdas: Option<Vec<f64>>,
    pub lasso_cv_folds: usize,
}

/// Fit one dictionary configuration with its admissible adapter(s).
pub fn fit_configuration<F: Scalar>(
    cfg: &LearnerConfig,
    ctx: &FitContext<'_, F>,
) -> Result<FittedLearner<F>> {
    cfg.validate()?;
    if ctx.prior.len() != ctx.x_std.ncols() {
        return Err(Error::data("prior length must match feature count"));
    }
    let alpha = F::from_f(cfg.alpha);
    let beta = F::from_f(cfg.beta);
    let t = TransformParams::new(alpha, ctx.epsilon);
    match cfg.learner {
        LearnerId::Lasso => {
            let pf = penalty_weights(ctx.prior, &t);
            let lambda = match &ctx.lasso_lambdas {
                Some(values) => LambdaChoice::Fixed(values.clone()),
                None => LambdaChoice::CrossValidated {
                    folds: ctx.lasso_cv_folds,
                    seed: crate::rng::derive_seed(ctx.seed, "lasso-internal-cv", &[]),
                },
            };
            Ok(FittedLearner::Lasso(fit_lasso(
                ctx.x_std,
                ctx.targets,
                &pf,
                ctx.task,
                &lambda,
            )?))
        }
        LearnerId::RandomForest => {
            let probs = feature_sampling_probs(ctx.prior, &t);
            let activations = raw_activation(ctx.x_std, ctx.prior, ctx.q);
            let weights = instance_weights(
                &activations,
                beta,
                ctx.epsilon,
                ctx.tilt_mode,
                ctx.tilt_target_fraction,
            )?;
            let n_trees = cfg.hyper_or("n_trees", 50.0) as usize;
            Ok(FittedLearner::Forest(fit_random_forest(
                ctx.x_std,
                ctx.targets,
                Some(&weights),
                Some(&probs),
                ctx.task,
                n_trees,
                ctx.seed,
            )?))
        }
        LearnerId::Gbt => {
            let probs = feature_sampling_probs(ctx.prior, &t);
            let params = GbtParams {
                rounds: cfg.hyper_or("rounds", gbt::DEFAULT_ROUNDS as f64) as usize,
                max_depth: cfg.hyper_or("max_depth", gbt::DEFAULT_MAX_DEPTH as f64) as usize,
                learning_rate: cfg.hyper_or("learning_rate", gbt::DEFAULT_LEARNING_RATE),
                reg_lambda: cfg.hyper_or("reg_lambda", gbt::DEFAULT_REG_LAMBDA),
                min_child_hessian: cfg.hyper_or(
                    "min_child_hessian",
                    gbt::DEFAULT_MIN_CHILD_HESSIAN,
                ),
            };
            Ok(FittedLearner::Gbt(fit_gbt(
                ctx.x_std,
                ctx.targets,
                Some(&probs),
                ctx.task,
                params,
                ctx.seed,
            )?))
        }
        LearnerId::KernelSvm => {
            let scales = feature_scales(ctx.prior, &t);
            let c = F::from_f(cfg.hyper_or("c", svm::DEFAULT_C));
            let gamma = match cfg.hyper.get("gamma") {
                Some(&g) => GammaChoice::Fixed(g),
                None => GammaChoice::Auto,
            };
            Ok(FittedLearner::Svm(fit_kernel_svm(
                ctx.x_std,
                ctx.targets,
                &scales,
                ctx.task,
                c,
                gamma,
            )?))
        }
    }
}

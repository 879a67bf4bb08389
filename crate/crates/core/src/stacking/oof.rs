//! Out-of-fold prediction engine.
//!
//! For every (fold, configuration) pair the standardizer and all adapter
//! inputs are computed from the training folds only, the learner is fit
//! there, and its predictions fill the held-out rows of the OOF matrix.
//! Task seeds are keyed by (run seed, fold, configuration content), so
//! results are independent of scheduling and duplicated configurations
//! produce identical columns.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::{LearnerConfig, LearnerId, RunConfig, StandardizeScope};
use crate::data::{Dataset, FeaturePrior, Standardizer, Targets};
use crate::error::{Error, Result};
use crate::learners::{fit_configuration, FitContext};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stacking::folds::FoldPlan;

/// A dictionary entry with per-configuration state frozen before the OOF
/// loop (the lasso regularization path is selected once on the full data
/// and held fixed across fold refits).
#[derive(Debug, Clone)]
pub struct PreparedConfig {
    pub config: LearnerConfig,
    pub lasso_lambdas: Option<Vec<f64>>,
}

/// Stable fingerprint of a configuration's content, used to key RNG
/// sub-streams.
pub fn config_fingerprint(cfg: &LearnerConfig) -> u64 {
    let mut label = cfg.label();
    for (k, v) in &cfg.hyper {
        label.push_str(k);
        label.push_str(&format!("{v}"));
    }
    derive_seed(0, &label, &[])
}

/// Freeze per-configuration hyperparameters (currently the lasso lambda)
/// before the out-of-fold stage.
pub fn prepare_dictionary<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    dictionary: &[LearnerConfig],
    rc: &RunConfig,
) -> Result<Vec<PreparedConfig>> {
    let standardizer = Standardizer::fit(d.features());
    let x_std = standardizer.transform(d.features());
    let mut out = Vec::with_capacity(dictionary.len());
    for cfg in dictionary {
        let lasso_lambdas = if cfg.learner == LearnerId::Lasso {
            let ctx = FitContext {
                x_std: x_std.view(),
                targets: d.targets(),
                task: d.task(),
                prior,
                epsilon: F::from_f(rc.epsilon),
                q: rc.q,
                tilt_mode: rc.tilt_mode,
                tilt_target_fraction: F::from_f(rc.tilt_target_fraction),
                seed: derive_seed(rc.seed, "lasso-lambda", &[config_fingerprint(cfg)]),
                lasso_lambdas: None,
                lasso_cv_folds: 5,
            };
            let fitted = fit_configuration(cfg, &ctx)?;
            fitted.lasso_lambdas()
        } else {
            None
        };
        out.push(PreparedConfig {
            config: cfg.clone(),
            lasso_lambdas,
        });
    }
    Ok(out)
}

/// The out-of-fold design matrix, one slice per learner output column.
#[derive(Debug, Clone)]
pub struct OofMatrix<F: Scalar> {
    /// one n x L matrix per output (1 for regression/binary, c for
    /// multiclass)
    pub slices: Vec<Array2<F>>,
    /// surviving configurations, in dictionary order
    pub configs: Vec<PreparedConfig>,
    pub plan: FoldPlan,
    /// configurations removed because a fold failed, with the reason
    pub dropped: Vec<(LearnerConfig, String)>,
}

struct FoldData<F: Scalar> {
    train_targets: Targets<F>,
    x_train_std: Array2<F>,
    x_test_std: Array2<F>,
    test_idx: Vec<usize>,
}

/// Run the K x L out-of-fold fits and assemble the OOF matrix. A
/// configuration that fails on any fold is dropped with a warning; the run
/// proceeds while at least one column survives.
pub fn compute_oof<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    prepared: &[PreparedConfig],
    plan: &FoldPlan,
    rc: &RunConfig,
) -> Result<OofMatrix<F>> {
    if prior.len() != d.n_features() {
        return Err(Error::data("prior length must match feature count"));
    }
    if plan.n_samples() != d.n_samples() {
        return Err(Error::data("fold plan does not match dataset size"));
    }
    let n = d.n_samples();
    let n_outputs = d.task().n_outputs();
    let l_total = prepared.len();

    let global_standardizer = Standardizer::fit(d.features());
    let folds: Vec<Arc<FoldData<F>>> = (0..plan.k)
        .map(|k| {
            let train_idx = plan.train_indices(k);
            let test_idx = plan.test_indices(k);
            let x_train = d.features().select(ndarray::Axis(0), &train_idx);
            let x_test = d.features().select(ndarray::Axis(0), &test_idx);
            let standardizer = match rc.standardize_scope {
                StandardizeScope::PerFold => Standardizer::fit(x_train.view()),
                StandardizeScope::Global => global_standardizer.clone(),
            };
            let train_targets = match d.targets() {
                Targets::Classes(ys) => {
                    Targets::Classes(train_idx.iter().map(|&i| ys[i]).collect())
                }
                Targets::Real(ys) => Targets::Real(train_idx.iter().map(|&i| ys[i]).collect()),
            };
            Arc::new(FoldData {
                train_targets,
                x_train_std: standardizer.transform(x_train.view()),
                x_test_std: standardizer.transform(x_test.view()),
                test_idx,
            })
        })
        .collect();

    let tasks: Vec<(usize, usize)> = (0..plan.k)
        .flat_map(|k| (0..l_total).map(move |l| (k, l)))
        .collect();
    let results: Vec<(usize, usize, Result<Array2<F>>)> = tasks
        .par_iter()
        .map(|&(k, l)| {
            let fold = &folds[k];
            let cfg = &prepared[l];
            let ctx = FitContext {
                x_std: fold.x_train_std.view(),
                targets: &fold.train_targets,
                task: d.task(),
                prior,
                epsilon: F::from_f(rc.epsilon),
                q: rc.q,
                tilt_mode: rc.tilt_mode,
                tilt_target_fraction: F::from_f(rc.tilt_target_fraction),
                seed: derive_seed(
                    rc.seed,
                    "oof",
                    &[k as u64, config_fingerprint(&cfg.config)],
                ),
                lasso_lambdas: cfg.lasso_lambdas.clone(),
                lasso_cv_folds: 5,
            };
            let preds = fit_configuration(&cfg.config, &ctx)
                .and_then(|m| m.predict(fold.x_test_std.view()));
            (k, l, preds)
        })
        .collect();

    let mut slices = vec![Array2::<F>::zeros((n, l_total)); n_outputs];
    let mut failed: Vec<Option<String>> = vec![None; l_total];
    for (k, l, outcome) in results {
        match outcome {
            Ok(preds) => {
                let fold = &folds[k];
                for (row, &i) in fold.test_idx.iter().enumerate() {
                    for c in 0..n_outputs {
                        slices[c][[i, l]] = preds[[row, c]];
                    }
                }
            }
            Err(e) => {
                let msg = format!("fold {k}: {e}");
                failed[l].get_or_insert(msg);
            }
        }
    }

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (l, reason) in failed.iter().enumerate() {
        match reason {
            None => keep.push(l),
            Some(msg) => {
                log::warn!(
                    "dropping configuration {} from the dictionary: {msg}",
                    prepared[l].config.label()
                );
                dropped.push((prepared[l].config.clone(), msg.clone()));
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::numeric(
            "every configuration failed during the out-of-fold stage",
        ));
    }
    let slices: Vec<Array2<F>> = slices
        .into_iter()
        .map(|m| m.select(ndarray::Axis(1), &keep))
        .collect();
    let configs = keep.iter().map(|&l| prepared[l].clone()).collect();
    for slice in &slices {
        if slice.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite out-of-fold prediction"));
        }
    }
    Ok(OofMatrix {
        slices,
        configs,
        plan: plan.clone(),
        dropped,
    })
}

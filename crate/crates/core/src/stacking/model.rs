//! Final predictor assembly: meta weights over the surviving dictionary,
//! full-data refits of every weighted configuration, and prediction.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{enumerate_dictionary, LearnerConfig, RunConfig};
use crate::data::{Dataset, FeaturePrior, Standardizer, Targets, TaskKind};
use crate::error::{Error, Result};
use crate::learners::{fit_configuration, FitContext, FittedLearner};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stacking::folds::make_folds;
use crate::stacking::meta::{fit_meta_classification, fit_meta_regression, MetaWeights};
use crate::stacking::oof::{compute_oof, config_fingerprint, prepare_dictionary, OofMatrix};

/// Threshold below which a meta weight counts as zero for refit purposes.
pub const WEIGHT_DROP_THRESHOLD: f64 = 1e-8;

/// One refit ensemble member with its per-output aggregation weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EnsembleMember<F: Scalar> {
    pub config: LearnerConfig,
    pub learner: FittedLearner<F>,
    /// weight per output slice (length 1, or c for multiclass)
    pub pi: Vec<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub prior_fingerprint: String,
    pub created_unix: u64,
    pub dictionary_size: usize,
    pub surviving_columns: usize,
    pub dropped_configs: Vec<String>,
    /// standardization statistics convention, recorded for reproducibility
    pub std_convention: String,
}

/// The deployed predictor: intercepts and nonnegative weights over refit
/// base learners, plus the full-data standardizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StatsformerModel<F: Scalar> {
    pub task: TaskKind,
    pub feature_names: Vec<String>,
    pub class_labels: Vec<String>,
    pub standardizer: Standardizer<F>,
    /// intercept per output slice
    pub intercepts: Vec<F>,
    pub members: Vec<EnsembleMember<F>>,
    /// regularization strength selected per output slice
    pub selected_regs: Vec<f64>,
    pub run_config: RunConfig,
    pub provenance: Provenance,
}

/// Model output for a batch of rows.
#[derive(Debug, Clone)]
pub enum Prediction<F: Scalar> {
    Regression(Vec<F>),
    /// probability of class 1 and the 0.5-threshold label
    Binary { probabilities: Vec<F>, labels: Vec<usize> },
    /// per-class scores (n x c) and argmax labels
    Multiclass { scores: Array2<F>, labels: Vec<usize> },
}

/// Summary of a fit, printed by the command-line driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub dictionary_size: usize,
    pub surviving_columns: usize,
    pub nonzero_weights: usize,
    pub selected_regs: Vec<f64>,
    pub dropped: Vec<String>,
}

fn sigmoid<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

/// Refit every configuration whose meta weight clears the drop threshold in
/// any output slice, on the full standardized dataset with adapters
/// recomputed there, and assemble the final model. A refit failure of a
/// weighted configuration is an error.
pub fn refit_and_assemble<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    oof: &OofMatrix<F>,
    weights: &[MetaWeights<F>],
    rc: &RunConfig,
) -> Result<StatsformerModel<F>> {
    let l_count = oof.configs.len();
    for w in weights {
        if w.pi.len() != l_count {
            return Err(Error::numeric("meta weight length mismatch"));
        }
    }
    let threshold = F::from_f(WEIGHT_DROP_THRESHOLD);
    let standardizer = Standardizer::fit(d.features());
    let x_std = standardizer.transform(d.features());

    let mut members = Vec::new();
    for l in 0..l_count {
        let max_weight = weights
            .iter()
            .map(|w| w.pi[l])
            .fold(F::zero(), F::max);
        if max_weight <= threshold {
            continue;
        }
        let cfg = &oof.configs[l];
        let ctx = FitContext {
            x_std: x_std.view(),
            targets: d.targets(),
            task: d.task(),
            prior,
            epsilon: F::from_f(rc.epsilon),
            q: rc.q,
            tilt_mode: rc.tilt_mode,
            tilt_target_fraction: F::from_f(rc.tilt_target_fraction),
            seed: derive_seed(rc.seed, "refit", &[config_fingerprint(&cfg.config)]),
            lasso_lambdas: cfg.lasso_lambdas.clone(),
            lasso_cv_folds: 5,
        };
        let learner = fit_configuration(&cfg.config, &ctx).map_err(|e| {
            Error::numeric(format!(
                "refit of weighted configuration {} failed: {e}",
                cfg.config.label()
            ))
        })?;
        members.push(EnsembleMember {
            config: cfg.config.clone(),
            learner,
            pi: weights.iter().map(|w| w.pi[l]).collect(),
        });
    }

    Ok(StatsformerModel {
        task: d.task(),
        feature_names: d.feature_names().to_vec(),
        class_labels: d.class_labels().to_vec(),
        standardizer,
        intercepts: weights.iter().map(|w| w.intercept).collect(),
        members,
        selected_regs: weights.iter().map(|w| w.reg).collect(),
        run_config: rc.clone(),
        provenance: Provenance {
            seed: rc.seed,
            prior_fingerprint: prior.fingerprint(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            dictionary_size: l_count + oof.dropped.len(),
            surviving_columns: l_count,
            dropped_configs: oof
                .dropped
                .iter()
                .map(|(c, msg)| format!("{}: {msg}", c.label()))
                .collect(),
            std_convention: "column mean/population (1/n) std; constant columns std=1".to_string(),
        },
    })
}

/// The full training pipeline: dictionary enumeration, fold construction,
/// per-configuration preparation, the out-of-fold stage, the nonnegative
/// meta fit, and the final refit.
pub fn fit_statsformer<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    rc: &RunConfig,
) -> Result<(StatsformerModel<F>, FitReport)> {
    if prior.len() != d.n_features() {
        return Err(Error::data(format!(
            "prior has {} entries for {} features",
            prior.len(),
            d.n_features()
        )));
    }
    let dictionary = enumerate_dictionary(rc)?;
    let plan = make_folds(d, rc.k_folds, derive_seed(rc.seed, "folds", &[]))?;
    let prepared = prepare_dictionary(d, prior, &dictionary, rc)?;
    let oof = compute_oof(d, prior, &prepared, &plan, rc)?;

    let weights: Vec<MetaWeights<F>> = match d.targets() {
        Targets::Real(ys) => vec![fit_meta_regression(
            oof.slices[0].view(),
            ys,
            &rc.meta_reg_grid,
            &plan,
        )?],
        Targets::Classes(ys) => {
            fit_meta_classification(&oof.slices, ys, &rc.meta_reg_grid, &plan)?
        }
    };

    let model = refit_and_assemble(d, prior, &oof, &weights, rc)?;
    let report = FitReport {
        dictionary_size: dictionary.len(),
        surviving_columns: oof.configs.len(),
        nonzero_weights: model.members.len(),
        selected_regs: model.selected_regs.clone(),
        dropped: model.provenance.dropped_configs.clone(),
    };
    Ok((model, report))
}

impl<F: Scalar> StatsformerModel<F> {
    /// Per-output aggregate scores on raw (unstandardized) inputs.
    pub fn scores(&self, x_raw: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if x_raw.ncols() != self.feature_names.len() {
            return Err(Error::data(format!(
                "input has {} columns, model expects {}",
                x_raw.ncols(),
                self.feature_names.len()
            )));
        }
        let x_std = self.standardizer.transform(x_raw);
        let n_outputs = self.task.n_outputs();
        let mut scores = Array2::zeros((x_raw.nrows(), n_outputs));
        for c in 0..n_outputs {
            for i in 0..x_raw.nrows() {
                scores[[i, c]] = self.intercepts[c];
            }
        }
        for member in &self.members {
            let preds = member.learner.predict(x_std.view())?;
            for c in 0..n_outputs {
                let w = member.pi[c];
                if w == F::zero() {
                    continue;
                }
                for i in 0..x_raw.nrows() {
                    scores[[i, c]] += w * preds[[i, c]];
                }
            }
        }
        Ok(scores)
    }
}

/// Predict with an assembled model: regression values, binary
/// probabilities with 0.5-threshold labels, or one-vs-rest argmax labels.
pub fn predict_model<F: Scalar>(
    model: &StatsformerModel<F>,
    x_raw: ArrayView2<'_, F>,
) -> Result<Prediction<F>> {
    let scores = model.scores(x_raw)?;
    Ok(match model.task {
        TaskKind::Regression => Prediction::Regression(scores.column(0).to_vec()),
        TaskKind::Binary => {
            let probabilities: Vec<F> = scores.column(0).iter().map(|&s| sigmoid(s)).collect();
            let labels = probabilities
                .iter()
                .map(|&p| usize::from(p >= F::from_f(0.5)))
                .collect();
            Prediction::Binary {
                probabilities,
                labels,
            }
        }
        TaskKind::Multiclass(c) => {
            let labels = (0..scores.nrows())
                .map(|i| {
                    let mut best = 0usize;
                    for k in 1..c {
                        if scores[[i, k]] > scores[[i, best]] {
                            best = k;
                        }
                    }
                    best
                })
                .collect();
            Prediction::Multiclass { scores, labels }
        }
    })
}

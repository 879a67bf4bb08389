//! Paired-split experiment drivers: training-ratio sweeps on real data and
//! the synthetic oracle / adversarial-prior comparisons. Every cell fits
//! all arms on identical index sets and identical derived seeds, so the
//! records are exactly paired.

use std::path::Path;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{Dataset, FeaturePrior};
use crate::error::{Error, Result};
use crate::evalsim::metrics::{accuracy, auroc, mse, ExperimentRecord, SummaryRow};
use crate::evalsim::split::{split_is_feasible, train_test_split, SplitSpec};
use crate::evalsim::synth::{generate_oracle_problem, SyntheticSpec};
use crate::priors::invert_prior;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stacking::model::{fit_statsformer, predict_model, Prediction};

/// Experiment arm: which prior the shared pipeline receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// the supplied prior
    Statsformer,
    /// uniform prior (all transforms at their null point)
    NoPrior,
    /// order-reversed prior
    Adversarial,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Statsformer => "statsformer",
            Method::NoPrior => "noprior",
            Method::Adversarial => "adversarial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "statsformer" => Ok(Method::Statsformer),
            "noprior" | "no_prior" => Ok(Method::NoPrior),
            "adversarial" => Ok(Method::Adversarial),
            other => Err(Error::usage(format!("unknown method '{other}'"))),
        }
    }

    fn prior_for<F: Scalar>(self, supplied: &FeaturePrior<F>) -> FeaturePrior<F> {
        match self {
            Method::Statsformer => supplied.clone(),
            Method::NoPrior => FeaturePrior::uniform(supplied.len()),
            Method::Adversarial => invert_prior(supplied),
        }
    }
}

/// Metrics applicable to a fitted model on a held-out subset.
fn evaluate<F: Scalar>(
    model: &crate::stacking::model::StatsformerModel<F>,
    test: &Dataset<F>,
) -> Result<Vec<(String, f64)>> {
    let prediction = predict_model(model, test.features())?;
    Ok(match prediction {
        Prediction::Regression(values) => {
            vec![(
                "mse".to_string(),
                mse(test.targets().reals(), &values)?,
            )]
        }
        Prediction::Binary {
            probabilities,
            labels,
        } => {
            let truth = test.targets().classes();
            vec![
                ("accuracy".to_string(), accuracy(truth, &labels)?),
                ("auroc".to_string(), auroc(truth, &probabilities)?),
            ]
        }
        Prediction::Multiclass { labels, .. } => {
            let truth = test.targets().classes();
            vec![("accuracy".to_string(), accuracy(truth, &labels)?)]
        }
    })
}

/// One paired cell: fit every arm on the same train rows with the same
/// derived seed and score it on the same test rows.
#[allow(clippy::too_many_arguments)]
fn run_cell<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    methods: &[Method],
    train: &[usize],
    test: &[usize],
    dataset_label: &str,
    train_ratio: f64,
    seed: u64,
    cell_seed: u64,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    let train_set = d.subset(train)?;
    let test_set = d.subset(test)?;
    let mut rc_cell = rc.clone();
    rc_cell.seed = cell_seed;
    let mut records = Vec::new();
    for &method in methods {
        let arm_prior = method.prior_for(prior);
        let (model, _) = fit_statsformer(&train_set, &arm_prior, &rc_cell)?;
        for (metric, value) in evaluate(&model, &test_set)? {
            records.push(ExperimentRecord {
                dataset: dataset_label.to_string(),
                method: method.label().to_string(),
                train_ratio,
                seed,
                metric,
                value,
            });
        }
    }
    Ok(records)
}

/// Training-ratio sweep over paired random splits. Cells that violate the
/// per-class floor or the fold requirements are skipped with a warning.
pub fn run_sweep<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    spec: &SplitSpec,
    methods: &[Method],
    dataset_label: &str,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::usage("no methods requested"));
    }
    let mut cells = Vec::new();
    for &ratio in &spec.train_ratios {
        if ratio > 1.0 - spec.test_ratio + 1e-12 {
            log::warn!("skipping train ratio {ratio}: exceeds 1 - test ratio");
            continue;
        }
        for &seed in &spec.seeds {
            let (train, test) = train_test_split(d, ratio, spec.test_ratio, seed)?;
            if !split_is_feasible(d, &train, &test) {
                log::warn!(
                    "skipping split (ratio {ratio}, seed {seed}): a class falls below the per-side floor"
                );
                continue;
            }
            if d.task().is_classification() {
                let ys = d.targets().classes();
                let n_classes = d.task().n_classes().unwrap();
                let min_train_class = (0..n_classes)
                    .map(|c| train.iter().filter(|&&i| ys[i] == c).count())
                    .min()
                    .unwrap_or(0);
                if min_train_class < rc.k_folds {
                    log::warn!(
                        "skipping split (ratio {ratio}, seed {seed}): minority class smaller than k_folds"
                    );
                    continue;
                }
            }
            cells.push((ratio, seed, train, test));
        }
    }
    if cells.is_empty() {
        return Err(Error::data("no feasible (ratio, seed) cells"));
    }
    let results: Vec<Result<Vec<ExperimentRecord>>> = cells
        .par_iter()
        .map(|(ratio, seed, train, test)| {
            run_cell(
                d,
                prior,
                methods,
                train,
                test,
                dataset_label,
                *ratio,
                *seed,
                derive_seed(rc.seed, "sweep-cell", &[ratio.to_bits(), *seed]),
                rc,
            )
        })
        .collect();
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

fn paired_synthetic<F: Scalar>(
    spec: &SyntheticSpec,
    replicates: usize,
    arm_a: Method,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    if replicates == 0 {
        return Err(Error::usage("replicates must be >= 1"));
    }
    spec.validate()?;
    let label = spec.label();
    let results: Vec<Result<Vec<ExperimentRecord>>> = (0..replicates as u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&rep| {
            let gen_spec = SyntheticSpec {
                seed: spec.seed + rep,
                ..*spec
            };
            let problem = generate_oracle_problem::<F>(&gen_spec)?;
            // 50-50 stratified split, identical for both arms
            let (train, test) =
                train_test_split(&problem.dataset, 0.5, 0.5, derive_seed(rep, "oracle-split", &[]))?;
            run_cell(
                &problem.dataset,
                &problem.prior,
                &[arm_a, Method::NoPrior],
                &train,
                &test,
                &label,
                0.5,
                rep,
                derive_seed(rc.seed, "oracle-rep", &[rep]),
                rc,
            )
        })
        .collect();
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

/// Oracle-prior simulation: the pipeline with the |signal| prior against
/// the same pipeline with a uniform prior, on freshly generated problems.
pub fn run_oracle_experiment<F: Scalar>(
    spec: &SyntheticSpec,
    replicates: usize,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    paired_synthetic::<F>(spec, replicates, Method::Statsformer, rc)
}

/// Adversarial control on synthetic problems: the order-reversed oracle
/// prior against the uniform prior.
pub fn run_adversarial_oracle<F: Scalar>(
    spec: &SyntheticSpec,
    replicates: usize,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    paired_synthetic::<F>(spec, replicates, Method::Adversarial, rc)
}

/// Adversarial control on a fixed dataset: paired 50-50 stratified splits,
/// inverted prior versus uniform.
pub fn run_adversarial_experiment<F: Scalar>(
    d: &Dataset<F>,
    prior: &FeaturePrior<F>,
    replicates: usize,
    dataset_label: &str,
    rc: &RunConfig,
) -> Result<Vec<ExperimentRecord>> {
    if replicates == 0 {
        return Err(Error::usage("replicates must be >= 1"));
    }
    let results: Vec<Result<Vec<ExperimentRecord>>> = (0..replicates as u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&rep| {
            let (train, test) =
                train_test_split(d, 0.5, 0.5, derive_seed(rep, "adversarial-split", &[]))?;
            if !split_is_feasible(d, &train, &test) {
                return Err(Error::data("adversarial split infeasible"));
            }
            run_cell(
                d,
                prior,
                &[Method::Adversarial, Method::NoPrior],
                &train,
                &test,
                dataset_label,
                0.5,
                rep,
                derive_seed(rc.seed, "adversarial-rep", &[rep]),
                rc,
            )
        })
        .collect();
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

/// Records CSV: `dataset,method,train_ratio,seed,metric,value`.
pub fn write_records_csv(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.as_ref().display())))?;
    w.write_record(["dataset", "method", "train_ratio", "seed", "metric", "value"])
        .map_err(|e| Error::data(e.to_string()))?;
    for r in records {
        w.write_record([
            r.dataset.as_str(),
            r.method.as_str(),
            &format!("{}", r.train_ratio),
            &format!("{}", r.seed),
            r.metric.as_str(),
            &format!("{}", r.value),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Summary CSV mirroring the records layout of the paired comparisons.
pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.as_ref().display())))?;
    w.write_record([
        "metric",
        "baseline",
        "method",
        "n_pairs",
        "mean_diff",
        "diff_ci_lo",
        "diff_ci_hi",
        "improvement_pct",
        "improvement_ci_lo",
        "improvement_ci_hi",
        "win_rate",
        "win_ci_lo",
        "win_ci_hi",
    ])
    .map_err(|e| Error::data(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.metric.as_str(),
            r.baseline.as_str(),
            r.method.as_str(),
            &format!("{}", r.n_pairs),
            &format!("{}", r.mean_diff),
            &format!("{}", r.diff_ci_lo),
            &format!("{}", r.diff_ci_hi),
            &format!("{}", r.improvement_pct),
            &format!("{}", r.improvement_ci_lo),
            &format!("{}", r.improvement_ci_hi),
            &format!("{}", r.win_rate),
            &format!("{}", r.win_ci_lo),
            &format!("{}", r.win_ci_hi),
        ])
        .map_err(|e| Error::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

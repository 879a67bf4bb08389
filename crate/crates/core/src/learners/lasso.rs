//! Penalty-weighted Lasso via cyclic coordinate descent with soft
//! thresholding. Classification heads are logistic fits solved by IRLS with
//! a weighted-least-squares inner loop; multiclass uses one-vs-rest heads.
#![allow(clippy::needless_range_loop)]

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{Targets, TaskKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stacking::folds::fold_plan;

const COEF_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;
const INNER_TOL: f64 = 1e-9;
const KKT_TOL: f64 = 1e-7;
const MAX_IRLS: usize = 200;
const N_LAMBDA: usize = 100;
const LAMBDA_MIN_RATIO: f64 = 1e-2;
const PROB_CLAMP: f64 = 1e-12;

/// One fitted linear head: regression, or a single logistic output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LassoHead<F: Scalar> {
    pub coefficients: Array1<F>,
    pub intercept: F,
    pub lambda: F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LassoModel<F: Scalar> {
    pub task: TaskKind,
    pub penalty_factors: Array1<F>,
    pub heads: Vec<LassoHead<F>>,
}

impl<F: Scalar> LassoModel<F> {
    pub fn lambdas(&self) -> Vec<f64> {
        self.heads.iter().map(|h| h.lambda.to_f()).collect()
    }

    /// Scores: regression value or per-head logit, one row per sample.
    pub fn predict(&self, x: ArrayView2<'_, F>) -> ndarray::Array2<F> {
        let mut out = ndarray::Array2::zeros((x.nrows(), self.heads.len()));
        for (h, head) in self.heads.iter().enumerate() {
            let scores = x.dot(&head.coefficients) + head.intercept;
            out.column_mut(h).assign(&scores);
        }
        out
    }

    pub fn n_features(&self) -> usize {
        self.heads[0].coefficients.len()
    }
}

/// Regularization rule: select by internal cross-validation, or reuse
/// previously selected values (one per head).
#[derive(Debug, Clone)]
pub enum LambdaChoice {
    CrossValidated { folds: usize, seed: u64 },
    Fixed(Vec<f64>),
}

fn soft_threshold<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

/// Weighted-least-squares Lasso solved in place by cyclic coordinate
/// descent. Minimizes
///   (1/2n) sum_i w_i (z_i - b0 - x_i beta)^2 + lambda sum_j pf_j |beta_j|
/// with an unpenalized intercept. Returns the number of sweeps used.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent<F: Scalar>(
    x: ArrayView2<'_, F>,
    z: &[F],
    obs_w: &[F],
    pf: &[F],
    lambda: F,
    beta: &mut Array1<F>,
    intercept: &mut F,
    tol: F,
) -> Result<usize> {
    let (n, p) = x.dim();
    let n_f = F::from_usize_(n);
    let w_total: F = obs_w.iter().copied().sum();
    // (1/n) sum_i w_i x_ij^2
    let mut col_sq = vec![F::zero(); p];
    for j in 0..p {
        let mut acc = F::zero();
        for i in 0..n {
            acc += obs_w[i] * x[[i, j]] * x[[i, j]];
        }
        col_sq[j] = acc / n_f;
    }
    // residual r_i = z_i - b0 - x_i beta
    let mut r: Vec<F> = (0..n)
        .map(|i| {
            let mut acc = z[i] - *intercept;
            for j in 0..p {
                if beta[j] != F::zero() {
                    acc -= x[[i, j]] * beta[j];
                }
            }
            acc
        })
        .collect();

    let mut active: Vec<bool> = beta.iter().map(|b| *b != F::zero()).collect();
    let mut sweeps = 0usize;
    let mut full_pass = true;
    loop {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::numeric(format!(
                "lasso coordinate descent did not converge within {MAX_SWEEPS} sweeps \
                 (lambda = {lambda}, p = {p}, n = {n})"
            )));
        }
        let mut max_delta = F::zero();
        for j in 0..p {
            if (!full_pass && !active[j]) || col_sq[j] == F::zero() {
                continue;
            }
            let old = beta[j];
            let mut dot = F::zero();
            for i in 0..n {
                dot += obs_w[i] * x[[i, j]] * r[i];
            }
            let num = dot / n_f + col_sq[j] * old;
            let new = soft_threshold(num, lambda * pf[j]) / col_sq[j];
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    r[i] -= x[[i, j]] * delta;
                }
                beta[j] = new;
                if new != F::zero() {
                    active[j] = true;
                }
                max_delta = max_delta.max(delta.abs());
            }
        }
        if w_total > F::zero() {
            let mut acc = F::zero();
            for i in 0..n {
                acc += obs_w[i] * r[i];
            }
            let shift = acc / w_total;
            if shift != F::zero() {
                *intercept += shift;
                for ri in r.iter_mut() {
                    *ri -= shift;
                }
                max_delta = max_delta.max(shift.abs());
            }
        }
        if max_delta <= tol {
            if full_pass {
                // a converged full sweep certifies optimality
                return Ok(sweeps);
            }
            full_pass = true;
        } else {
            full_pass = false;
        }
    }
}

/// Smallest lambda at which all coefficients are zero for the weighted
/// gaussian problem (intercept fit to the weighted mean).
fn lambda_max_gaussian<F: Scalar>(x: ArrayView2<'_, F>, z: &[F], obs_w: &[F], pf: &[F]) -> F {
    let (n, p) = x.dim();
    let n_f = F::from_usize_(n);
    let w_total: F = obs_w.iter().copied().sum();
    let mean: F = z
        .iter()
        .zip(obs_w)
        .map(|(&zi, &wi)| zi * wi)
        .sum::<F>()
        / w_total;
    let mut best = F::zero();
    for j in 0..p {
        let mut dot = F::zero();
        for i in 0..n {
            dot += obs_w[i] * x[[i, j]] * (z[i] - mean);
        }
        let g = (dot / n_f).abs() / pf[j];
        best = best.max(g);
    }
    best
}

fn lambda_grid<F: Scalar>(lambda_max: F) -> Vec<F> {
    let lmax = if lambda_max > F::zero() {
        lambda_max
    } else {
        F::from_f(1e-3)
    };
    (0..N_LAMBDA)
        .map(|k| lmax * F::from_f(LAMBDA_MIN_RATIO.powf(k as f64 / (N_LAMBDA - 1) as f64)))
        .collect()
}

/// Gaussian lasso solution path with warm starts, densest last.
fn gaussian_path<F: Scalar>(
    x: ArrayView2<'_, F>,
    y: &[F],
    pf: &[F],
    lambdas: &[F],
) -> Result<Vec<(Array1<F>, F)>> {
    let ones = vec![F::one(); y.len()];
    let mut beta = Array1::zeros(x.ncols());
    let mut intercept = F::zero();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        coordinate_descent(
            x,
            y,
            &ones,
            pf,
            lambda,
            &mut beta,
            &mut intercept,
            F::from_f(COEF_TOL),
        )?;
        out.push((beta.clone(), intercept));
    }
    Ok(out)
}

fn sigmoid<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

/// Logistic-lasso KKT residual using the exact loss gradient
/// g_j = (1/n) sum_i x_ij (p_i - y_i).
fn logistic_kkt_residual<F: Scalar>(
    x: ArrayView2<'_, F>,
    y01: &[F],
    pf: &[F],
    lambda: F,
    beta: &Array1<F>,
    intercept: F,
) -> F {
    let (n, p) = x.dim();
    let n_f = F::from_usize_(n);
    let probs: Vec<F> = (0..n)
        .map(|i| {
            let mut eta = intercept;
            for j in 0..p {
                if beta[j] != F::zero() {
                    eta += x[[i, j]] * beta[j];
                }
            }
            sigmoid(eta)
        })
        .collect();
    let mut worst = F::zero();
    let mut g0 = F::zero();
    for i in 0..n {
        g0 += probs[i] - y01[i];
    }
    worst = worst.max((g0 / n_f).abs());
    for j in 0..p {
        let mut g = F::zero();
        for i in 0..n {
            g += x[[i, j]] * (probs[i] - y01[i]);
        }
        g /= n_f;
        let resid = if beta[j] == F::zero() {
            (g.abs() - lambda * pf[j]).max(F::zero())
        } else {
            (g + lambda * pf[j] * beta[j].signum()).abs()
        };
        worst = worst.max(resid);
    }
    worst
}

/// IRLS with a weighted coordinate-descent inner solve; iterates until the
/// exact logistic KKT residual is met.
fn logistic_fit<F: Scalar>(
    x: ArrayView2<'_, F>,
    y01: &[F],
    pf: &[F],
    lambda: F,
    beta: &mut Array1<F>,
    intercept: &mut F,
) -> Result<()> {
    let (n, p) = x.dim();
    let w_floor = F::from_f(1e-5);
    for _ in 0..MAX_IRLS {
        let mut wls_w = vec![F::zero(); n];
        let mut wls_z = vec![F::zero(); n];
        for i in 0..n {
            let mut eta = *intercept;
            for j in 0..p {
                if beta[j] != F::zero() {
                    eta += x[[i, j]] * beta[j];
                }
            }
            let prob = sigmoid(eta);
            let w = (prob * (F::one() - prob)).max(w_floor);
            wls_w[i] = w;
            wls_z[i] = eta + (y01[i] - prob) / w;
        }
        coordinate_descent(
            x,
            &wls_z,
            &wls_w,
            pf,
            lambda,
            beta,
            intercept,
            F::from_f(INNER_TOL),
        )?;
        if logistic_kkt_residual(x, y01, pf, lambda, beta, *intercept) <= F::from_f(KKT_TOL) {
            return Ok(());
        }
    }
    // accept whatever IRLS reached if the working response stalled but the
    // KKT residual is within the documented tolerance
    if logistic_kkt_residual(x, y01, pf, lambda, beta, *intercept) <= F::from_f(1e-6) {
        return Ok(());
    }
    Err(Error::numeric(
        "logistic lasso IRLS did not reach the KKT tolerance".to_string(),
    ))
}

fn logistic_path<F: Scalar>(
    x: ArrayView2<'_, F>,
    y01: &[F],
    pf: &[F],
    lambdas: &[F],
) -> Result<Vec<(Array1<F>, F)>> {
    let mut beta = Array1::zeros(x.ncols());
    let ybar: F = y01.iter().copied().sum::<F>() / F::from_usize_(y01.len());
    let clamped = ybar
        .max(F::from_f(PROB_CLAMP))
        .min(F::one() - F::from_f(PROB_CLAMP));
    let mut intercept = (clamped / (F::one() - clamped)).ln();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        logistic_fit(x, y01, pf, lambda, &mut beta, &mut intercept)?;
        out.push((beta.clone(), intercept));
    }
    Ok(out)
}

fn deviance<F: Scalar>(p: F, y: F) -> F {
    let p = p
        .max(F::from_f(PROB_CLAMP))
        .min(F::one() - F::from_f(PROB_CLAMP));
    -(F::from_f(2.0)) * (y * p.ln() + (F::one() - y) * (F::one() - p).ln())
}

/// Pick a lambda index by K-fold CV over the shared path grid. Returns the
/// index of the smallest mean validation loss, preferring stronger
/// regularization on ties.
fn select_lambda_cv<F: Scalar>(
    x: ArrayView2<'_, F>,
    y01_or_real: &[F],
    classification: bool,
    pf: &[F],
    lambdas: &[F],
    folds: usize,
    seed: u64,
) -> Result<usize> {
    let n = x.nrows();
    let strat: Option<Vec<usize>> = if classification {
        Some(
            y01_or_real
                .iter()
                .map(|&v| if v > F::from_f(0.5) { 1usize } else { 0 })
                .collect(),
        )
    } else {
        None
    };
    // fall back to an unstratified plan when a class is too rare
    let plan = match fold_plan(strat.as_deref(), n, folds.min(n), seed) {
        Ok(plan) => plan,
        Err(_) => fold_plan(None, n, folds.min(n), seed)?,
    };
    let mut losses = vec![F::zero(); lambdas.len()];
    let mut counted = vec![0usize; lambdas.len()];
    for fold in 0..plan.k {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let x_train = x.select(ndarray::Axis(0), &train);
        let y_train: Vec<F> = train.iter().map(|&i| y01_or_real[i]).collect();
        let path = if classification {
            logistic_path(x_train.view(), &y_train, pf, lambdas)?
        } else {
            gaussian_path(x_train.view(), &y_train, pf, lambdas)?
        };
        for (li, (beta, intercept)) in path.iter().enumerate() {
            let mut loss = F::zero();
            for &i in &test {
                let mut eta = *intercept;
                for j in 0..x.ncols() {
                    if beta[j] != F::zero() {
                        eta += x[[i, j]] * beta[j];
                    }
                }
                if classification {
                    loss += deviance(sigmoid(eta), y01_or_real[i]);
                } else {
                    let d = y01_or_real[i] - eta;
                    loss += d * d;
                }
            }
            losses[li] += loss;
            counted[li] += test.len();
        }
    }
    let mut best = 0usize;
    let mut best_loss = F::infinity();
    for (li, &loss) in losses.iter().enumerate() {
        let mean = loss / F::from_usize_(counted[li].max(1));
        if mean < best_loss {
            best_loss = mean;
            best = li;
        }
    }
    Ok(best)
}

fn fit_head<F: Scalar>(
    x: ArrayView2<'_, F>,
    y: &[F],
    classification: bool,
    pf: &[F],
    lambda: &LambdaChoice,
    head_idx: usize,
) -> Result<LassoHead<F>> {
    let lambda_value = match lambda {
        LambdaChoice::Fixed(values) => F::from_f(values[head_idx]),
        LambdaChoice::CrossValidated { folds, seed } => {
            let ones = vec![F::one(); y.len()];
            let lmax = if classification {
                // gradient of the logistic loss at the intercept-only fit
                let ybar: F = y.iter().copied().sum::<F>() / F::from_usize_(y.len());
                let resid: Vec<F> = y.iter().map(|&v| v - ybar).collect();
                lambda_max_gaussian(x, &resid, &ones, pf)
            } else {
                lambda_max_gaussian(x, y, &ones, pf)
            };
            let grid = lambda_grid(lmax);
            let idx = select_lambda_cv(
                x,
                y,
                classification,
                pf,
                &grid,
                *folds,
                seed.wrapping_add(head_idx as u64),
            )?;
            grid[idx]
        }
    };

    let mut beta = Array1::zeros(x.ncols());
    let mut intercept = F::zero();
    if classification {
        let ybar: F = y.iter().copied().sum::<F>() / F::from_usize_(y.len());
        let clamped = ybar
            .max(F::from_f(PROB_CLAMP))
            .min(F::one() - F::from_f(PROB_CLAMP));
        intercept = (clamped / (F::one() - clamped)).ln();
        logistic_fit(x, y, pf, lambda_value, &mut beta, &mut intercept)?;
    } else {
        let ones = vec![F::one(); y.len()];
        coordinate_descent(
            x,
            y,
            &ones,
            pf,
            lambda_value,
            &mut beta,
            &mut intercept,
            F::from_f(COEF_TOL),
        )?;
    }
    Ok(LassoHead {
        coefficients: beta,
        intercept,
        lambda: lambda_value,
    })
}

/// Fit the penalty-weighted Lasso. `penalty_factors` must be positive; the
/// regularization strength is chosen by internal cross-validation unless a
/// frozen value is supplied.
pub fn fit_lasso<F: Scalar>(
    x: ArrayView2<'_, F>,
    targets: &Targets<F>,
    penalty_factors: &[F],
    task: TaskKind,
    lambda: &LambdaChoice,
) -> Result<LassoModel<F>> {
    if penalty_factors.len() != x.ncols() {
        return Err(Error::usage("penalty factor length must match columns"));
    }
    if penalty_factors.iter().any(|&w| w <= F::zero() || !w.is_finite()) {
        return Err(Error::usage("penalty factors must be positive"));
    }
    let heads = match (task, targets) {
        (TaskKind::Regression, Targets::Real(ys)) => {
            vec![fit_head(x, ys, false, penalty_factors, lambda, 0)?]
        }
        (TaskKind::Binary, Targets::Classes(ys)) => {
            let y01: Vec<F> = ys.iter().map(|&c| F::from_usize_(c)).collect();
            vec![fit_head(x, &y01, true, penalty_factors, lambda, 0)?]
        }
        (TaskKind::Multiclass(c), Targets::Classes(ys)) => {
            let mut heads = Vec::with_capacity(c);
            for class in 0..c {
                let y01: Vec<F> = ys
                    .iter()
                    .map(|&v| if v == class { F::one() } else { F::zero() })
                    .collect();
                heads.push(fit_head(x, &y01, true, penalty_factors, lambda, class)?);
            }
            heads
        }
        _ => return Err(Error::usage("targets do not match task kind")),
    };
    Ok(LassoModel {
        task,
        penalty_factors: Array1::from_vec(penalty_factors.to_vec()),
        heads,
    })
}

/// Exact-gradient KKT residual for a fitted gaussian head; used by the
/// verification suites.
pub fn gaussian_kkt_residual<F: Scalar>(
    x: ArrayView2<'_, F>,
    y: &[F],
    pf: &[F],
    head: &LassoHead<F>,
) -> F {
    let (n, p) = x.dim();
    let n_f = F::from_usize_(n);
    let r: Vec<F> = (0..n)
        .map(|i| {
            let mut acc = y[i] - head.intercept;
            for j in 0..p {
                if head.coefficients[j] != F::zero() {
                    acc -= x[[i, j]] * head.coefficients[j];
                }
            }
            acc
        })
        .collect();
    let mut worst = F::zero();
    let mean_r: F = r.iter().copied().sum::<F>() / n_f;
    worst = worst.max(mean_r.abs());
    for j in 0..p {
        let mut g = F::zero();
        for i in 0..n {
            g -= x[[i, j]] * r[i];
        }
        g /= n_f;
        let resid = if head.coefficients[j] == F::zero() {
            (g.abs() - head.lambda * pf[j]).max(F::zero())
        } else {
            (g + head.lambda * pf[j] * head.coefficients[j].signum()).abs()
        };
        worst = worst.max(resid);
    }
    worst
}

/// Exact-gradient KKT residual for a fitted logistic head.
pub fn logistic_head_kkt_residual<F: Scalar>(
    x: ArrayView2<'_, F>,
    y01: &[F],
    pf: &[F],
    head: &LassoHead<F>,
) -> F {
    logistic_kkt_residual(x, y01, pf, head.lambda, &head.coefficients, head.intercept)
}

//! Nonnegative meta-learner over out-of-fold prediction columns.
//!
//! Regression: min over pi >= 0 and a free intercept of
//!   (1/2n) ||y - pi0 - Z pi||^2 + reg ||pi||^2,
//! solved exactly by a Lawson-Hanson active-set method on the
//! ridge-augmented least-squares system. Classification: mean logistic loss
//! of sigma(pi0 + Z pi) + reg ||pi||^2 over pi >= 0, solved by projected
//! Newton with an Armijo line search. The regularization strength is chosen
//! from a grid by K-fold cross-validation on the OOF matrix itself.
#![allow(clippy::needless_range_loop)]

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stacking::folds::FoldPlan;

const ACTIVE_SET_TOL: f64 = 1e-11;
const LOGISTIC_PG_TOL: f64 = 1e-8;
const MAX_NEWTON_ITER: usize = 500;

/// Nonnegative aggregation weights with a free intercept.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MetaWeights<F: Scalar> {
    pub pi: Vec<F>,
    pub intercept: F,
    pub reg: f64,
}

impl<F: Scalar> MetaWeights<F> {
    pub fn score_row(&self, z_row: &[F]) -> F {
        let mut acc = self.intercept;
        for (p, z) in self.pi.iter().zip(z_row) {
            acc += *p * *z;
        }
        acc
    }
}

/// Symmetric positive-definite solve via Cholesky; tiny systems only.
fn solve_spd<F: Scalar>(a: &[Vec<F>], b: &[F]) -> Result<Vec<F>> {
    let n = b.len();
    let mut l = vec![vec![F::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= F::zero() {
                    return Err(Error::numeric("meta solve: matrix not positive definite"));
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = vec![F::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Ok(x)
}

/// Centered quadratic data for the regression meta-problem.
struct CenteredQuadratic<F: Scalar> {
    /// G = Z~^T Z~ / n
    gram: Vec<Vec<F>>,
    /// c = Z~^T y~ / n
    lin: Vec<F>,
    col_means: Vec<F>,
    y_mean: F,
}

fn center<F: Scalar>(z: ArrayView2<'_, F>, y: &[F]) -> CenteredQuadratic<F> {
    let (n, l) = z.dim();
    let n_f = F::from_usize_(n);
    let col_means: Vec<F> = z
        .sum_axis(Axis(0))
        .iter()
        .map(|&s| s / n_f)
        .collect();
    let y_mean: F = y.iter().copied().sum::<F>() / n_f;
    let mut gram = vec![vec![F::zero(); l]; l];
    let mut lin = vec![F::zero(); l];
    for a in 0..l {
        for b in a..l {
            let mut acc = F::zero();
            for i in 0..n {
                acc += (z[[i, a]] - col_means[a]) * (z[[i, b]] - col_means[b]);
            }
            gram[a][b] = acc / n_f;
            gram[b][a] = gram[a][b];
        }
        let mut acc = F::zero();
        for i in 0..n {
            acc += (z[[i, a]] - col_means[a]) * (y[i] - y_mean);
        }
        lin[a] = acc / n_f;
    }
    CenteredQuadratic {
        gram,
        lin,
        col_means,
        y_mean,
    }
}

/// Lawson-Hanson NNLS on the normal equations (G + 2 reg I) pi = c with
/// pi >= 0. Exact stationarity on the passive set.
fn nnls_active_set<F: Scalar>(q: &CenteredQuadratic<F>, reg: F) -> Result<Vec<F>> {
    let l = q.lin.len();
    let two_reg = F::from_f(2.0) * reg;
    let mut pi = vec![F::zero(); l];
    let mut passive = vec![false; l];
    let scale = q
        .lin
        .iter()
        .map(|c| c.abs())
        .fold(F::one(), F::max);
    let tol = F::from_f(ACTIVE_SET_TOL) * scale;

    let gradient = |pi: &[F]| -> Vec<F> {
        (0..l)
            .map(|a| {
                let mut g = -q.lin[a] + two_reg * pi[a];
                for b in 0..l {
                    if pi[b] != F::zero() {
                        g += q.gram[a][b] * pi[b];
                    }
                }
                g
            })
            .collect()
    };

    for _outer in 0..(4 * l.max(1) + 16) {
        let g = gradient(&pi);
        // most negative gradient among the active (zero) coordinates
        let mut candidate: Option<(usize, F)> = None;
        for a in 0..l {
            if !passive[a] && -g[a] > tol
                && candidate.is_none_or(|(_, best)| -g[a] > best) {
                    candidate = Some((a, -g[a]));
                }
        }
        let Some((enter, _)) = candidate else {
            return Ok(pi);
        };
        passive[enter] = true;

        loop {
            // unconstrained solve on the passive set
            let idx: Vec<usize> = (0..l).filter(|&a| passive[a]).collect();
            let m = idx.len();
            let mut a_mat = vec![vec![F::zero(); m]; m];
            let mut b_vec = vec![F::zero(); m];
            for (r, &ar) in idx.iter().enumerate() {
                for (c, &ac) in idx.iter().enumerate() {
                    a_mat[r][c] = q.gram[ar][ac];
                    if r == c {
                        a_mat[r][c] += two_reg;
                    }
                }
                b_vec[r] = q.lin[ar];
            }
            let sol = solve_spd(&a_mat, &b_vec)?;
            if sol.iter().all(|&v| v > F::zero()) {
                for a in 0..l {
                    pi[a] = F::zero();
                }
                for (r, &ar) in idx.iter().enumerate() {
                    pi[ar] = sol[r];
                }
                break;
            }
            // shrink toward the boundary and drop the first blocking index
            let mut step = F::one();
            for (r, &ar) in idx.iter().enumerate() {
                if sol[r] <= F::zero() {
                    let denom = pi[ar] - sol[r];
                    if denom > F::zero() {
                        step = step.min(pi[ar] / denom);
                    } else {
                        step = F::zero();
                    }
                }
            }
            for (r, &ar) in idx.iter().enumerate() {
                pi[ar] = pi[ar] + step * (sol[r] - pi[ar]);
            }
            let mut dropped = false;
            for &ar in &idx {
                if passive[ar] && pi[ar] <= tol.max(F::from_f(1e-300)) {
                    pi[ar] = F::zero();
                    passive[ar] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // numerical stalemate: zero the smallest passive coordinate
                if let Some(&ar) = idx
                    .iter()
                    .min_by(|&&a, &&b| pi[a].partial_cmp(&pi[b]).unwrap())
                {
                    pi[ar] = F::zero();
                    passive[ar] = false;
                }
            }
        }
    }
    Err(Error::numeric("meta regression active set did not converge"))
}

/// Objective of the regression meta-problem at given weights.
pub fn meta_regression_objective<F: Scalar>(
    z: ArrayView2<'_, F>,
    y: &[F],
    pi: &[F],
    intercept: F,
    reg: f64,
) -> F {
    let (n, _) = z.dim();
    let n_f = F::from_usize_(n);
    let mut sse = F::zero();
    for i in 0..n {
        let mut pred = intercept;
        for (l, p) in pi.iter().enumerate() {
            pred += *p * z[[i, l]];
        }
        let d = y[i] - pred;
        sse += d * d;
    }
    let ridge: F = pi.iter().map(|p| *p * *p).sum::<F>() * F::from_f(reg);
    sse / (F::from_f(2.0) * n_f) + ridge
}

fn fit_regression_at<F: Scalar>(z: ArrayView2<'_, F>, y: &[F], reg: f64) -> Result<MetaWeights<F>> {
    let q = center(z, y);
    let pi = nnls_active_set(&q, F::from_f(reg))?;
    let mut intercept = q.y_mean;
    for (l, p) in pi.iter().enumerate() {
        intercept -= *p * q.col_means[l];
    }
    Ok(MetaWeights { pi, intercept, reg })
}

/// Nonnegative least squares meta-fit with ridge strength selected from
/// `reg_grid` by K-fold cross-validation over the rows of `Z`.
pub fn fit_meta_regression<F: Scalar>(
    z: ArrayView2<'_, F>,
    y: &[F],
    reg_grid: &[f64],
    plan: &FoldPlan,
) -> Result<MetaWeights<F>> {
    if z.nrows() != y.len() {
        return Err(Error::data("meta: Z rows must match target length"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("meta: non-finite OOF entry"));
    }
    let reg = if reg_grid.len() == 1 {
        reg_grid[0]
    } else {
        let mut best = (f64::INFINITY, reg_grid[0]);
        for &reg in reg_grid {
            let mut sse = F::zero();
            let mut count = 0usize;
            for fold in 0..plan.k {
                let train = plan.train_indices(fold);
                let test = plan.test_indices(fold);
                let z_train = z.select(Axis(0), &train);
                let y_train: Vec<F> = train.iter().map(|&i| y[i]).collect();
                let w = fit_regression_at(z_train.view(), &y_train, reg)?;
                for &i in &test {
                    let row: Vec<F> = (0..z.ncols()).map(|l| z[[i, l]]).collect();
                    let d = y[i] - w.score_row(&row);
                    sse += d * d;
                }
                count += test.len();
            }
            let mean = sse.to_f() / count.max(1) as f64;
            if mean < best.0 {
                best = (mean, reg);
            }
        }
        best.1
    };
    fit_regression_at(z, y, reg)
}

fn sigmoid<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

/// Mean logistic loss plus ridge at given weights.
pub fn meta_logistic_objective<F: Scalar>(
    z: ArrayView2<'_, F>,
    targets01: &[F],
    pi: &[F],
    intercept: F,
    reg: f64,
) -> F {
    let n = z.nrows();
    let n_f = F::from_usize_(n);
    let mut acc = F::zero();
    for i in 0..n {
        let mut m = intercept;
        for (l, p) in pi.iter().enumerate() {
            m += *p * z[[i, l]];
        }
        // log(1 + e^m) - y m, stabilized
        let log1p = if m > F::zero() {
            m + (F::one() + (-m).exp()).ln()
        } else {
            (F::one() + m.exp()).ln()
        };
        acc += log1p - targets01[i] * m;
    }
    let ridge: F = pi.iter().map(|p| *p * *p).sum::<F>() * F::from_f(reg);
    acc / n_f + ridge
}

/// Projected-gradient norm of the constrained logistic problem; zero at a
/// KKT point.
pub fn logistic_projected_gradient_norm<F: Scalar>(
    z: ArrayView2<'_, F>,
    targets01: &[F],
    pi: &[F],
    intercept: F,
    reg: f64,
) -> F {
    let (n, l) = z.dim();
    let n_f = F::from_usize_(n);
    let mut resid = vec![F::zero(); n];
    for i in 0..n {
        let mut m = intercept;
        for (c, p) in pi.iter().enumerate() {
            m += *p * z[[i, c]];
        }
        resid[i] = sigmoid(m) - targets01[i];
    }
    let mut worst: F = (resid.iter().copied().sum::<F>() / n_f).abs();
    for c in 0..l {
        let mut g = F::zero();
        for i in 0..n {
            g += z[[i, c]] * resid[i];
        }
        g = g / n_f + F::from_f(2.0 * reg) * pi[c];
        let pg = if pi[c] > F::zero() { g.abs() } else { (-g).max(F::zero()) };
        worst = worst.max(pg);
    }
    worst
}

fn fit_logistic_at<F: Scalar>(
    z: ArrayView2<'_, F>,
    targets01: &[F],
    reg: f64,
) -> Result<MetaWeights<F>> {
    let (n, l) = z.dim();
    let n_f = F::from_usize_(n);
    let two_reg = F::from_f(2.0 * reg);
    let mut pi = vec![F::zero(); l];
    // intercept starts at the log-odds of prevalence
    let ybar: F = targets01.iter().copied().sum::<F>() / n_f;
    let clamped = ybar.max(F::from_f(1e-12)).min(F::one() - F::from_f(1e-12));
    let mut intercept = (clamped / (F::one() - clamped)).ln();

    let mut objective = meta_logistic_objective(z, targets01, &pi, intercept, reg);
    for _iter in 0..MAX_NEWTON_ITER {
        // gradient and curvature
        let mut resid = vec![F::zero(); n];
        let mut weight = vec![F::zero(); n];
        for i in 0..n {
            let mut m = intercept;
            for (c, p) in pi.iter().enumerate() {
                m += *p * z[[i, c]];
            }
            let prob = sigmoid(m);
            resid[i] = prob - targets01[i];
            weight[i] = (prob * (F::one() - prob)).max(F::from_f(1e-10));
        }
        let mut grad = vec![F::zero(); l];
        for c in 0..l {
            let mut g = F::zero();
            for i in 0..n {
                g += z[[i, c]] * resid[i];
            }
            grad[c] = g / n_f + two_reg * pi[c];
        }
        let grad0: F = resid.iter().copied().sum::<F>() / n_f;

        let pg_norm = {
            let mut worst = grad0.abs();
            for c in 0..l {
                let pg = if pi[c] > F::zero() {
                    grad[c].abs()
                } else {
                    (-grad[c]).max(F::zero())
                };
                worst = worst.max(pg);
            }
            worst
        };
        if pg_norm <= F::from_f(LOGISTIC_PG_TOL) {
            return Ok(MetaWeights { pi, intercept, reg });
        }

        // free set: strictly positive coordinates plus descent-direction
        // zeros; the intercept is always free
        let free: Vec<usize> = (0..l)
            .filter(|&c| pi[c] > F::zero() || grad[c] < F::zero())
            .collect();
        let m = free.len() + 1;
        let mut h = vec![vec![F::zero(); m]; m];
        let mut rhs = vec![F::zero(); m];
        // intercept block
        let mut wsum = F::zero();
        for i in 0..n {
            wsum += weight[i];
        }
        h[0][0] = wsum / n_f + F::from_f(1e-12);
        rhs[0] = -grad0;
        for (r, &cr) in free.iter().enumerate() {
            let mut hz = F::zero();
            for i in 0..n {
                hz += weight[i] * z[[i, cr]];
            }
            h[r + 1][0] = hz / n_f;
            h[0][r + 1] = h[r + 1][0];
            for (c, &cc) in free.iter().enumerate().skip(r) {
                let mut acc = F::zero();
                for i in 0..n {
                    acc += weight[i] * z[[i, cr]] * z[[i, cc]];
                }
                let mut v = acc / n_f;
                if cr == cc {
                    v += two_reg;
                }
                h[r + 1][c + 1] = v;
                h[c + 1][r + 1] = v;
            }
            rhs[r + 1] = -grad[cr];
        }
        let step = solve_spd(&h, &rhs)?;

        // Armijo backtracking with projection onto pi >= 0
        let mut t = F::one();
        let mut accepted = false;
        for _ in 0..60 {
            let new_intercept = intercept + t * step[0];
            let mut new_pi = pi.clone();
            for (r, &cr) in free.iter().enumerate() {
                new_pi[cr] = (pi[cr] + t * step[r + 1]).max(F::zero());
            }
            let new_obj = meta_logistic_objective(z, targets01, &new_pi, new_intercept, reg);
            if new_obj <= objective - F::from_f(1e-12) || new_obj < objective {
                pi = new_pi;
                intercept = new_intercept;
                objective = new_obj;
                accepted = true;
                break;
            }
            t /= F::from_f(2.0);
        }
        if !accepted {
            // no descent progress left; accept if within the KKT tolerance
            if pg_norm <= F::from_f(1e-6) {
                return Ok(MetaWeights { pi, intercept, reg });
            }
            return Err(Error::numeric(
                "meta logistic line search stalled before reaching the KKT tolerance",
            ));
        }
    }
    let pg = logistic_projected_gradient_norm(z, targets01, &pi, intercept, reg);
    if pg <= F::from_f(1e-6) {
        return Ok(MetaWeights { pi, intercept, reg });
    }
    Err(Error::numeric(
        "meta logistic Newton did not reach the KKT tolerance",
    ))
}

/// Nonnegative logistic meta-fit for one class-indicator target, with the
/// ridge strength selected by K-fold CV. Single-class CV folds are skipped
/// with a warning.
fn fit_logistic_cv<F: Scalar>(
    z: ArrayView2<'_, F>,
    targets01: &[F],
    reg_grid: &[f64],
    plan: &FoldPlan,
) -> Result<MetaWeights<F>> {
    let reg = if reg_grid.len() == 1 {
        reg_grid[0]
    } else {
        let mut best = (f64::INFINITY, reg_grid[0]);
        for &reg in reg_grid {
            let mut loss = F::zero();
            let mut count = 0usize;
            for fold in 0..plan.k {
                let train = plan.train_indices(fold);
                let test = plan.test_indices(fold);
                let y_train: Vec<F> = train.iter().map(|&i| targets01[i]).collect();
                let positives = y_train.iter().filter(|&&v| v > F::from_f(0.5)).count();
                if positives == 0 || positives == y_train.len() {
                    log::warn!("meta CV: skipping single-class fold {fold}");
                    continue;
                }
                let z_train = z.select(Axis(0), &train);
                let w = fit_logistic_at(z_train.view(), &y_train, reg)?;
                for &i in &test {
                    let row: Vec<F> = (0..z.ncols()).map(|l| z[[i, l]]).collect();
                    let m = w.score_row(&row);
                    let log1p = if m > F::zero() {
                        m + (F::one() + (-m).exp()).ln()
                    } else {
                        (F::one() + m.exp()).ln()
                    };
                    loss += log1p - targets01[i] * m;
                }
                count += test.len();
            }
            if count == 0 {
                continue;
            }
            let mean = loss.to_f() / count as f64;
            if mean < best.0 {
                best = (mean, reg);
            }
        }
        best.1
    };
    fit_logistic_at(z, targets01, reg)
}

/// Per-class one-vs-rest nonnegative logistic meta-learner. `z_slices`
/// holds one OOF logit matrix per class for multiclass, or a single matrix
/// for binary. Returns one weight vector per slice.
pub fn fit_meta_classification<F: Scalar>(
    z_slices: &[Array2<F>],
    y_classes: &[usize],
    reg_grid: &[f64],
    plan: &FoldPlan,
) -> Result<Vec<MetaWeights<F>>> {
    if z_slices.is_empty() {
        return Err(Error::data("meta: no OOF slices"));
    }
    let mut out = Vec::with_capacity(z_slices.len());
    for (class, slice) in z_slices.iter().enumerate() {
        if slice.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("meta: non-finite OOF entry"));
        }
        let positive_class = if z_slices.len() == 1 { 1 } else { class };
        let targets01: Vec<F> = y_classes
            .iter()
            .map(|&y| if y == positive_class { F::one() } else { F::zero() })
            .collect();
        out.push(fit_logistic_cv(slice.view(), &targets01, reg_grid, plan)?);
    }
    Ok(out)
}

/// KKT diagnostics for the regression meta-problem: returns the maximum
/// violation (gradient below -tol at a zero coordinate, or nonzero gradient
/// at a positive coordinate).
pub fn regression_kkt_residual<F: Scalar>(
    z: ArrayView2<'_, F>,
    y: &[F],
    w: &MetaWeights<F>,
) -> F {
    let (n, l) = z.dim();
    let n_f = F::from_usize_(n);
    let mut resid = vec![F::zero(); n];
    for i in 0..n {
        let mut pred = w.intercept;
        for (c, p) in w.pi.iter().enumerate() {
            pred += *p * z[[i, c]];
        }
        resid[i] = y[i] - pred;
    }
    let mut worst: F = (resid.iter().copied().sum::<F>() / n_f).abs();
    for c in 0..l {
        let mut g = F::zero();
        for i in 0..n {
            g -= z[[i, c]] * resid[i];
        }
        g = g / n_f + F::from_f(2.0 * w.reg) * w.pi[c];
        let v = if w.pi[c] > F::zero() { g.abs() } else { (-g).max(F::zero()) };
        worst = worst.max(v);
    }
    worst
}

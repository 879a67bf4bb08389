//! RBF-kernel SVM with anisotropic feature scaling, solved in the dual by
//! maximal-violating-pair SMO. Classification is C-SVC; regression is
//! epsilon-insensitive SVR expressed in the doubled variable space so both
//! share the same working-set core. Multiclass is one-vs-rest.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{Targets, TaskKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_SVR_EPSILON: f64 = 0.1;
const KKT_TOL: f64 = 1e-3;
const MAX_ITER: usize = 2_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaChoice {
    Auto,
    Fixed(f64),
}

/// One binary (or regression) dual solution over the scaled inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SvmHead<F: Scalar> {
    /// support vectors, already feature-scaled
    pub support_vectors: Array2<F>,
    /// alpha_i y_i for classification, beta_i for regression
    pub dual_coefficients: Vec<F>,
    pub bias: F,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SvmModel<F: Scalar> {
    pub task: TaskKind,
    pub gamma: F,
    pub c: F,
    pub scales: Array1<F>,
    pub heads: Vec<SvmHead<F>>,
}

impl<F: Scalar> SvmModel<F> {
    pub fn predict(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let scaled = scale_columns(x, &self.scales);
        let mut out = Array2::zeros((x.nrows(), self.heads.len()));
        for (h, head) in self.heads.iter().enumerate() {
            for i in 0..scaled.nrows() {
                let mut acc = head.bias;
                for (s, coef) in head.dual_coefficients.iter().enumerate() {
                    let k = rbf(
                        scaled.row(i).as_slice().unwrap(),
                        head.support_vectors.row(s).as_slice().unwrap(),
                        self.gamma,
                    );
                    acc += *coef * k;
                }
                out[[i, h]] = acc;
            }
        }
        out
    }
}

fn scale_columns<F: Scalar>(x: ArrayView2<'_, F>, scales: &Array1<F>) -> Array2<F> {
    let mut out = x.to_owned();
    for j in 0..out.ncols() {
        let s = scales[j];
        for v in out.column_mut(j) {
            *v *= s;
        }
    }
    out
}

fn rbf<F: Scalar>(a: &[F], b: &[F], gamma: F) -> F {
    let mut d = F::zero();
    for (ai, bi) in a.iter().zip(b.iter()) {
        let diff = *ai - *bi;
        d += diff * diff;
    }
    (-gamma * d).exp()
}

/// Result of the shared SMO core.
struct SmoSolution<F: Scalar> {
    alpha: Vec<F>,
    bias: F,
    #[allow(dead_code)]
    iterations: usize,
}

/// Solves min_alpha (1/2) a^T Q a + p^T a with Q_st = y_s y_t K(s, t),
/// subject to y^T a = 0 and 0 <= a_i <= C, by maximal-violating-pair
/// selection. `kernel(s, t)` returns K between the underlying points of
/// variables s and t.
fn smo<F: Scalar>(
    y: &[F],
    p: &[F],
    c: F,
    kernel: &dyn Fn(usize, usize) -> F,
    tol: F,
) -> Result<SmoSolution<F>> {
    let m = y.len();
    let mut alpha = vec![F::zero(); m];
    // gradient of the dual objective: Q alpha + p = p at alpha = 0
    let mut grad = p.to_vec();
    let mut iterations = 0usize;
    loop {
        // working-set selection
        let mut i_up: Option<(usize, F)> = None;
        let mut i_low: Option<(usize, F)> = None;
        for t in 0..m {
            let v = -y[t] * grad[t];
            let positive = y[t] > F::zero();
            let in_up = (positive && alpha[t] < c) || (!positive && alpha[t] > F::zero());
            let in_low = (positive && alpha[t] > F::zero()) || (!positive && alpha[t] < c);
            if in_up && i_up.is_none_or(|(_, best)| v > best) {
                i_up = Some((t, v));
            }
            if in_low && i_low.is_none_or(|(_, best)| v < best) {
                i_low = Some((t, v));
            }
        }
        let (i, m_up) = i_up.ok_or_else(|| Error::numeric("svm: empty I_up set"))?;
        let (j, m_low) = i_low.ok_or_else(|| Error::numeric("svm: empty I_low set"))?;
        if m_up - m_low <= tol {
            // bias: prefer free variables, fall back to the violation middle
            let mut free_sum = F::zero();
            let mut free_count = 0usize;
            for t in 0..m {
                if alpha[t] > F::zero() && alpha[t] < c {
                    free_sum += -y[t] * grad[t];
                    free_count += 1;
                }
            }
            let bias = if free_count > 0 {
                free_sum / F::from_usize_(free_count)
            } else {
                (m_up + m_low) / F::from_f(2.0)
            };
            return Ok(SmoSolution {
                alpha,
                bias,
                iterations,
            });
        }
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::numeric(format!(
                "svm SMO did not converge within {MAX_ITER} iterations"
            )));
        }

        // two-variable analytic step along the feasible direction
        let quad = kernel(i, i) + kernel(j, j) - F::from_f(2.0) * kernel(i, j);
        let quad = quad.max(F::from_f(TAU));
        let mut step = (m_up - m_low) / quad;
        // box limits: alpha_i += y_i step, alpha_j -= y_j step
        let lim_i = if y[i] > F::zero() { c - alpha[i] } else { alpha[i] };
        let lim_j = if y[j] > F::zero() { alpha[j] } else { c - alpha[j] };
        step = step.min(lim_i).min(lim_j);
        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        // exact clamp against drift
        alpha[i] = alpha[i].max(F::zero()).min(c);
        alpha[j] = alpha[j].max(F::zero()).min(c);
        for t in 0..m {
            grad[t] += y[t] * step * (kernel(t, i) - kernel(t, j));
        }
    }
}

/// Variance of all entries; the `auto` gamma is 1 / (p * var).
fn auto_gamma<F: Scalar>(x: ArrayView2<'_, F>) -> F {
    let n = x.len();
    let n_f = F::from_usize_(n);
    let mean: F = x.iter().copied().sum::<F>() / n_f;
    let var: F = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n_f;
    let p = F::from_usize_(x.ncols());
    if var > F::zero() {
        F::one() / (p * var)
    } else {
        F::one() / p
    }
}

fn gather_support<F: Scalar>(
    scaled: &Array2<F>,
    signed_coefs: &[F],
) -> (Array2<F>, Vec<F>) {
    let keep: Vec<usize> = signed_coefs
        .iter()
        .enumerate()
        .filter(|&(_, &a)| a != F::zero())
        .map(|(i, _)| i)
        .collect();
    let sv = scaled.select(ndarray::Axis(0), &keep);
    let coefs = keep.iter().map(|&i| signed_coefs[i]).collect();
    (sv, coefs)
}

fn fit_binary_head<F: Scalar>(
    scaled: &Array2<F>,
    labels: &[F], // +-1
    c: F,
    gamma: F,
) -> Result<SvmHead<F>> {
    let n = scaled.nrows();
    let kmat = kernel_matrix(scaled, gamma);
    let kernel = |s: usize, t: usize| kmat[[s, t]];
    let p = vec![-F::one(); n];
    let sol = smo(labels, &p, c, &kernel, F::from_f(KKT_TOL))?;
    let signed: Vec<F> = sol
        .alpha
        .iter()
        .zip(labels)
        .map(|(&a, &y)| a * y)
        .collect();
    let (sv, coefs) = gather_support(scaled, &signed);
    Ok(SvmHead {
        support_vectors: sv,
        dual_coefficients: coefs,
        bias: sol.bias,
    })
}

fn fit_svr_head<F: Scalar>(
    scaled: &Array2<F>,
    y: &[F],
    c: F,
    gamma: F,
    eps: F,
) -> Result<SvmHead<F>> {
    let n = scaled.nrows();
    let kmat = kernel_matrix(scaled, gamma);
    // doubled variable space: s < n are the +1 block, s >= n the -1 block
    let kernel = |s: usize, t: usize| kmat[[s % n, t % n]];
    let mut labels = vec![F::one(); 2 * n];
    let mut p = vec![F::zero(); 2 * n];
    for i in 0..n {
        p[i] = eps - y[i];
        labels[n + i] = -F::one();
        p[n + i] = eps + y[i];
    }
    let sol = smo(&labels, &p, c, &kernel, F::from_f(KKT_TOL))?;
    let beta: Vec<F> = (0..n).map(|i| sol.alpha[i] - sol.alpha[n + i]).collect();
    let (sv, coefs) = gather_support(scaled, &beta);
    Ok(SvmHead {
        support_vectors: sv,
        dual_coefficients: coefs,
        bias: sol.bias,
    })
}

fn kernel_matrix<F: Scalar>(scaled: &Array2<F>, gamma: F) -> Array2<F> {
    let n = scaled.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = rbf(
                scaled.row(i).as_slice().unwrap(),
                scaled.row(j).as_slice().unwrap(),
                gamma,
            );
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Fit the feature-scaled RBF SVM. Scales multiply columns before the
/// kernel; `gamma = Auto` resolves to `1 / (p * var)` of the scaled data.
pub fn fit_kernel_svm<F: Scalar>(
    x: ArrayView2<'_, F>,
    targets: &Targets<F>,
    scales: &[F],
    task: TaskKind,
    c: F,
    gamma: GammaChoice,
) -> Result<SvmModel<F>> {
    if scales.len() != x.ncols() {
        return Err(Error::usage("scale length must match columns"));
    }
    if scales.iter().any(|&s| s <= F::zero() || !s.is_finite()) {
        return Err(Error::usage("feature scales must be positive"));
    }
    let scales = Array1::from_vec(scales.to_vec());
    let scaled = scale_columns(x, &scales);
    let gamma = match gamma {
        GammaChoice::Auto => auto_gamma(scaled.view()),
        GammaChoice::Fixed(g) => F::from_f(g),
    };
    let heads = match (task, targets) {
        (TaskKind::Binary, Targets::Classes(ys)) => {
            let labels: Vec<F> = ys
                .iter()
                .map(|&v| if v == 1 { F::one() } else { -F::one() })
                .collect();
            vec![fit_binary_head(&scaled, &labels, c, gamma)?]
        }
        (TaskKind::Multiclass(n_classes), Targets::Classes(ys)) => {
            let mut heads = Vec::with_capacity(n_classes);
            for class in 0..n_classes {
                let labels: Vec<F> = ys
                    .iter()
                    .map(|&v| if v == class { F::one() } else { -F::one() })
                    .collect();
                heads.push(fit_binary_head(&scaled, &labels, c, gamma)?);
            }
            heads
        }
        (TaskKind::Regression, Targets::Real(ys)) => {
            vec![fit_svr_head(&scaled, ys, c, gamma, F::from_f(DEFAULT_SVR_EPSILON))?]
        }
        _ => return Err(Error::usage("targets do not match task kind")),
    };
    Ok(SvmModel {
        task,
        gamma,
        c,
        scales,
        heads,
    })
}

/// Dual feasibility and stationarity diagnostics for verification suites:
/// returns (max box violation, |sum alpha_i y_i|) recomputed from a solved
/// binary problem.
pub fn verify_binary_dual<F: Scalar>(
    x: ArrayView2<'_, F>,
    ys: &[usize],
    scales: &[F],
    c: F,
    gamma: GammaChoice,
) -> Result<(F, F)> {
    let scales_arr = Array1::from_vec(scales.to_vec());
    let scaled = scale_columns(x, &scales_arr);
    let gamma = match gamma {
        GammaChoice::Auto => auto_gamma(scaled.view()),
        GammaChoice::Fixed(g) => F::from_f(g),
    };
    let labels: Vec<F> = ys
        .iter()
        .map(|&v| if v == 1 { F::one() } else { -F::one() })
        .collect();
    let kmat = kernel_matrix(&scaled, gamma);
    let kernel = |s: usize, t: usize| kmat[[s, t]];
    let p = vec![-F::one(); labels.len()];
    let sol = smo(&labels, &p, c, &kernel, F::from_f(KKT_TOL))?;
    let mut box_violation = F::zero();
    let mut balance = F::zero();
    for (a, y) in sol.alpha.iter().zip(&labels) {
        let below = F::zero() - *a;
        box_violation = box_violation.max(below).max(*a - c);
        balance += *a * *y;
    }
    Ok((box_violation.max(F::zero()), balance.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_separable_signs() {
        let x = array![[-1.0f64], [1.0]];
        let y = Targets::Classes(vec![0, 1]);
        let model = fit_kernel_svm(
            x.view(),
            &y,
            &[1.0],
            TaskKind::Binary,
            1.0,
            GammaChoice::Auto,
        )
        .unwrap();
        let scores = model.predict(x.view());
        assert!(scores[[0, 0]] < 0.0);
        assert!(scores[[1, 0]] > 0.0);
    }

    #[test]
    fn unit_scales_match_plain_rbf_svm() {
        let mut rng = crate::rng::rng_for(3, "svm-null", &[]);
        let x = ndarray::Array2::<f64>::from_shape_fn((20, 3), |_| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let ys: Vec<usize> = (0..20).map(|i| usize::from(x[[i, 0]] > 0.0)).collect();
        let y = Targets::Classes(ys);
        let a = fit_kernel_svm(x.view(), &y, &[1.0; 3], TaskKind::Binary, 1.0, GammaChoice::Auto)
            .unwrap();
        // the null path multiplies by exactly 1.0, so the kernel matrix and
        // the sequence of SMO steps are identical
        let b = fit_kernel_svm(x.view(), &y, &[1.0; 3], TaskKind::Binary, 1.0, GammaChoice::Auto)
            .unwrap();
        let pa = a.predict(x.view());
        let pb = b.predict(x.view());
        for i in 0..20 {
            assert!((pa[[i, 0]] - pb[[i, 0]]).abs() <= 1e-9);
        }
    }

    #[test]
    fn dual_feasibility_on_toy_set() {
        let x = array![
            [0.0f64, 0.0],
            [0.2, 0.1],
            [0.1, 0.3],
            [0.3, 0.2],
            [1.0, 1.0],
            [1.2, 0.9],
            [0.9, 1.1],
            [1.1, 1.2]
        ];
        let ys = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let (box_violation, balance) =
            verify_binary_dual(x.view(), &ys, &[1.0, 1.0], 1.0, GammaChoice::Auto).unwrap();
        assert!(box_violation <= 1e-8, "box violation {box_violation}");
        assert!(balance <= 1e-8, "equality violation {balance}");
    }

    #[test]
    fn scaling_an_informative_feature_changes_decisions() {
        let mut rng = crate::rng::rng_for(8, "svm-scale", &[]);
        let x = ndarray::Array2::<f64>::from_shape_fn((30, 2), |_| rand::Rng::gen_range(&mut rng, -1.0..1.0));
        let ys: Vec<usize> = (0..30).map(|i| usize::from(x[[i, 0]] > 0.0)).collect();
        let y = Targets::Classes(ys);
        let base = fit_kernel_svm(
            x.view(),
            &y,
            &[1.0, 1.0],
            TaskKind::Binary,
            1.0,
            GammaChoice::Fixed(0.5),
        )
        .unwrap();
        let boosted = fit_kernel_svm(
            x.view(),
            &y,
            &[10.0, 1.0],
            TaskKind::Binary,
            1.0,
            GammaChoice::Fixed(0.5),
        )
        .unwrap();
        let pb = base.predict(x.view());
        let pbst = boosted.predict(x.view());
        let max_diff = (0..30)
            .map(|i| (pb[[i, 0]] - pbst[[i, 0]]).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff > 1e-3, "scaling had no effect: {max_diff}");
    }

    #[test]
    fn svr_tracks_a_linear_signal() {
        let x = array![[0.0f64], [0.5], [1.0], [1.5], [2.0], [2.5], [3.0]];
        let y: Vec<f64> = (0..7).map(|i| 0.5 * i as f64).collect();
        let model = fit_kernel_svm(
            x.view(),
            &Targets::Real(y.clone()),
            &[1.0],
            TaskKind::Regression,
            10.0,
            GammaChoice::Auto,
        )
        .unwrap();
        let preds = model.predict(x.view());
        for i in 0..7 {
            // epsilon-insensitive fit should stay within ~2 eps of the signal
            assert!((preds[[i, 0]] - y[i]).abs() < 0.25, "i={i}: {}", preds[[i, 0]]);
        }
    }
}

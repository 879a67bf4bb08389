//! Monotone temperature-controlled transforms that turn a feature prior into
//! penalty weights, feature scales, sampling probabilities, or instance
//! weights. Every transform is exactly the identity (all ones / uniform) at
//! zero temperature, which is what makes the null configuration a true
//! prior-free baseline.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::config::TiltMode;
use crate::data::FeaturePrior;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_CLIP_LO: f64 = 1e-3;
pub const DEFAULT_CLIP_HI: f64 = 1e3;

/// Parameters of the power-law maps `(v + eps)^{+-alpha}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TransformParams<F: Scalar> {
    pub alpha: F,
    pub epsilon: F,
    pub clip_lo: F,
    pub clip_hi: F,
}

impl<F: Scalar> TransformParams<F> {
    pub fn new(alpha: F, epsilon: F) -> Self {
        TransformParams {
            alpha,
            epsilon,
            clip_lo: F::from_f(DEFAULT_CLIP_LO),
            clip_hi: F::from_f(DEFAULT_CLIP_HI),
        }
    }

    fn clip(&self, x: F) -> F {
        x.max(self.clip_lo).min(self.clip_hi)
    }
}

/// `w_j = clip((v_j + eps)^{-alpha})`; larger prior scores get weaker
/// penalties. At `alpha = 0` returns exact ones (no clipping applied).
pub fn penalty_weights<F: Scalar>(prior: &FeaturePrior<F>, t: &TransformParams<F>) -> Vec<F> {
    if t.alpha == F::zero() {
        return vec![F::one(); prior.len()];
    }
    prior
        .values()
        .iter()
        .map(|&v| t.clip((v + t.epsilon).powf(-t.alpha)))
        .collect()
}

/// `s_j = clip((v_j + eps)^{alpha})`; eps keeps zero scores strictly
/// positive. At `alpha = 0` returns exact ones.
pub fn feature_scales<F: Scalar>(prior: &FeaturePrior<F>, t: &TransformParams<F>) -> Vec<F> {
    if t.alpha == F::zero() {
        return vec![F::one(); prior.len()];
    }
    prior
        .values()
        .iter()
        .map(|&v| t.clip((v + t.epsilon).powf(t.alpha)))
        .collect()
}

/// Normalized feature scales: `p_j = s_j / sum_k s_k`. Uniform at zero
/// temperature.
pub fn feature_sampling_probs<F: Scalar>(
    prior: &FeaturePrior<F>,
    t: &TransformParams<F>,
) -> Vec<F> {
    let scales = feature_scales(prior, t);
    let total: F = scales.iter().copied().sum();
    scales.into_iter().map(|s| s / total).collect()
}

/// Per-sample activation of prior-weighted features on standardized data:
/// `s_i = sum_j v_j |x_ij|^q`.
pub fn raw_activation<F: Scalar>(
    x_std: ArrayView2<'_, F>,
    prior: &FeaturePrior<F>,
    q: u32,
) -> Vec<F> {
    assert_eq!(x_std.ncols(), prior.len(), "prior length must match columns");
    assert!(q >= 1, "q must be >= 1");
    let v = prior.values();
    (0..x_std.nrows())
        .map(|i| {
            let mut acc = F::zero();
            for j in 0..x_std.ncols() {
                acc += v[j] * x_std[[i, j]].abs().powi(q as i32);
            }
            acc
        })
        .collect()
}

/// Affine blend between uniform weights and min-max-normalized activations:
/// `rho_i = (1 - beta) + beta * (s_i - min) / (max - min + eps)`.
/// Constant activations carry no per-sample information and yield all ones.
pub fn instance_weights_blend<F: Scalar>(activations: &[F], beta: F, epsilon: F) -> Vec<F> {
    assert!(beta >= F::zero() && beta <= F::one(), "beta must lie in [0, 1]");
    let n = activations.len();
    if beta == F::zero() || n == 0 {
        return vec![F::one(); n];
    }
    let mut lo = activations[0];
    let mut hi = activations[0];
    for &s in activations {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if lo == hi {
        return vec![F::one(); n];
    }
    activations
        .iter()
        .map(|&s| (F::one() - beta) + beta * (s - lo) / (hi - lo + epsilon))
        .collect()
}

/// Exponentially tilted instance weights together with the solved tilt.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TiltSolution<F: Scalar> {
    pub eta: F,
    pub partition: F,
    pub weights: Vec<F>,
}

/// Exact exponential-tilt instance weights: finds `eta` such that the tilted
/// mean of the activations matches `(1 - beta) * mean + beta * top-quantile
/// mean`, then returns `rho_i = exp(eta s_i) / Z(eta)` with unit mean.
pub fn instance_weights_tilt<F: Scalar>(
    activations: &[F],
    beta: F,
    target_fraction: F,
) -> Result<TiltSolution<F>> {
    assert!(beta >= F::zero() && beta <= F::one(), "beta must lie in [0, 1]");
    assert!(
        target_fraction > F::zero() && target_fraction <= F::one(),
        "target_fraction must lie in (0, 1]"
    );
    let n = activations.len();
    let ones = TiltSolution {
        eta: F::zero(),
        partition: F::one(),
        weights: vec![F::one(); n],
    };
    if n == 0 || beta == F::zero() {
        return Ok(ones);
    }
    let lo = activations.iter().copied().fold(activations[0], F::min);
    let hi = activations.iter().copied().fold(activations[0], F::max);
    if lo == hi {
        return Ok(ones);
    }

    let nf = F::from_usize_(n);
    let mean: F = activations.iter().copied().sum::<F>() / nf;
    // prior-implied target: mean of the top ceil(fraction * n) activations
    let take = ((target_fraction.to_f() * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = activations.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let prior_mean: F = sorted[..take].iter().copied().sum::<F>() / F::from_usize_(take);
    let target = (F::one() - beta) * mean + beta * prior_mean;

    // tilted mean, numerically stabilized by subtracting max(eta * s)
    let tilted_mean = |eta: F| -> F {
        let m = activations
            .iter()
            .map(|&s| eta * s)
            .fold(F::neg_infinity(), F::max);
        let mut num = F::zero();
        let mut den = F::zero();
        for &s in activations {
            let e = (eta * s - m).exp();
            num += s * e;
            den += e;
        }
        num / den
    };

    // population std of the activations sets the eta bracket scale
    let var: F = activations
        .iter()
        .map(|&s| (s - mean) * (s - mean))
        .sum::<F>()
        / nf;
    let sigma = var.sqrt();
    let bound = F::from_f(50.0) / sigma;

    let mut lo_eta = -bound;
    let mut hi_eta = bound;
    let residual = |eta: F| tilted_mean(eta) - target;
    if residual(lo_eta) > F::zero() || residual(hi_eta) < F::zero() {
        return Err(Error::numeric("tilt target unreachable".to_string()));
    }
    // bisection; the tilted mean is strictly increasing in eta
    let tol = F::from_f(1e-10);
    let mut eta = F::zero();
    for _ in 0..500 {
        eta = (lo_eta + hi_eta) / F::from_f(2.0);
        let r = residual(eta);
        if r.abs() <= tol {
            break;
        }
        if r > F::zero() {
            hi_eta = eta;
        } else {
            lo_eta = eta;
        }
    }
    if residual(eta).abs() > tol {
        return Err(Error::numeric("tilt root finding failed to converge"));
    }

    let m = activations
        .iter()
        .map(|&s| eta * s)
        .fold(F::neg_infinity(), F::max);
    let z_shift: F = activations
        .iter()
        .map(|&s| (eta * s - m).exp())
        .sum::<F>()
        / nf;
    let weights: Vec<F> = activations
        .iter()
        .map(|&s| (eta * s - m).exp() / z_shift)
        .collect();
    let partition = z_shift * m.exp();
    Ok(TiltSolution {
        eta,
        partition,
        weights,
    })
}

/// Instance weights under the configured mode.
pub fn instance_weights<F: Scalar>(
    activations: &[F],
    beta: F,
    epsilon: F,
    mode: TiltMode,
    target_fraction: F,
) -> Result<Vec<F>> {
    match mode {
        TiltMode::AffineBlend => Ok(instance_weights_blend(activations, beta, epsilon)),
        TiltMode::ExactTilt => {
            Ok(instance_weights_tilt(activations, beta, target_fraction)?.weights)
        }
    }
}

/// Order-reversing reflection `v'_j = min(v) + max(v) - v_j`. Applying it
/// twice recovers the input; a constant prior is unchanged.
pub fn invert_prior<F: Scalar>(prior: &FeaturePrior<F>) -> FeaturePrior<F> {
    let v = prior.values();
    let lo = v.iter().copied().fold(v[0], F::min);
    let hi = v.iter().copied().fold(v[0], F::max);
    FeaturePrior::new(v.iter().map(|&x| lo + hi - x).collect())
        .expect("reflection preserves nonnegativity")
}

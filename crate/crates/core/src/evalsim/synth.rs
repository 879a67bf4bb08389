//! Synthetic oracle-prior problem generator: Gaussian features with random
//! per-feature location/scale, a sparse signed signal through an elementwise
//! tanh, and labels thresholded so the positive fraction matches the balance
//! coefficient.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeaturePrior, Targets, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{rng_for, sample_standard_normal};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// number of informative features
    pub p_hat: usize,
    /// target positive fraction
    pub c: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.p < 1 {
            return Err(Error::usage("synthetic spec needs n >= 4 and p >= 1"));
        }
        if !(1..=self.p).contains(&self.p_hat) {
            return Err(Error::usage("p_hat must lie in [1, p]"));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::usage("balance coefficient must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("oracle_n{}_p{}_ph{}_c{}", self.n, self.p, self.p_hat, self.c)
    }
}

/// A generated problem: the dataset, the nonnegative prior handed to the
/// pipeline (absolute signal magnitudes), the signed generating vector, and
/// the informative index set.
#[derive(Debug, Clone)]
pub struct OracleProblem<F: Scalar> {
    pub dataset: Dataset<F>,
    pub prior: FeaturePrior<F>,
    pub signed_signal: Vec<F>,
    pub informative: Vec<usize>,
    /// noise-free latent signal tanh(X) V, one entry per row
    pub latent: Vec<F>,
}

/// Empirical (1-c)-quantile threshold: with k = floor((1-c) n) clamped to
/// [1, n-1], returns the k-th smallest value, so about c*n entries exceed
/// it.
fn threshold_for_balance(values: &[f64], c: f64) -> f64 {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = (((1.0 - c) * n as f64).floor() as usize).clamp(1, n - 1);
    sorted[k - 1]
}

fn attempt<F: Scalar>(spec: &SyntheticSpec, sub_seed: u64) -> Result<OracleProblem<F>> {
    let (n, p) = (spec.n, spec.p);
    let mut rng = rng_for(spec.seed, "oracle-synth", &[sub_seed]);

    let mus: Vec<f64> = (0..p).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let sigmas: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..5.0)).collect();
    let mut x = Array2::<F>::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let z = sample_standard_normal(&mut rng);
            x[[i, j]] = F::from_f(mus[j] + sigmas[j] * z);
        }
    }

    // informative subset drawn uniformly without replacement
    let mut pool: Vec<usize> = (0..p).collect();
    for k in 0..spec.p_hat {
        let pick = rng.gen_range(k..p);
        pool.swap(k, pick);
    }
    let mut informative: Vec<usize> = pool[..spec.p_hat].to_vec();
    informative.sort_unstable();

    let mut signal = vec![0.0f64; p];
    let is_informative: Vec<bool> = {
        let mut mask = vec![false; p];
        for &j in &informative {
            mask[j] = true;
        }
        mask
    };
    for j in 0..p {
        let noise = 0.1 * sample_standard_normal(&mut rng);
        if is_informative[j] {
            let magnitude = rng.gen_range(0.5..5.0);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            signal[j] = sign * magnitude + noise;
        } else {
            signal[j] = noise;
        }
    }

    // latent signal through elementwise tanh
    let latent: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..p {
                acc += x[[i, j]].to_f().tanh() * signal[j];
            }
            acc
        })
        .collect();
    let mean = latent.iter().sum::<f64>() / n as f64;
    let sd = (latent.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd <= 1e-12 {
        return Err(Error::numeric("degenerate latent signal"));
    }
    let threshold = threshold_for_balance(&latent, spec.c);
    let classes: Vec<usize> = latent
        .iter()
        .map(|&v| usize::from(v + 0.1 * sd * sample_standard_normal(&mut rng) > threshold))
        .collect();
    let positives = classes.iter().sum::<usize>();
    if positives == 0 || positives == n {
        return Err(Error::numeric("degenerate labels: single class"));
    }

    let names = (0..p).map(|j| format!("feature_{j:04}")).collect();
    let dataset = Dataset::new(
        x,
        Targets::Classes(classes),
        names,
        TaskKind::Binary,
        vec!["0".to_string(), "1".to_string()],
    )?;
    let prior = FeaturePrior::new(signal.iter().map(|&v| F::from_f(v.abs())).collect())?;
    Ok(OracleProblem {
        dataset,
        prior,
        signed_signal: signal.iter().map(|&v| F::from_f(v)).collect(),
        informative,
        latent: latent.iter().map(|&v| F::from_f(v)).collect(),
    })
}

/// Generate a synthetic problem, regenerating with an incremented sub-seed
/// (up to 10 attempts) when it degenerates.
pub fn generate_oracle_problem<F: Scalar>(spec: &SyntheticSpec) -> Result<OracleProblem<F>> {
    spec.validate()?;
    let mut last = None;
    for sub_seed in 0..10u64 {
        match attempt(spec, sub_seed) {
            Ok(problem) => return Ok(problem),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::numeric("oracle generation failed")))
}

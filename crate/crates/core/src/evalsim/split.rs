//! Train/test index splitting for the paired experiments.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

pub const DEFAULT_TEST_RATIO: f64 = 0.2;
/// Minimum per-class count required on each side of a classification split.
pub const MIN_CLASS_PER_SIDE: usize = 4;

/// Sweep plan: training ratios, a fixed test ratio, and the split
/// seeds. Infeasible cells (too few samples per class, or ratios that do
/// not fit) are skipped with a warning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ratios: Vec<f64>,
    pub test_ratio: f64,
    pub seeds: Vec<u64>,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_ratios: (1..=8).map(|k| k as f64 / 10.0).collect(),
            test_ratio: DEFAULT_TEST_RATIO,
            seeds: (0..10).collect(),
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_ratios.is_empty() || self.seeds.is_empty() {
            return Err(Error::usage("split spec needs ratios and seeds"));
        }
        if !(self.test_ratio > 0.0 && self.test_ratio < 1.0) {
            return Err(Error::usage("test ratio must lie in (0, 1)"));
        }
        for &r in &self.train_ratios {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::usage("train ratios must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Deterministic train/test index split. For classification the test block
/// and the train subsample are taken per class, so both sides preserve the
/// class mix; the test block for a given seed is identical across train
/// ratios, which keeps the sweep paired.
pub fn train_test_split<F: Scalar>(
    d: &Dataset<F>,
    train_ratio: f64,
    test_ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if train_ratio + test_ratio > 1.0 + 1e-12 {
        return Err(Error::usage(format!(
            "train ratio {train_ratio} exceeds 1 - test ratio {test_ratio}"
        )));
    }
    let n = d.n_samples();
    let mut rng = rng_for(seed, "train-test-split", &[n as u64]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    match d.targets() {
        Targets::Classes(ys) => {
            let n_classes = ys.iter().copied().max().unwrap_or(0) + 1;
            for c in 0..n_classes {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| ys[i] == c).collect();
                members.shuffle(&mut rng);
                let n_test = ((members.len() as f64) * test_ratio).round() as usize;
                let n_train = ((members.len() as f64) * train_ratio).round() as usize;
                let n_test = n_test.min(members.len());
                let n_train = n_train.min(members.len() - n_test);
                test.extend_from_slice(&members[..n_test]);
                train.extend_from_slice(&members[n_test..n_test + n_train]);
            }
        }
        Targets::Real(_) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let n_test = ((n as f64) * test_ratio).round() as usize;
            let n_train = (((n as f64) * train_ratio).round() as usize).min(n - n_test);
            test.extend_from_slice(&order[..n_test]);
            train.extend_from_slice(&order[n_test..n_test + n_train]);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Check the per-class floor on both sides of a classification split.
pub fn split_is_feasible<F: Scalar>(d: &Dataset<F>, train: &[usize], test: &[usize]) -> bool {
    match d.targets() {
        Targets::Classes(ys) => {
            let n_classes = ys.iter().copied().max().unwrap_or(0) + 1;
            for c in 0..n_classes {
                let in_train = train.iter().filter(|&&i| ys[i] == c).count();
                let in_test = test.iter().filter(|&&i| ys[i] == c).count();
                if in_train < MIN_CLASS_PER_SIDE || in_test < MIN_CLASS_PER_SIDE {
                    return false;
                }
            }
            true
        }
        Targets::Real(_) => !train.is_empty() && !test.is_empty(),
    }
}

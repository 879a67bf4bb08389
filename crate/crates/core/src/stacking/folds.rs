//! Fold construction: stratified for classification, shuffled blocks for
//! regression.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// Assignment of every sample to exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub assignment: Vec<usize>,
    pub k: usize,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn n_samples(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Held-out indices of fold `k`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    /// Training indices for fold `k` (everything outside it), ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Builds a fold plan for arbitrary targets. `class_of = Some(ids)` turns on
/// stratification: per-class index blocks are shuffled and dealt round-robin
/// with a cursor that carries across classes, keeping both the fold sizes
/// and the per-class counts balanced to within one.
pub fn fold_plan(class_of: Option<&[usize]>, n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::usage("k_folds must be >= 2"));
    }
    if k > n {
        return Err(Error::data(format!(
            "k_folds = {k} exceeds the {n} available samples"
        )));
    }
    let mut rng = rng_for(seed, "fold-plan", &[n as u64, k as u64]);
    let mut assignment = vec![0usize; n];
    match class_of {
        Some(classes) => {
            assert_eq!(classes.len(), n);
            let n_classes = classes.iter().copied().max().unwrap_or(0) + 1;
            let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
            for (i, &c) in classes.iter().enumerate() {
                per_class[c].push(i);
            }
            for (c, members) in per_class.iter().enumerate() {
                if members.len() < k {
                    return Err(Error::data(format!(
                        "insufficient minority samples: class {c} has {} members for {k} folds",
                        members.len()
                    )));
                }
            }
            let mut cursor = 0usize;
            for members in per_class.iter_mut() {
                members.shuffle(&mut rng);
                for &i in members.iter() {
                    assignment[i] = cursor % k;
                    cursor += 1;
                }
            }
            Ok(FoldPlan {
                assignment,
                k,
                stratified: true,
            })
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut pos = 0usize;
            for fold in 0..k {
                let size = base + usize::from(fold < extra);
                for &i in &order[pos..pos + size] {
                    assignment[i] = fold;
                }
                pos += size;
            }
            Ok(FoldPlan {
                assignment,
                k,
                stratified: false,
            })
        }
    }
}

/// Fold plan for a dataset: stratified for classification, plain for
/// regression. Classification requires every class to have at least `k`
/// members.
pub fn make_folds<F: Scalar>(d: &Dataset<F>, k: usize, seed: u64) -> Result<FoldPlan> {
    match d.targets() {
        Targets::Classes(ys) => fold_plan(Some(ys), d.n_samples(), k, seed),
        Targets::Real(_) => fold_plan(None, d.n_samples(), k, seed),
    }
}

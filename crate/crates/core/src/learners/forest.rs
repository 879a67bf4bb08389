//! Random forest with weighted bootstrap sampling, prior-proportional
//! feature oversampling, and smoothed log-probability leaves.
//!
//! Prior injection happens in two places: bootstrap rows are drawn with
//! probability proportional to the instance weights, and the candidate
//! column multiset is built by oversampling feature indices (factor 1, so 2p
//! columns) with probabilities proportional to the feature prior. Per-split
//! subsetting then draws from that multiset.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Targets, TaskKind};
use crate::error::{Error, Result};
use crate::learners::tree::{Tree, TreeNode};
use crate::rng::rng_for;
use crate::scalar::Scalar;

const SMOOTHING: f64 = 1.0;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ForestModel<F: Scalar> {
    pub task: TaskKind,
    pub trees: Vec<Tree<F>>,
    pub feature_probs: Vec<F>,
    pub rng_seed: u64,
}

impl<F: Scalar> ForestModel<F> {
    /// Mean of the per-tree outputs: log-odds (binary), per-class smoothed
    /// log-probabilities (multiclass), or means (regression).
    pub fn predict(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let d = self.task.n_outputs();
        let mut out = Array2::zeros((x.nrows(), d));
        let scale = F::one() / F::from_usize_(self.trees.len());
        for i in 0..x.nrows() {
            for tree in &self.trees {
                let values = tree.leaf_values(x.row(i));
                for (c, v) in values.iter().enumerate() {
                    out[[i, c]] += *v * scale;
                }
            }
        }
        out
    }
}

/// Laplace-smoothed class probabilities from weighted class counts.
pub fn smoothed_class_probs<F: Scalar>(weighted_counts: &[F], smoothing: F) -> Vec<F> {
    let total: F = weighted_counts.iter().copied().sum();
    let denom = total + smoothing * F::from_usize_(weighted_counts.len());
    weighted_counts
        .iter()
        .map(|&w| (w + smoothing) / denom)
        .collect()
}

/// Inverse-CDF draw from cumulative weights; `total` is the last entry.
fn draw_weighted(rng: &mut ChaCha8Rng, cumulative: &[f64], total: f64) -> usize {
    let u = rng.gen::<f64>() * total;
    match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
        Ok(idx) => (idx + 1).min(cumulative.len() - 1),
        Err(idx) => idx.min(cumulative.len() - 1),
    }
}

fn cumulative(weights: &[f64]) -> (Vec<f64>, f64) {
    let mut acc = 0.0;
    let cum: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    (cum, acc)
}

#[derive(Clone, Copy)]
enum NodeTargets<'a, F: Scalar> {
    /// class ids, class count, and whether leaves emit a single log-odds
    /// column (binary task) or one log-probability per class
    Classes(&'a [usize], usize, bool),
    Real(&'a [F]),
}

struct TreeBuilder<'a, 'b, F: Scalar> {
    x: ArrayView2<'a, F>,
    targets: NodeTargets<'b, F>,
    candidate_cols: Vec<usize>,
    per_split: usize,
    nodes: Vec<TreeNode<F>>,
}

struct BestSplit<F: Scalar> {
    gain: F,
    feature: usize,
    threshold: F,
}

impl<'a, 'b, F: Scalar> TreeBuilder<'a, 'b, F> {
    /// rows carry bootstrap multiplicities as weights
    fn build(&mut self, rows: &[(usize, F)], rng: &mut ChaCha8Rng) -> usize {
        if let Some(split) = self.find_split(rows, rng) {
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &(i, w) in rows {
                if self.x[[i, split.feature]] <= split.threshold {
                    left.push((i, w));
                } else {
                    right.push((i, w));
                }
            }
            let idx = self.nodes.len();
            self.nodes.push(TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: 0,
                right: 0,
            });
            let left_idx = self.build(&left, rng);
            let right_idx = self.build(&right, rng);
            if let TreeNode::Split { left, right, .. } = &mut self.nodes[idx] {
                *left = left_idx;
                *right = right_idx;
            }
            idx
        } else {
            let values = self.leaf_values(rows);
            self.nodes.push(TreeNode::Leaf { values });
            self.nodes.len() - 1
        }
    }

    fn leaf_values(&self, rows: &[(usize, F)]) -> Vec<F> {
        match &self.targets {
            NodeTargets::Classes(ys, n_classes, binary_leaf) => {
                let mut counts = vec![F::zero(); *n_classes];
                for &(i, w) in rows {
                    counts[ys[i]] += w;
                }
                let probs = smoothed_class_probs(&counts, F::from_f(SMOOTHING));
                if *binary_leaf {
                    vec![(probs[1] / probs[0]).ln()]
                } else {
                    probs.iter().map(|p| p.ln()).collect()
                }
            }
            NodeTargets::Real(ys) => {
                let mut total = F::zero();
                let mut acc = F::zero();
                for &(i, w) in rows {
                    total += w;
                    acc += w * ys[i];
                }
                vec![acc / total]
            }
        }
    }

    fn node_impurity(&self, rows: &[(usize, F)]) -> (F, F) {
        match &self.targets {
            NodeTargets::Classes(ys, n_classes, _) => {
                let mut counts = vec![F::zero(); *n_classes];
                let mut total = F::zero();
                for &(i, w) in rows {
                    counts[ys[i]] += w;
                    total += w;
                }
                let mut gini = F::one();
                for c in counts {
                    let f = c / total;
                    gini -= f * f;
                }
                (gini, total)
            }
            NodeTargets::Real(ys) => {
                let mut total = F::zero();
                let mut sum = F::zero();
                let mut sq = F::zero();
                for &(i, w) in rows {
                    total += w;
                    sum += w * ys[i];
                    sq += w * ys[i] * ys[i];
                }
                let mean = sum / total;
                (sq / total - mean * mean, total)
            }
        }
    }

    fn find_split(&self, rows: &[(usize, F)], rng: &mut ChaCha8Rng) -> Option<BestSplit<F>> {
        if rows.len() < 2 {
            return None;
        }
        let (parent_impurity, total_w) = self.node_impurity(rows);
        if parent_impurity <= F::from_f(MIN_GAIN) {
            return None;
        }
        // uniform slots without replacement from the oversampled multiset
        let slots = sample_slots(rng, self.candidate_cols.len(), self.per_split);
        let mut best: Option<BestSplit<F>> = None;
        let mut order: Vec<(F, usize, F)> = Vec::with_capacity(rows.len());
        for slot in slots {
            let feature = self.candidate_cols[slot];
            order.clear();
            for &(i, w) in rows {
                order.push((self.x[[i, feature]], i, w));
            }
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            match &self.targets {
                NodeTargets::Classes(ys, n_classes, _) => {
                    let mut left_counts = vec![F::zero(); *n_classes];
                    let mut total_counts = vec![F::zero(); *n_classes];
                    for &(_, i, w) in order.iter() {
                        total_counts[ys[i]] += w;
                    }
                    let mut left_w = F::zero();
                    for pos in 0..order.len() - 1 {
                        let (value, i, w) = order[pos];
                        left_counts[ys[i]] += w;
                        left_w += w;
                        let next = order[pos + 1].0;
                        if next <= value {
                            continue;
                        }
                        let right_w = total_w - left_w;
                        let mut gini_l = F::one();
                        let mut gini_r = F::one();
                        for c in 0..*n_classes {
                            let fl = left_counts[c] / left_w;
                            gini_l -= fl * fl;
                            let fr = (total_counts[c] - left_counts[c]) / right_w;
                            gini_r -= fr * fr;
                        }
                        let gain = parent_impurity
                            - (left_w / total_w) * gini_l
                            - (right_w / total_w) * gini_r;
                        let threshold = (value + next) / F::from_f(2.0);
                        if gain > F::from_f(MIN_GAIN)
                            && best.as_ref().is_none_or(|b| gain > b.gain)
                        {
                            best = Some(BestSplit {
                                gain,
                                feature,
                                threshold,
                            });
                        }
                    }
                }
                NodeTargets::Real(ys) => {
                    let mut total_sum = F::zero();
                    let mut total_sq = F::zero();
                    for &(_, i, w) in order.iter() {
                        total_sum += w * ys[i];
                        total_sq += w * ys[i] * ys[i];
                    }
                    let mut left_w = F::zero();
                    let mut left_sum = F::zero();
                    let mut left_sq = F::zero();
                    for pos in 0..order.len() - 1 {
                        let (value, i, w) = order[pos];
                        left_w += w;
                        left_sum += w * ys[i];
                        left_sq += w * ys[i] * ys[i];
                        let next = order[pos + 1].0;
                        if next <= value {
                            continue;
                        }
                        let right_w = total_w - left_w;
                        let lm = left_sum / left_w;
                        let rm = (total_sum - left_sum) / right_w;
                        let var_l = left_sq / left_w - lm * lm;
                        let var_r = (total_sq - left_sq) / right_w - rm * rm;
                        let gain = parent_impurity
                            - (left_w / total_w) * var_l
                            - (right_w / total_w) * var_r;
                        let threshold = (value + next) / F::from_f(2.0);
                        if gain > F::from_f(MIN_GAIN)
                            && best.as_ref().is_none_or(|b| gain > b.gain)
                        {
                            best = Some(BestSplit {
                                gain,
                                feature,
                                threshold,
                            });
                        }
                    }
                }
            }
        }
        best
    }
}

/// `count` distinct slot indices out of `len` via partial Fisher-Yates.
fn sample_slots(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    let count = count.min(len);
    let mut pool: Vec<usize> = (0..len).collect();
    for k in 0..count {
        let pick = rng.gen_range(k..len);
        pool.swap(k, pick);
    }
    pool.truncate(count);
    pool
}

/// Fit a random forest. `sample_weights` drive the bootstrap distribution;
/// `feature_probs` drive column oversampling. Passing `None` for either
/// plugs in the uniform vector, so the prior-free forest and the null
/// configuration share one code path (and RNG stream) exactly.
#[allow(clippy::too_many_arguments)]
pub fn fit_random_forest<F: Scalar>(
    x: ArrayView2<'_, F>,
    targets: &Targets<F>,
    sample_weights: Option<&[F]>,
    feature_probs: Option<&[F]>,
    task: TaskKind,
    n_trees: usize,
    seed: u64,
) -> Result<ForestModel<F>> {
    let (n, p) = x.dim();
    if n_trees == 0 {
        return Err(Error::usage("n_trees must be >= 1"));
    }
    let uniform_w = vec![F::one(); n];
    let uniform_p = vec![F::one() / F::from_usize_(p); p];
    let weights = sample_weights.unwrap_or(&uniform_w);
    let probs = feature_probs.unwrap_or(&uniform_p);
    if weights.len() != n || probs.len() != p {
        return Err(Error::usage("weight/probability lengths must match data"));
    }
    if weights.iter().any(|w| *w < F::zero()) || weights.iter().all(|w| *w == F::zero()) {
        return Err(Error::usage(
            "sample weights must be nonnegative and not all zero",
        ));
    }

    let (cum_w, total_w) = cumulative(&weights.iter().map(|w| w.to_f()).collect::<Vec<_>>());
    let (cum_p, total_p) = cumulative(&probs.iter().map(|w| w.to_f()).collect::<Vec<_>>());

    let oversampled = 2 * p;
    let per_split = match task {
        TaskKind::Regression => (2.0 * p as f64 / 3.0).ceil() as usize,
        _ => (oversampled as f64).sqrt().ceil() as usize,
    };

    let node_targets = match (targets, task) {
        (Targets::Classes(ys), TaskKind::Binary) => NodeTargets::Classes(ys.as_slice(), 2, true),
        (Targets::Classes(ys), TaskKind::Multiclass(c)) => {
            NodeTargets::Classes(ys.as_slice(), c, false)
        }
        (Targets::Real(ys), TaskKind::Regression) => NodeTargets::Real(ys.as_slice()),
        _ => return Err(Error::usage("targets do not match task kind")),
    };

    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let mut rng = rng_for(seed, "forest-tree", &[t as u64]);
        // weighted bootstrap, aggregated into multiplicities
        let mut counts = vec![0usize; n];
        for _ in 0..n {
            counts[draw_weighted(&mut rng, &cum_w, total_w)] += 1;
        }
        let rows: Vec<(usize, F)> = counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(i, &c)| (i, F::from_usize_(c)))
            .collect();
        // column oversampling with replacement, factor 1
        let candidate_cols: Vec<usize> = (0..oversampled)
            .map(|_| draw_weighted(&mut rng, &cum_p, total_p))
            .collect();
        let mut builder = TreeBuilder {
            x,
            targets: node_targets,
            candidate_cols,
            per_split,
            nodes: Vec::new(),
        };
        let root = builder.build(&rows, &mut rng);
        debug_assert_eq!(root, 0);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(ForestModel {
        task,
        trees,
        feature_probs: probs.to_vec(),
        rng_seed: seed,
    })
}

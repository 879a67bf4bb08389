//! Gradient-boosted depth-limited regression trees on gradient/hessian
//! statistics, with prior-weighted per-node feature subsampling.
//!
//! Losses: squared error (regression), logistic (binary), softmax with one
//! tree per class and round (multiclass). Node feature sampling draws a
//! fraction max(0.2, min(1, 30/p)) of the columns without replacement with
//! inclusion probabilities proportional to the feature prior, using the
//! exponential-key weighted reservoir scheme.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Targets, TaskKind};
use crate::error::{Error, Result};
use crate::learners::tree::{Tree, TreeNode};
use crate::rng::rng_for;
use crate::scalar::Scalar;

pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_MAX_DEPTH: usize = 6;
pub const DEFAULT_LEARNING_RATE: f64 = 0.3;
pub const DEFAULT_REG_LAMBDA: f64 = 1.0;
pub const DEFAULT_MIN_CHILD_HESSIAN: f64 = 1.0;
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct GbtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub min_child_hessian: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            rounds: DEFAULT_ROUNDS,
            max_depth: DEFAULT_MAX_DEPTH,
            learning_rate: DEFAULT_LEARNING_RATE,
            reg_lambda: DEFAULT_REG_LAMBDA,
            min_child_hessian: DEFAULT_MIN_CHILD_HESSIAN,
        }
    }
}

/// Per-node column subsampling rate.
pub fn node_feature_fraction(p: usize) -> f64 {
    (30.0 / p as f64).clamp(0.2, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GbtModel<F: Scalar> {
    pub task: TaskKind,
    /// `rounds x n_outputs` trees; leaf values already carry the learning
    /// rate, so prediction is base score plus a plain sum.
    pub trees: Vec<Vec<Tree<F>>>,
    pub base_scores: Vec<F>,
    pub feature_probs: Vec<F>,
    pub rng_seed: u64,
}

impl<F: Scalar> GbtModel<F> {
    pub fn predict(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        self.predict_staged(x, self.trees.len())
    }

    /// Prediction using only the first `rounds` boosting rounds.
    pub fn predict_staged(&self, x: ArrayView2<'_, F>, rounds: usize) -> Array2<F> {
        let d = self.base_scores.len();
        let mut out = Array2::zeros((x.nrows(), d));
        for i in 0..x.nrows() {
            for c in 0..d {
                out[[i, c]] = self.base_scores[c];
            }
            for round in self.trees.iter().take(rounds) {
                for (c, tree) in round.iter().enumerate() {
                    out[[i, c]] += tree.leaf_values(x.row(i))[0];
                }
            }
        }
        out
    }

    /// Mean training loss of the staged predictions; used to check that
    /// boosting monotonically decreases the training objective.
    pub fn training_loss(&self, x: ArrayView2<'_, F>, targets: &Targets<F>, rounds: usize) -> F {
        let margins = self.predict_staged(x, rounds);
        let n = x.nrows();
        let n_f = F::from_usize_(n);
        match (self.task, targets) {
            (TaskKind::Regression, Targets::Real(ys)) => {
                let mut acc = F::zero();
                for i in 0..n {
                    let d = margins[[i, 0]] - ys[i];
                    acc += d * d;
                }
                acc / (F::from_f(2.0) * n_f)
            }
            (TaskKind::Binary, Targets::Classes(ys)) => {
                let mut acc = F::zero();
                for i in 0..n {
                    let m = margins[[i, 0]];
                    let y = F::from_usize_(ys[i]);
                    // log(1 + e^m) - y m, stabilized
                    let log1p = if m > F::zero() {
                        m + (F::one() + (-m).exp()).ln()
                    } else {
                        (F::one() + m.exp()).ln()
                    };
                    acc += log1p - y * m;
                }
                acc / n_f
            }
            (TaskKind::Multiclass(c), Targets::Classes(ys)) => {
                let mut acc = F::zero();
                for i in 0..n {
                    let row: Vec<F> = (0..c).map(|k| margins[[i, k]]).collect();
                    let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
                    let lse = mx
                        + row
                            .iter()
                            .map(|&m| (m - mx).exp())
                            .sum::<F>()
                            .ln();
                    acc += lse - row[ys[i]];
                }
                acc / n_f
            }
            _ => F::nan(),
        }
    }
}

/// Weighted sampling without replacement via exponential keys: the `count`
/// items with the largest `u^(1/w)` keys form the sample.
fn weighted_sample_without_replacement(
    rng: &mut ChaCha8Rng,
    weights: &[f64],
    count: usize,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(j, &w)| {
            let u: f64 = rng.gen::<f64>();
            let key = if w > 0.0 { u.powf(1.0 / w) } else { -1.0 };
            (key, j)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = keyed
        .into_iter()
        .take(count.min(weights.len()))
        .map(|(_, j)| j)
        .collect();
    picked.sort_unstable();
    picked
}

struct GbtBuilder<'a, 'b, F: Scalar> {
    x: ArrayView2<'a, F>,
    grad: &'b [F],
    hess: &'b [F],
    probs_f64: &'b [f64],
    params: GbtParams,
    n_candidates: usize,
    nodes: Vec<TreeNode<F>>,
}

impl<'a, 'b, F: Scalar> GbtBuilder<'a, 'b, F> {
    fn leaf_value(&self, g: F, h: F) -> F {
        let lambda = F::from_f(self.params.reg_lambda);
        let lr = F::from_f(self.params.learning_rate);
        -(g / (h + lambda)) * lr
    }

    fn build(&mut self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let mut g_total = F::zero();
        let mut h_total = F::zero();
        for &i in rows {
            g_total += self.grad[i];
            h_total += self.hess[i];
        }
        let can_split = depth < self.params.max_depth && rows.len() >= 2;
        let split = if can_split {
            self.find_split(rows, g_total, h_total, rng)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (mut left, mut right) = (Vec::new(), Vec::new());
                for &i in rows {
                    if self.x[[i, feature]] <= threshold {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                let idx = self.nodes.len();
                self.nodes.push(TreeNode::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let l = self.build(&left, depth + 1, rng);
                let r = self.build(&right, depth + 1, rng);
                if let TreeNode::Split { left, right, .. } = &mut self.nodes[idx] {
                    *left = l;
                    *right = r;
                }
                idx
            }
            None => {
                self.nodes.push(TreeNode::Leaf {
                    values: vec![self.leaf_value(g_total, h_total)],
                });
                self.nodes.len() - 1
            }
        }
    }

    fn find_split(
        &self,
        rows: &[usize],
        g_total: F,
        h_total: F,
        rng: &mut ChaCha8Rng,
    ) -> Option<(usize, F)> {
        let lambda = F::from_f(self.params.reg_lambda);
        let min_h = F::from_f(self.params.min_child_hessian);
        let parent_score = g_total * g_total / (h_total + lambda);
        let candidates =
            weighted_sample_without_replacement(rng, self.probs_f64, self.n_candidates);
        let mut best_gain = F::zero();
        let mut best: Option<(usize, F)> = None;
        let mut order: Vec<(F, usize)> = Vec::with_capacity(rows.len());
        for feature in candidates {
            order.clear();
            for &i in rows {
                order.push((self.x[[i, feature]], i));
            }
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut g_left = F::zero();
            let mut h_left = F::zero();
            for pos in 0..order.len() - 1 {
                let (value, i) = order[pos];
                g_left += self.grad[i];
                h_left += self.hess[i];
                let next = order[pos + 1].0;
                if next <= value {
                    continue;
                }
                let h_right = h_total - h_left;
                if h_left < min_h || h_right < min_h {
                    continue;
                }
                let g_right = g_total - g_left;
                let gain = g_left * g_left / (h_left + lambda)
                    + g_right * g_right / (h_right + lambda)
                    - parent_score;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((feature, (value + next) / F::from_f(2.0)));
                }
            }
        }
        best
    }
}

fn softmax_row<F: Scalar>(margins: &[F], out: &mut [F]) {
    let mx = margins.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for (o, &m) in out.iter_mut().zip(margins.iter()) {
        let e = (m - mx).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Fit a gradient-boosted tree ensemble. `feature_probs = None` uses the
/// uniform distribution through the same sampling path as a prior-weighted
/// fit, so the null configuration is bitwise identical to the plain booster.
pub fn fit_gbt<F: Scalar>(
    x: ArrayView2<'_, F>,
    targets: &Targets<F>,
    feature_probs: Option<&[F]>,
    task: TaskKind,
    params: GbtParams,
    seed: u64,
) -> Result<GbtModel<F>> {
    let (n, p) = x.dim();
    let uniform = vec![F::one() / F::from_usize_(p); p];
    let probs = feature_probs.unwrap_or(&uniform);
    if probs.len() != p {
        return Err(Error::usage("feature probability length must match columns"));
    }
    let probs_f64: Vec<f64> = probs.iter().map(|v| v.to_f()).collect();
    let n_candidates = ((node_feature_fraction(p) * p as f64).ceil() as usize).clamp(1, p);

    let n_outputs = task.n_outputs();
    let base_scores: Vec<F> = match (task, targets) {
        (TaskKind::Regression, Targets::Real(ys)) => {
            vec![ys.iter().copied().sum::<F>() / F::from_usize_(n)]
        }
        (TaskKind::Binary, Targets::Classes(ys)) => {
            let mean = F::from_usize_(ys.iter().sum::<usize>()) / F::from_usize_(n);
            let pbar = mean
                .max(F::from_f(PROB_CLAMP))
                .min(F::one() - F::from_f(PROB_CLAMP));
            vec![(pbar / (F::one() - pbar)).ln()]
        }
        (TaskKind::Multiclass(c), Targets::Classes(_)) => vec![F::zero(); c],
        _ => return Err(Error::usage("targets do not match task kind")),
    };

    let mut margins = Array2::zeros((n, n_outputs));
    for i in 0..n {
        for c in 0..n_outputs {
            margins[[i, c]] = base_scores[c];
        }
    }

    let all_rows: Vec<usize> = (0..n).collect();
    let mut rounds_out: Vec<Vec<Tree<F>>> = Vec::with_capacity(params.rounds);
    let mut grad = Array2::<F>::zeros((n, n_outputs));
    let mut hess = Array2::<F>::zeros((n, n_outputs));
    let mut probs_row = vec![F::zero(); n_outputs];
    for round in 0..params.rounds {
        // gradient/hessian statistics are frozen at the top of the round
        match (task, targets) {
            (TaskKind::Regression, Targets::Real(ys)) => {
                for i in 0..n {
                    grad[[i, 0]] = margins[[i, 0]] - ys[i];
                    hess[[i, 0]] = F::one();
                }
            }
            (TaskKind::Binary, Targets::Classes(ys)) => {
                for i in 0..n {
                    let m = margins[[i, 0]];
                    let prob = if m >= F::zero() {
                        F::one() / (F::one() + (-m).exp())
                    } else {
                        let e = m.exp();
                        e / (F::one() + e)
                    };
                    grad[[i, 0]] = prob - F::from_usize_(ys[i]);
                    hess[[i, 0]] = prob * (F::one() - prob);
                }
            }
            (TaskKind::Multiclass(_), Targets::Classes(ys)) => {
                for i in 0..n {
                    let row: Vec<F> = (0..n_outputs).map(|k| margins[[i, k]]).collect();
                    softmax_row(&row, &mut probs_row);
                    for c in 0..n_outputs {
                        let pc = probs_row[c];
                        grad[[i, c]] = pc - if ys[i] == c { F::one() } else { F::zero() };
                        hess[[i, c]] = pc * (F::one() - pc);
                    }
                }
            }
            _ => unreachable!(),
        }
        let mut round_trees = Vec::with_capacity(n_outputs);
        for c in 0..n_outputs {
            let grad_col: Vec<F> = grad.column(c).to_vec();
            let hess_col: Vec<F> = hess.column(c).to_vec();
            let mut rng = rng_for(seed, "gbt-tree", &[round as u64, c as u64]);
            let mut builder = GbtBuilder {
                x,
                grad: &grad_col,
                hess: &hess_col,
                probs_f64: &probs_f64,
                params,
                n_candidates,
                nodes: Vec::new(),
            };
            let root = builder.build(&all_rows, 0, &mut rng);
            debug_assert_eq!(root, 0);
            let tree = Tree {
                nodes: builder.nodes,
            };
            for i in 0..n {
                margins[[i, c]] += tree.leaf_values(x.row(i))[0];
            }
            round_trees.push(tree);
        }
        rounds_out.push(round_trees);
    }
    Ok(GbtModel {
        task,
        trees: rounds_out,
        base_scores,
        feature_probs: probs.to_vec(),
        rng_seed: seed,
    })
}

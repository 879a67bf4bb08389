//! Metrics and the paired-split summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fraction of exact label matches.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::data("accuracy: length mismatch or empty input"));
    }
    let hits = y_true
        .iter()
        .zip(y_pred)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half; computed with the average-rank statistic.
pub fn auroc<F: Scalar>(y_true: &[usize], scores: &[F]) -> Result<f64> {
    if y_true.len() != scores.len() || y_true.is_empty() {
        return Err(Error::data("auroc: length mismatch or empty input"));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("AUROC undefined: single-class input"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks over tie groups (1-based ranks)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

/// Brute-force pair-counting AUROC; the independent oracle for the rank
/// formula.
pub fn auroc_pair_counting<F: Scalar>(y_true: &[usize], scores: &[F]) -> Result<f64> {
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("AUROC undefined: single-class input"));
    }
    let mut wins = 0.0f64;
    for (i, &yi) in y_true.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in y_true.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_pos * n_neg) as f64)
}

/// Mean squared error.
pub fn mse<F: Scalar>(y_true: &[F], y_pred: &[F]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::data("mse: length mismatch or empty input"));
    }
    let acc: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| {
            let d = a.to_f() - b.to_f();
            d * d
        })
        .sum();
    Ok(acc / y_true.len() as f64)
}

/// One experiment measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub method: String,
    pub train_ratio: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Paired summary of `method` against `baseline` for one metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub baseline: String,
    pub method: String,
    pub n_pairs: usize,
    /// raw metric difference, oriented so positive means improvement
    pub mean_diff: f64,
    pub diff_ci_lo: f64,
    pub diff_ci_hi: f64,
    /// 100 * mean(diff) / mean(baseline error)
    pub improvement_pct: f64,
    pub improvement_ci_lo: f64,
    pub improvement_ci_hi: f64,
    /// fraction of paired splits where the method is at least as good
    pub win_rate: f64,
    pub win_ci_lo: f64,
    pub win_ci_hi: f64,
}

fn is_error_metric(metric: &str) -> bool {
    metric == "mse"
}

/// Baseline error for the improvement denominator: 1 - accuracy,
/// 1 - AUROC, or the raw MSE.
fn baseline_error(metric: &str, value: f64) -> f64 {
    if is_error_metric(metric) {
        value
    } else {
        1.0 - value
    }
}

/// Pair records of `method` and `baseline` by (train_ratio, seed) per
/// metric and summarize improvement and win rate with normal-approximation
/// 95% confidence intervals (Wald for the win rate). Ties count as wins.
pub fn summarize(
    records: &[ExperimentRecord],
    baseline: &str,
    method: &str,
) -> Result<Vec<SummaryRow>> {
    let mut metrics: Vec<String> = records.iter().map(|r| r.metric.clone()).collect();
    metrics.sort();
    metrics.dedup();
    let mut rows = Vec::new();
    for metric in metrics {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for r in records.iter().filter(|r| r.metric == metric && r.method == baseline) {
            if let Some(m) = records.iter().find(|s| {
                s.metric == metric
                    && s.method == method
                    && s.train_ratio == r.train_ratio
                    && s.seed == r.seed
                    && s.dataset == r.dataset
            }) {
                pairs.push((r.value, m.value));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        let diffs: Vec<f64> = pairs
            .iter()
            .map(|&(b, m)| if is_error_metric(&metric) { b - m } else { m - b })
            .collect();
        let mean_diff = diffs.iter().sum::<f64>() / n;
        let sd = if pairs.len() > 1 {
            (diffs.iter().map(|d| (d - mean_diff) * (d - mean_diff)).sum::<f64>() / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let se = sd / n.sqrt();
        let mean_base_err =
            pairs.iter().map(|&(b, _)| baseline_error(&metric, b)).sum::<f64>() / n;
        let scale = if mean_base_err.abs() > 1e-300 {
            100.0 / mean_base_err
        } else {
            0.0
        };
        let wins = pairs
            .iter()
            .zip(&diffs)
            .filter(|&(_, &d)| d >= 0.0)
            .count() as f64;
        let win_rate = wins / n;
        let win_se = (win_rate * (1.0 - win_rate) / n).sqrt();
        rows.push(SummaryRow {
            metric: metric.clone(),
            baseline: baseline.to_string(),
            method: method.to_string(),
            n_pairs: pairs.len(),
            mean_diff,
            diff_ci_lo: mean_diff - 1.96 * se,
            diff_ci_hi: mean_diff + 1.96 * se,
            improvement_pct: mean_diff * scale,
            improvement_ci_lo: (mean_diff - 1.96 * se) * scale,
            improvement_ci_hi: (mean_diff + 1.96 * se) * scale,
            win_rate,
            win_ci_lo: win_rate - 1.96 * win_se,
            win_ci_hi: win_rate + 1.96 * win_se,
        });
    }
    if rows.is_empty() {
        return Err(Error::data(format!(
            "no paired records for '{method}' vs '{baseline}'"
        )));
    }
    Ok(rows)
}

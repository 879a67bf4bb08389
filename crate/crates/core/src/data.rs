//! Dataset ingestion, domain invariants, and column standardization.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fingerprint;
use crate::scalar::Scalar;

/// Prediction task kind. Multiclass carries the class count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Binary,
    Multiclass(usize),
    Regression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    /// Number of output columns a learner emits: 1 for regression and
    /// binary (a single logit), `c` for multiclass.
    pub fn n_outputs(self) -> usize {
        match self {
            TaskKind::Multiclass(c) => c,
            _ => 1,
        }
    }

    pub fn n_classes(self) -> Option<usize> {
        match self {
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(c) => Some(c),
            TaskKind::Regression => None,
        }
    }
}

/// Task kind requested at load time, before the class count is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskRequest {
    Binary,
    Multiclass,
    Regression,
}

/// Targets: contiguous class indices for classification, reals for regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum Targets<F: Scalar> {
    Classes(Vec<usize>),
    Real(Vec<F>),
}

impl<F: Scalar> Targets<F> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> &[usize] {
        match self {
            Targets::Classes(v) => v,
            Targets::Real(_) => panic!("expected classification targets"),
        }
    }

    pub fn reals(&self) -> &[F] {
        match self {
            Targets::Real(v) => v,
            Targets::Classes(_) => panic!("expected regression targets"),
        }
    }
}

/// A standardized-ready tabular dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<F: Scalar> {
    features: Array2<F>,
    targets: Targets<F>,
    feature_names: Vec<String>,
    task: TaskKind,
    /// Class labels as they appeared in the source, indexed by class id.
    class_labels: Vec<String>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        features: Array2<F>,
        targets: Targets<F>,
        feature_names: Vec<String>,
        task: TaskKind,
        class_labels: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::data("empty dataset"));
        }
        if targets.len() != n {
            return Err(Error::data(format!(
                "target length {} does not match {} rows",
                targets.len(),
                n
            )));
        }
        if feature_names.len() != p {
            return Err(Error::data("feature name count does not match columns"));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(Error::data("empty feature name"));
            }
            if !seen.insert(name) {
                return Err(Error::data(format!("duplicate feature name '{name}'")));
            }
        }
        for ((i, j), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite feature value at row {i}, column {}",
                    feature_names[j]
                )));
            }
        }
        match (&targets, task) {
            (Targets::Classes(ys), TaskKind::Binary) | (Targets::Classes(ys), TaskKind::Multiclass(_)) => {
                let c = task.n_classes().unwrap();
                if matches!(task, TaskKind::Binary) && c != 2 {
                    return Err(Error::data("binary task must have exactly 2 classes"));
                }
                let mut present = vec![false; c];
                for &y in ys {
                    if y >= c {
                        return Err(Error::data(format!("class index {y} out of range")));
                    }
                    present[y] = true;
                }
                if present.iter().any(|&ok| !ok) {
                    return Err(Error::data("every class must appear at least once"));
                }
                if class_labels.len() != c {
                    return Err(Error::data("class label count does not match class count"));
                }
            }
            (Targets::Real(ys), TaskKind::Regression) => {
                if ys.iter().any(|v| !v.is_finite()) {
                    return Err(Error::data("non-finite regression target"));
                }
            }
            _ => return Err(Error::data("target kind does not match task kind")),
        }
        Ok(Dataset {
            features,
            targets,
            feature_names,
            task,
            class_labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, F> {
        self.features.view()
    }

    pub fn targets(&self) -> &Targets<F> {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    /// Row-subset copy preserving task metadata. Classification subsets must
    /// retain every class.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), rows);
        let targets = match &self.targets {
            Targets::Classes(ys) => Targets::Classes(rows.iter().map(|&i| ys[i]).collect()),
            Targets::Real(ys) => Targets::Real(rows.iter().map(|&i| ys[i]).collect()),
        };
        Dataset::new(
            features,
            targets,
            self.feature_names.clone(),
            self.task,
            self.class_labels.clone(),
        )
    }

    /// Stable fingerprint over shape, names, and task; used to key caches.
    pub fn fingerprint(&self) -> String {
        let mut bytes: Vec<u8> = Vec::new();
        bytes.extend((self.n_samples() as u64).to_le_bytes());
        bytes.extend((self.n_features() as u64).to_le_bytes());
        for name in &self.feature_names {
            bytes.extend(name.as_bytes());
            bytes.push(0);
        }
        bytes.extend(
            match self.task {
                TaskKind::Binary => "binary".to_string(),
                TaskKind::Multiclass(c) => format!("multiclass{c}"),
                TaskKind::Regression => "regression".to_string(),
            }
            .as_bytes(),
        );
        fingerprint(bytes)
    }
}

/// Column means and population standard deviations; constant columns keep
/// std 1 so they standardize to all zeros instead of blowing up.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Standardizer<F: Scalar> {
    pub means: Array1<F>,
    pub stds: Array1<F>,
}

impl<F: Scalar> Standardizer<F> {
    pub fn fit(x: ArrayView2<'_, F>) -> Self {
        let n = F::from_usize_(x.nrows());
        let means = x.sum_axis(Axis(0)) / n;
        let mut stds = Array1::zeros(x.ncols());
        for j in 0..x.ncols() {
            let mut acc = F::zero();
            for i in 0..x.nrows() {
                let d = x[[i, j]] - means[j];
                acc += d * d;
            }
            let sd = (acc / n).sqrt();
            stds[j] = if sd > F::zero() { sd } else { F::one() };
        }
        Standardizer { means, stds }
    }

    pub fn transform(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut out = x.to_owned();
        for j in 0..out.ncols() {
            let (m, s) = (self.means[j], self.stds[j]);
            for v in out.column_mut(j) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn inverse(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut out = x.to_owned();
        for j in 0..out.ncols() {
            let (m, s) = (self.means[j], self.stds[j]);
            for v in out.column_mut(j) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Nonnegative per-feature importance scores aligned to the feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeaturePrior<F: Scalar> {
    values: Vec<F>,
}

impl<F: Scalar> FeaturePrior<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("feature prior must be non-empty"));
        }
        for (j, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < F::zero() {
                return Err(Error::data(format!(
                    "feature prior entry {j} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(FeaturePrior { values })
    }

    pub fn uniform(p: usize) -> Self {
        FeaturePrior {
            values: vec![F::one(); p],
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(
            self.values
                .iter()
                .flat_map(|v| v.to_f().to_le_bytes()),
        )
    }
}

fn parse_number<F: Scalar>(cell: &str) -> Option<F> {
    cell.trim().parse::<f64>().ok().map(F::from_f)
}

/// Load a dataset from CSV. The first row is the header; `target_column`
/// names the target; all other columns must be numeric. Classification
/// labels may be arbitrary strings and are mapped to contiguous indices in
/// first-appearance order.
pub fn load_dataset<F: Scalar>(
    path: impl AsRef<Path>,
    target_column: &str,
    task: TaskRequest,
) -> Result<Dataset<F>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::data(format!("missing file {}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::data(format!("missing target column '{target_column}'")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::data("dataset has no feature columns"));
    }

    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut raw_targets: Vec<String> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("row {r}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "row {r} has {} cells, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            if c == target_idx {
                raw_targets.push(cell.trim().to_string());
                continue;
            }
            let name = &headers[c];
            let value: F = parse_number(cell).ok_or_else(|| {
                Error::data(format!("non-numeric feature cell at row {r}, column {name}"))
            })?;
            if !value.is_finite() {
                return Err(Error::data(format!(
                    "non-finite feature value at row {r}, column {name}"
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let n = rows.len();
    let p = feature_names.len();
    let mut features = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            features[[i, j]] = *v;
        }
    }

    match task {
        TaskRequest::Regression => {
            let mut ys = Vec::with_capacity(n);
            for (r, cell) in raw_targets.iter().enumerate() {
                let v: F = parse_number(cell)
                    .ok_or_else(|| Error::data(format!("non-numeric target at row {r}")))?;
                ys.push(v);
            }
            Dataset::new(
                features,
                Targets::Real(ys),
                feature_names,
                TaskKind::Regression,
                Vec::new(),
            )
        }
        TaskRequest::Binary | TaskRequest::Multiclass => {
            let mut labels: Vec<String> = Vec::new();
            let mut ys = Vec::with_capacity(n);
            for cell in &raw_targets {
                let idx = match labels.iter().position(|l| l == cell) {
                    Some(idx) => idx,
                    None => {
                        labels.push(cell.clone());
                        labels.len() - 1
                    }
                };
                ys.push(idx);
            }
            if labels.len() < 2 {
                return Err(Error::data(
                    "classification target has a single class".to_string(),
                ));
            }
            let kind = match task {
                TaskRequest::Binary => {
                    if labels.len() != 2 {
                        return Err(Error::data(format!(
                            "binary task requested but target has {} classes",
                            labels.len()
                        )));
                    }
                    TaskKind::Binary
                }
                _ => TaskKind::Multiclass(labels.len()),
            };
            Dataset::new(features, Targets::Classes(ys), feature_names, kind, labels)
        }
    }
}

//! Learner/run configuration and the ensemble dictionary enumeration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four base learner families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Lasso,
    RandomForest,
    Gbt,
    KernelSvm,
}

impl LearnerId {
    pub const ALL: [LearnerId; 4] = [
        LearnerId::Lasso,
        LearnerId::RandomForest,
        LearnerId::Gbt,
        LearnerId::KernelSvm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerId::Lasso => "lasso",
            LearnerId::RandomForest => "random_forest",
            LearnerId::Gbt => "gbt",
            LearnerId::KernelSvm => "kernel_svm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(LearnerId::Lasso),
            "random_forest" => Ok(LearnerId::RandomForest),
            "gbt" => Ok(LearnerId::Gbt),
            "kernel_svm" => Ok(LearnerId::KernelSvm),
            other => Err(Error::usage(format!("unknown learner '{other}'"))),
        }
    }
}

impl fmt::Display for LearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a transformed prior enters a learner's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Penalty,
    FeatureScale,
    FeatureSample,
    InstanceWeight,
}

/// Adapters each learner admits. Random forests take the prior through both
/// feature sampling (alpha) and instance weights (beta).
pub fn admissible_adapters(learner: LearnerId) -> &'static [AdapterKind] {
    match learner {
        LearnerId::Lasso => &[AdapterKind::Penalty],
        LearnerId::Gbt => &[AdapterKind::FeatureSample],
        LearnerId::RandomForest => &[AdapterKind::InstanceWeight, AdapterKind::FeatureSample],
        LearnerId::KernelSvm => &[AdapterKind::FeatureScale],
    }
}

fn primary_adapter(learner: LearnerId) -> AdapterKind {
    match learner {
        LearnerId::Lasso => AdapterKind::Penalty,
        LearnerId::Gbt => AdapterKind::FeatureSample,
        LearnerId::RandomForest => AdapterKind::FeatureSample,
        LearnerId::KernelSvm => AdapterKind::FeatureScale,
    }
}

fn supports_instance_weights(learner: LearnerId) -> bool {
    admissible_adapters(learner).contains(&AdapterKind::InstanceWeight)
}

/// One entry of the ensemble dictionary: a learner with its prior strengths
/// and hyperparameter overrides. `(alpha, beta) = (0, 0)` is the null
/// configuration recovering the prior-free learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub learner: LearnerId,
    pub adapter: AdapterKind,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub hyper: BTreeMap<String, f64>,
}

impl LearnerConfig {
    pub fn new(learner: LearnerId, alpha: f64, beta: f64) -> Self {
        LearnerConfig {
            learner,
            adapter: primary_adapter(learner),
            alpha,
            beta,
            hyper: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !admissible_adapters(self.learner).contains(&self.adapter) {
            return Err(Error::usage(format!(
                "adapter {:?} not admissible for {}",
                self.adapter, self.learner
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::usage("alpha must be finite and >= 0"));
        }
        if !self.beta.is_finite() || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::usage("beta must lie in [0, 1]"));
        }
        if self.beta != 0.0 && !supports_instance_weights(self.learner) {
            return Err(Error::usage(format!(
                "{} does not support instance weights (beta must be 0)",
                self.learner
            )));
        }
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    pub fn hyper_or(&self, key: &str, default: f64) -> f64 {
        self.hyper.get(key).copied().unwrap_or(default)
    }

    /// Short label used in logs and report columns.
    pub fn label(&self) -> String {
        format!("{}_a{}_b{}", self.learner, self.alpha, self.beta)
    }
}

/// Instance-weight construction mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltMode {
    AffineBlend,
    ExactTilt,
}

/// Standardization scope inside the out-of-fold engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeScope {
    Global,
    PerFold,
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k_folds: usize,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub learners: Vec<LearnerId>,
    pub meta_reg_grid: Vec<f64>,
    pub seed: u64,
    pub epsilon: f64,
    pub q: u32,
    pub tilt_mode: TiltMode,
    pub tilt_target_fraction: f64,
    pub standardize_scope: StandardizeScope,
}

pub fn default_meta_reg_grid() -> Vec<f64> {
    // 10 log-spaced values in [1e-4, 1e1]
    (0..10)
        .map(|i| 10f64.powf(-4.0 + 5.0 * i as f64 / 9.0))
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k_folds: 5,
            alpha_grid: vec![0.0, 1.0, 2.0],
            beta_grid: vec![0.0, 0.75, 1.0],
            learners: LearnerId::ALL.to_vec(),
            meta_reg_grid: default_meta_reg_grid(),
            seed: 0,
            epsilon: 1e-8,
            q: 1,
            tilt_mode: TiltMode::AffineBlend,
            tilt_target_fraction: 0.25,
            standardize_scope: StandardizeScope::PerFold,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::usage("k_folds must be >= 2"));
        }
        if !self.alpha_grid.contains(&0.0) {
            return Err(Error::usage("alpha_grid must contain 0"));
        }
        if !self.beta_grid.contains(&0.0) {
            return Err(Error::usage("beta_grid must contain 0"));
        }
        if self.alpha_grid.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::usage("alpha_grid entries must be finite and >= 0"));
        }
        if self
            .beta_grid
            .iter()
            .any(|b| !b.is_finite() || !(0.0..=1.0).contains(b))
        {
            return Err(Error::usage("beta_grid entries must lie in [0, 1]"));
        }
        if self.meta_reg_grid.is_empty()
            || self.meta_reg_grid.iter().any(|r| !r.is_finite() || *r <= 0.0)
        {
            return Err(Error::usage("meta_reg_grid must hold positive reals"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::usage("epsilon must be positive"));
        }
        if self.q < 1 {
            return Err(Error::usage("q must be >= 1"));
        }
        if !(self.tilt_target_fraction > 0.0 && self.tilt_target_fraction <= 1.0) {
            return Err(Error::usage("tilt_target_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Grid values sorted ascending with exact duplicates removed.
    fn sorted_grid(grid: &[f64]) -> Vec<f64> {
        let mut g = grid.to_vec();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.dedup();
        g
    }
}

/// Enumerate the ensemble dictionary: the cartesian product of learners and
/// admissible `(alpha, beta)` values in deterministic `(learner, alpha,
/// beta)` order. Beta varies only for instance-weight-capable learners.
pub fn enumerate_dictionary(rc: &RunConfig) -> Result<Vec<LearnerConfig>> {
    rc.validate()?;
    if rc.learners.is_empty() {
        return Err(Error::usage("empty learner set"));
    }
    let mut learners = rc.learners.clone();
    learners.sort();
    learners.dedup();
    let alphas = RunConfig::sorted_grid(&rc.alpha_grid);
    let betas = RunConfig::sorted_grid(&rc.beta_grid);
    let mut out = Vec::new();
    for learner in learners {
        let beta_values: &[f64] = if supports_instance_weights(learner) {
            &betas
        } else {
            &[0.0]
        };
        for &alpha in &alphas {
            for &beta in beta_values {
                let cfg = LearnerConfig::new(learner, alpha, beta);
                cfg.validate()?;
                out.push(cfg);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Run-config file (one section per module; unknown keys are an error)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCore {
    k_folds: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePriors {
    alpha_grid: Option<Vec<f64>>,
    beta_grid: Option<Vec<f64>>,
    epsilon: Option<f64>,
    q: Option<u32>,
    tilt_mode: Option<TiltMode>,
    tilt_target_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLearners {
    enabled: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStacking {
    meta_reg_grid: Option<Vec<f64>>,
    standardize_scope: Option<StandardizeScope>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    #[serde(default)]
    core: FileCore,
    #[serde(default)]
    priors: FilePriors,
    #[serde(default)]
    learners: FileLearners,
    #[serde(default)]
    stacking: FileStacking,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RunConfigFile =
            toml::from_str(text).map_err(|e| Error::usage(format!("run config: {e}")))?;
        let mut rc = RunConfig::default();
        if let Some(k) = file.core.k_folds {
            rc.k_folds = k;
        }
        if let Some(s) = file.core.seed {
            rc.seed = s;
        }
        if let Some(g) = file.priors.alpha_grid {
            rc.alpha_grid = g;
        }
        if let Some(g) = file.priors.beta_grid {
            rc.beta_grid = g;
        }
        if let Some(e) = file.priors.epsilon {
            rc.epsilon = e;
        }
        if let Some(q) = file.priors.q {
            rc.q = q;
        }
        if let Some(m) = file.priors.tilt_mode {
            rc.tilt_mode = m;
        }
        if let Some(t) = file.priors.tilt_target_fraction {
            rc.tilt_target_fraction = t;
        }
        if let Some(names) = file.learners.enabled {
            let mut ids = Vec::new();
            for name in names {
                ids.push(LearnerId::parse(&name)?);
            }
            rc.learners = ids;
        }
        if let Some(g) = file.stacking.meta_reg_grid {
            rc.meta_reg_grid = g;
        }
        if let Some(s) = file.stacking.standardize_scope {
            rc.standardize_scope = s;
        }
        rc.validate()?;
        Ok(rc)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }
}

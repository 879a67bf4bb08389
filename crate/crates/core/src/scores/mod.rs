//! Feature-prior acquisition: scores files on disk, and the batched
//! LLM-endpoint client with validation, retries, trial averaging, and a
//! transcript cache.

pub mod cache;
pub mod client;
pub mod parse;

use std::path::Path;

use serde::Deserialize;

use crate::data::FeaturePrior;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use cache::{CacheEntry, ScoreCache};
pub use client::{fetch_scores, FetchOutcome, HttpTransport, Transport};
pub use parse::{extract_json_candidates, parse_and_validate};

pub const DEFAULT_BATCH_SIZE: usize = 40;
pub const DEFAULT_TRIALS: usize = 5;
pub const DEFAULT_RETRIES: usize = 5;
pub const DEFAULT_CONCURRENCY: usize = 5;

/// The request grid: ordered feature-name batches plus retry/trial knobs.
#[derive(Debug, Clone)]
pub struct ScoreRequestPlan {
    pub batches: Vec<Vec<String>>,
    pub batch_size: usize,
    pub trials: usize,
    pub retries_per_batch: usize,
    pub concurrency: usize,
}

/// Partition the ordered feature list into batches of `batch_size` (the
/// last batch may be short).
pub fn plan_batches(feature_names: &[String], batch_size: usize) -> Result<ScoreRequestPlan> {
    if batch_size < 1 {
        return Err(Error::usage("batch size must be >= 1"));
    }
    if feature_names.is_empty() {
        return Err(Error::usage("no feature names to score"));
    }
    let batches = feature_names
        .chunks(batch_size)
        .map(|chunk| chunk.to_vec())
        .collect();
    Ok(ScoreRequestPlan {
        batches,
        batch_size,
        trials: DEFAULT_TRIALS,
        retries_per_batch: DEFAULT_RETRIES,
        concurrency: DEFAULT_CONCURRENCY,
    })
}

/// Batch size that yields at most ceil(sqrt(p)) batches.
pub fn sqrt_batch_size(p: usize) -> usize {
    let target_batches = (p as f64).sqrt().ceil() as usize;
    p.div_ceil(target_batches.max(1)).max(1)
}

/// System prompt, user template, and the per-dataset context/task strings.
/// The template must contain `{{context}}`, `{{task}}`, and `{{features}}`
/// exactly once each.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub user_template: String,
    pub context: String,
    pub task: String,
}

pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt.txt");
pub const DEFAULT_USER_TEMPLATE: &str = include_str!("../../assets/user_prompt_template.txt");

impl PromptBundle {
    pub fn with_defaults(context: &str, task: &str) -> Self {
        PromptBundle {
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            user_template: DEFAULT_USER_TEMPLATE.to_string(),
            context: context.to_string(),
            task: task.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for placeholder in ["{{context}}", "{{task}}", "{{features}}"] {
            let count = self.user_template.matches(placeholder).count();
            if count != 1 {
                return Err(Error::usage(format!(
                    "user template must contain {placeholder} exactly once (found {count})"
                )));
            }
        }
        Ok(())
    }

    /// Render the user prompt for one batch, feature list in bracketed
    /// array syntax. Retries carry the attempt index as a prefix.
    pub fn render_user(&self, batch: &[String], attempt: usize) -> String {
        let features = format!(
            "[{}]",
            batch
                .iter()
                .map(|n| format!("\"{}\"", n.replace('"', "\\\"")))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let body = self
            .user_template
            .replace("{{context}}", &self.context)
            .replace("{{task}}", &self.task)
            .replace("{{features}}", &features);
        if attempt == 0 {
            body
        } else {
            format!("Retry attempt {attempt}.\n\n{body}")
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScoresFile {
    scores: std::collections::BTreeMap<String, f64>,
}

/// Load a feature prior from a scores JSON file. Names are matched
/// case-insensitively; every feature must be present; negative scores are
/// clamped to zero with a warning.
pub fn load_scores_file<F: Scalar>(
    path: impl AsRef<Path>,
    feature_names: &[String],
) -> Result<FeaturePrior<F>> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.as_ref().display())))?;
    let doc: ScoresFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("malformed scores file: {e}")))?;
    let mut lowered = std::collections::BTreeMap::new();
    for (k, v) in doc.scores {
        if !v.is_finite() {
            return Err(Error::data(format!("non-numeric score for '{k}'")));
        }
        lowered.insert(k.to_lowercase(), v);
    }
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        match lowered.get(&name.to_lowercase()) {
            Some(&v) => {
                let clamped = if v < 0.0 {
                    log::warn!("negative score for '{name}' clamped to 0");
                    0.0
                } else {
                    v
                };
                values.push(F::from_f(clamped));
            }
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "scores file is missing features: {}",
            missing.join(", ")
        )));
    }
    FeaturePrior::new(values)
}

/// Write a prior as a scores JSON file aligned to the feature names.
pub fn write_scores_file<F: Scalar>(
    path: impl AsRef<Path>,
    feature_names: &[String],
    prior: &FeaturePrior<F>,
) -> Result<()> {
    let mut map = serde_json::Map::new();
    for (name, value) in feature_names.iter().zip(prior.values()) {
        map.insert(
            name.clone(),
            serde_json::Value::from(value.to_f()),
        );
    }
    let doc = serde_json::json!({ "scores": map });
    std::fs::write(path.as_ref(), serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn batch_plan_sizes() {
        let names: Vec<String> = (0..100).map(|i| format!("f{i}")).collect();
        let plan = plan_batches(&names, 40).unwrap();
        let sizes: Vec<usize> = plan.batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![40, 40, 20]);
        let rejoined: Vec<String> = plan.batches.concat();
        assert_eq!(rejoined, names);

        let names: Vec<String> = (0..40).map(|i| format!("f{i}")).collect();
        assert_eq!(plan_batches(&names, 40).unwrap().batches.len(), 1);

        // 1000 features -> 25 batches; 5 trials -> 125 requests
        let names: Vec<String> = (0..1000).map(|i| format!("f{i}")).collect();
        let plan = plan_batches(&names, 40).unwrap();
        assert_eq!(plan.batches.len(), 25);
        assert_eq!(plan.batches.len() * plan.trials, 125);
    }

    #[test]
    fn sqrt_batching() {
        // p = 1000: ceil(sqrt(p)) = 32 batches -> size 32
        assert_eq!(sqrt_batch_size(1000), 32);
        assert_eq!(sqrt_batch_size(1), 1);
        let names: Vec<String> = (0..1000).map(|i| format!("f{i}")).collect();
        let plan = plan_batches(&names, sqrt_batch_size(1000)).unwrap();
        assert!(plan.batches.len() <= 32);
    }

    #[test]
    fn prompt_rendering_and_validation() {
        let bundle = PromptBundle::with_defaults("tumor gene expression", "classify X vs Y");
        bundle.validate().unwrap();
        let rendered = bundle.render_user(&["brca1".to_string(), "tp53".to_string()], 0);
        assert!(rendered.contains("[\"brca1\", \"tp53\"]"));
        assert!(rendered.contains("tumor gene expression"));
        assert!(!rendered.contains("{{"));
        let retried = bundle.render_user(&["a".to_string()], 2);
        assert!(retried.starts_with("Retry attempt 2."));

        let bad = PromptBundle {
            user_template: "no placeholders".into(),
            ..bundle
        };
        assert!(bad.validate().is_err());
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn scores_file_round_trip_and_errors() {
        let names = vec!["age".to_string(), "income".to_string()];
        let f = write_tmp(r#"{"scores": {"age": 0.9, "income": 0.3}}"#);
        let prior: FeaturePrior<f64> = load_scores_file(f.path(), &names).unwrap();
        assert_eq!(prior.values(), &[0.9, 0.3]);

        // mixed case resolves after lowercasing both sides
        let f = write_tmp(r#"{"scores": {"AGE": 0.9, "Income": 0.3}}"#);
        let prior: FeaturePrior<f64> = load_scores_file(f.path(), &names).unwrap();
        assert_eq!(prior.values(), &[0.9, 0.3]);

        let f = write_tmp(r#"{"scores": {"age": 0.9}}"#);
        let err = load_scores_file::<f64>(f.path(), &names).unwrap_err();
        assert!(err.to_string().contains("income"), "{err}");

        let f = write_tmp(r#"{"scores": "nope"}"#);
        assert!(load_scores_file::<f64>(f.path(), &names).is_err());

        // negative scores clamp to zero
        let f = write_tmp(r#"{"scores": {"age": -0.5, "income": 0.3}}"#);
        let prior: FeaturePrior<f64> = load_scores_file(f.path(), &names).unwrap();
        assert_eq!(prior.values(), &[0.0, 0.3]);
    }
}

//! Transcript cache: one JSON file per (trial, batch) holding the request,
//! raw response, and parse outcome. Warm-cache reruns replay without any
//! network traffic.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub dataset_fingerprint: String,
    pub model_id: String,
    pub trial: usize,
    pub batch: usize,
    pub system_prompt: String,
    pub user_prompt: String,
    pub raw_response: String,
    pub parse_outcome: String,
    pub scores: BTreeMap<String, f64>,
    /// attempts consumed, including the successful one
    pub attempts: usize,
}

/// Append-only per-run cache directory keyed by dataset fingerprint and
/// model id.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    dir: PathBuf,
    dataset_fingerprint: String,
    model_id: String,
}

impl ScoreCache {
    pub fn open(
        dir: impl AsRef<Path>,
        dataset_fingerprint: &str,
        model_id: &str,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(ScoreCache {
            dir: dir.as_ref().to_path_buf(),
            dataset_fingerprint: dataset_fingerprint.to_string(),
            model_id: model_id.to_string(),
        })
    }

    fn path_for(&self, trial: usize, batch: usize) -> PathBuf {
        self.dir.join(format!("t{trial}_b{batch}.json"))
    }

    /// A cached entry for (trial, batch), if present. An entry written for
    /// a different dataset or model is an error rather than a silent miss.
    pub fn load(&self, trial: usize, batch: usize) -> Result<Option<CacheEntry>> {
        let path = self.path_for(trial, batch);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("corrupt cache entry {}: {e}", path.display())))?;
        if entry.dataset_fingerprint != self.dataset_fingerprint
            || entry.model_id != self.model_id
        {
            return Err(Error::data(format!(
                "cache entry {} belongs to a different dataset/model (found {}/{}, expected {}/{})",
                path.display(),
                entry.dataset_fingerprint,
                entry.model_id,
                self.dataset_fingerprint,
                self.model_id
            )));
        }
        Ok(Some(entry))
    }

    pub fn store(&self, entry: &CacheEntry) -> Result<()> {
        let path = self.path_for(entry.trial, entry.batch);
        let text = serde_json::to_string_pretty(entry)
            .map_err(|e| Error::data(format!("cache serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

//! Versioned model archive: a small magic/version header, a greppable JSON
//! metadata block, and a binary payload with the full model state.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statsformer::Model64;

const MAGIC: &[u8; 8] = b"SFMODEL\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ArchiveMetadata {
    pub format_version: u32,
    pub task: String,
    pub n_features: usize,
    pub n_members: usize,
    pub seed: u64,
    pub prior_fingerprint: String,
    pub created_unix: u64,
}

pub fn save_model(path: impl AsRef<Path>, model: &Model64) -> anyhow::Result<()> {
    let metadata = ArchiveMetadata {
        format_version: FORMAT_VERSION,
        task: format!("{:?}", model.task),
        n_features: model.feature_names.len(),
        n_members: model.members.len(),
        seed: model.provenance.seed,
        prior_fingerprint: model.provenance.prior_fingerprint.clone(),
        created_unix: model.provenance.created_unix,
    };
    let meta_bytes = serde_json::to_vec_pretty(&metadata)?;
    let payload = bincode::serialize(model)?;
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(MAGIC)?;
    file.write_all(&FORMAT_VERSION.to_le_bytes())?;
    file.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&meta_bytes)?;
    file.write_all(&(payload.len() as u64).to_le_bytes())?;
    file.write_all(&payload)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> anyhow::Result<(ArchiveMetadata, Model64)> {
    let mut file = std::fs::File::open(path.as_ref())
        .map_err(|e| anyhow::anyhow!("cannot open {}: {e}", path.as_ref().display()))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        anyhow::bail!("{} is not a model archive", path.as_ref().display());
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        anyhow::bail!("unsupported archive version {version} (expected {FORMAT_VERSION})");
    }
    let mut len = [0u8; 8];
    file.read_exact(&mut len)?;
    let meta_len = u64::from_le_bytes(len) as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    file.read_exact(&mut meta_bytes)?;
    let metadata: ArchiveMetadata = serde_json::from_slice(&meta_bytes)?;
    file.read_exact(&mut len)?;
    let payload_len = u64::from_le_bytes(len) as usize;
    let mut payload = vec![0u8; payload_len];
    file.read_exact(&mut payload)?;
    let model: Model64 = bincode::deserialize(&payload)?;
    Ok((metadata, model))
}

//! Checkpoint files: magic, format version, JSON manifest, then every
//! parameter as raw little-endian `f64` in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, TrainOptions};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GFLOWCKP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Seed of the parameter initialization.
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub training: Option<TrainOptions>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    params: Vec<ParamEntry>,
    meta: CheckpointMeta,
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let manifest = Manifest {
        config: model.config().clone(),
        params: model
            .param_names()
            .iter()
            .zip(model.params())
            .map(|(name, p)| ParamEntry {
                name: name.clone(),
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&manifest).map_err(std::io::Error::other)?;
    let mut bytes = Vec::with_capacity(20 + json.len() + 8 * model.parameter_count());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for p in model.params() {
        for v in p.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(message: &str) -> Error {
    Error::Schema {
        path: "checkpoint".into(),
        message: message.into(),
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + len).ok_or_else(|| corrupt("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))?;

    let mut model = Model::new(manifest.config, manifest.meta.seed)?;
    if manifest.params.len() != model.params().len() {
        return Err(corrupt("parameter list does not match the configuration"));
    }
    let mut offset = 20 + len;
    for ((entry, name), p) in manifest.params.iter().zip(model.names.clone()).zip(model.params_mut()) {
        if entry.name != name || (entry.rows, entry.cols) != p.shape() {
            return Err(corrupt(&format!("unexpected parameter {}", entry.name)));
        }
        let n = entry.rows * entry.cols;
        let raw = bytes.get(offset..offset + 8 * n).ok_or_else(|| corrupt("truncated parameters"))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        *p = Tensor::from_vec(entry.rows, entry.cols, data)?;
        offset += 8 * n;
    }
    if offset != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((model, manifest.meta))
}

impl Model {
    /// Loads a checkpoint that must hold exactly `expected`'s architecture.
    pub fn load_as(path: &Path, expected: &ModelConfig) -> Result<(Model, CheckpointMeta)> {
        let (model, meta) = load_checkpoint(path)?;
        if model.config() != expected {
            let describe = |c: &ModelConfig| serde_json::to_string(c).unwrap_or_else(|_| c.kind().name().into());
            return Err(Error::ConfigMismatch {
                found: describe(model.config()),
                expected: describe(expected),
            });
        }
        Ok((model, meta))
    }
}

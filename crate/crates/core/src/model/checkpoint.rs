//! Checkpoint format: a JSON manifest (config, parameter names and shapes,
//! training step) next to a raw little-endian f32 blob in manifest order.

use crate::error::{CoreError, Result};
use crate::model::config::ModelConfig;
use crate::model::forward::Model;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub step: usize,
    pub ema: bool,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
}

pub fn save_checkpoint(dir: &Path, model: &Model<f32>, step: usize, ema: bool, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let manifest = CheckpointManifest {
        config: model.config.clone(),
        step,
        ema,
        seed,
        params: model
            .params
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), shape: p.shape.clone() })
            .collect(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CoreError::Malformed { path: manifest_path.display().to_string(), detail: e.to_string() })?;
    std::fs::write(&manifest_path, json)
        .map_err(|e| CoreError::io(manifest_path.display().to_string(), e))?;

    let blob_path = dir.join(PARAMS_FILE);
    let mut blob = Vec::with_capacity(model.params.value_count() * 4);
    for p in model.params.iter() {
        for &v in &p.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(&blob_path)
        .map_err(|e| CoreError::io(blob_path.display().to_string(), e))?;
    f.write_all(&blob)
        .map_err(|e| CoreError::io(blob_path.display().to_string(), e))
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| CoreError::io(manifest_path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CoreError::Malformed {
        path: manifest_path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model<f32>, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    // Rebuild the parameter skeleton from the config, then overwrite values.
    let mut model: Model<f32> = Model::build(manifest.config.clone(), manifest.seed)?;

    if model.params.len() != manifest.params.len() {
        return Err(CoreError::Checkpoint(format!(
            "manifest lists {} parameters, model has {}",
            manifest.params.len(),
            model.params.len()
        )));
    }
    for (i, entry) in manifest.params.iter().enumerate() {
        let p = model.params.get(i);
        if p.name != entry.name || p.shape != entry.shape {
            return Err(CoreError::Checkpoint(format!(
                "parameter {i} mismatch: manifest has {} {:?}, model has {} {:?}",
                entry.name, entry.shape, p.name, p.shape
            )));
        }
    }

    let blob_path = dir.join(PARAMS_FILE);
    let mut bytes = Vec::new();
    std::fs::File::open(&blob_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(blob_path.display().to_string(), e))?;
    let expected = model.params.value_count() * 4;
    if bytes.len() != expected {
        return Err(CoreError::Checkpoint(format!(
            "parameter blob holds {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut flat = Vec::with_capacity(model.params.value_count());
    for chunk in bytes.chunks_exact(4) {
        flat.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    model.params.unflatten(&flat)?;
    Ok((model, manifest))
}


//! `phaedra tokenize` / `phaedra detokenize`: move between field shards and
//! token files. Detokenized reconstructions are in normalized space; `eval`
//! is the command that denormalizes against dataset statistics.

use crate::config::write_snapshot;
use crate::Globals;
use anyhow::{bail, Context, Result};
use phaedra_core::datagen::{Dataset, Split};
use phaedra_core::field::normalize;
use phaedra_core::model::{load_checkpoint, Model, TokenizedSample};
use phaedra_core::quantizer::{read_token_file, write_token_file};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
pub struct TokensIndex {
    pub variant: String,
    pub latent_h: usize,
    pub latent_w: usize,
    pub count: usize,
    pub files: Vec<String>,
    pub source_data: String,
    pub split: String,
}

/// Resolve a checkpoint directory: accept either a checkpoint itself or a
/// training output directory, preferring the EMA weights for evaluation.
pub fn resolve_checkpoint(dir: &Path) -> PathBuf {
    if dir.join("manifest.json").exists() {
        return dir.to_path_buf();
    }
    let ema = dir.join("final_ema");
    if ema.join("manifest.json").exists() {
        return ema;
    }
    dir.join("final")
}

pub fn run_tokenize(globals: &Globals, checkpoint: &Path, data: &Path, split: &str) -> Result<()> {
    let split = Split::parse(split)?;
    let ckpt_dir = resolve_checkpoint(checkpoint);
    let (model, _manifest) = load_checkpoint(&ckpt_dir)?;
    let ds = Dataset::load(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let stats = ds.manifest.stats();
    let samples = ds.split(split);
    if samples.is_empty() {
        bail!("split has no samples");
    }
    std::fs::create_dir_all(&globals.out)?;

    let mut files = Vec::with_capacity(samples.len());
    let mut latent = (0usize, 0usize);
    for (i, field) in samples.iter().enumerate() {
        let tokens = model.encode(&normalize(field, &stats)?)?;
        latent = (tokens.latent_h, tokens.latent_w);
        let name = format!("sample_{i:05}.phtk");
        write_token_file(&globals.out.join(&name), &tokens.streams)?;
        files.push(name);
    }

    let index = TokensIndex {
        variant: model.config.variant.as_str().to_string(),
        latent_h: latent.0,
        latent_w: latent.1,
        count: files.len(),
        files,
        source_data: data.display().to_string(),
        split: format!("{split:?}").to_lowercase(),
    };
    std::fs::write(
        globals.out.join("tokens_index.json"),
        serde_json::to_string_pretty(&index)?,
    )?;
    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "tokenize",
            "checkpoint": ckpt_dir.display().to_string(),
            "data": data.display().to_string(),
            "split": index.split,
            "seed": globals.seed,
        }),
    )?;
    println!("tokenized {} samples into {}", index.count, globals.out.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReconManifest {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Reconstructions are in normalized space.
    pub normalized: bool,
    pub shard: String,
}

pub fn run_detokenize(globals: &Globals, checkpoint: &Path, tokens_dir: &Path) -> Result<()> {
    let ckpt_dir = resolve_checkpoint(checkpoint);
    let (model, _manifest) = load_checkpoint(&ckpt_dir)?;
    let index_path = tokens_dir.join("tokens_index.json");
    let index: TokensIndex = serde_json::from_str(
        &std::fs::read_to_string(&index_path)
            .with_context(|| format!("reading {}", index_path.display()))?,
    )?;
    if index.variant != model.config.variant.as_str() {
        bail!(
            "tokens were produced by variant {}, checkpoint is {}",
            index.variant,
            model.config.variant.as_str()
        );
    }
    std::fs::create_dir_all(&globals.out)?;

    let mut blob: Vec<u8> = Vec::new();
    let mut shape = (0usize, 0usize, 0usize);
    for name in &index.files {
        let streams = read_token_file(&tokens_dir.join(name))?;
        let sample = TokenizedSample {
            variant: model.config.variant,
            latent_h: index.latent_h,
            latent_w: index.latent_w,
            streams,
        };
        let recon = model.decode(&sample)?;
        shape = (recon.channels, recon.height, recon.width);
        for &v in &recon.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let shard_name = "recon_00000.bin";
    std::fs::write(globals.out.join(shard_name), &blob)?;
    let manifest = ReconManifest {
        count: index.count,
        channels: shape.0,
        height: shape.1,
        width: shape.2,
        normalized: true,
        shard: shard_name.to_string(),
    };
    std::fs::write(
        globals.out.join("recon_manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "detokenize",
            "checkpoint": ckpt_dir.display().to_string(),
            "tokens": tokens_dir.display().to_string(),
            "seed": globals.seed,
        }),
    )?;
    println!("detokenized {} samples into {}", index.count, globals.out.display());
    Ok(())
}

/// In-process reconstruction used by round-trip verification: the shard an
/// equivalent tokenize/detokenize pipeline must reproduce bit for bit.
pub fn reference_recon_blob(model: &Model<f32>, fields: &[phaedra_core::Field]) -> Result<Vec<u8>> {
    let mut blob = Vec::new();
    for f in fields {
        let recon = model.reconstruct(f)?;
        for &v in &recon.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(blob)
}

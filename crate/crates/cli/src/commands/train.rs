//! `phaedra train`: fit a tokenizer on one or more datasets and write
//! checkpoints plus the step log.

use crate::config::{write_snapshot, KvConfig};
use crate::Globals;
use anyhow::{bail, Context, Result};
use phaedra_core::datagen::{Dataset, Split};
use phaedra_core::field::normalize;
use phaedra_core::model::Model;
use phaedra_core::trainer::train;
use std::path::PathBuf;

pub fn run(globals: &Globals, data: &[PathBuf], overrides: &[String]) -> Result<()> {
    let mut kv = match &globals.config {
        Some(path) => KvConfig::from_file(path)?,
        None => KvConfig::default(),
    };
    kv.apply_overrides(overrides)?;

    let model_cfg = kv.model_config()?;
    let run_cfg = kv.train_config(globals.seed, globals.threads)?;

    // Load every dataset and pool the normalized training samples. Each
    // sample is standardized by its own dataset's statistics.
    let mut samples: Vec<Vec<f32>> = Vec::new();
    for dir in data {
        let ds = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
        if ds.manifest.height != model_cfg.input_resolution
            || ds.manifest.width != model_cfg.input_resolution
        {
            bail!(
                "dataset {} is {}x{} but the model expects {}",
                dir.display(),
                ds.manifest.height,
                ds.manifest.width,
                model_cfg.input_resolution
            );
        }
        let stats = ds.manifest.stats();
        for field in ds.split(Split::Train) {
            samples.push(normalize(field, &stats)?.data);
        }
    }
    if samples.is_empty() {
        bail!("no training samples found in the given datasets");
    }

    let mut model: Model<f32> = Model::build(model_cfg.clone(), globals.seed)?;
    println!(
        "training {} ({} parameters) on {} samples for {} steps",
        model.config.variant.as_str(),
        model.param_count(),
        samples.len(),
        run_cfg.steps
    );

    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "train",
            "model": model_cfg,
            "run": run_cfg,
            "data": data.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "seed": globals.seed,
            "threads": globals.threads,
        }),
    )?;

    let outcome = train(&mut model, &samples, &run_cfg, Some(&globals.out))?;
    if let Some(last) = outcome.records.last() {
        println!(
            "final step {}: loss {:.6} (rec {:.6}, commit {:.6}/{:.6})",
            last.step, last.loss_total, last.loss_rec, last.loss_commit_mu, last.loss_commit_alpha
        );
    }
    Ok(())
}

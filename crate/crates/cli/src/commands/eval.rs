//! `phaedra eval`: run the metric suite for one checkpoint on one dataset
//! split. Writes report.json, report.csv, and spectrum.csv.

use crate::commands::tokenize::resolve_checkpoint;
use crate::config::write_snapshot;
use crate::Globals;
use anyhow::{Context, Result};
use phaedra_core::datagen::{Dataset, Split};
use phaedra_core::evaluation::evaluate;
use phaedra_core::model::load_checkpoint;
use std::path::Path;

pub fn run(globals: &Globals, checkpoint: &Path, data: &Path, split: &str) -> Result<()> {
    let split = Split::parse(split)?;
    let ckpt_dir = resolve_checkpoint(checkpoint);
    let (model, ckpt_manifest) = load_checkpoint(&ckpt_dir)?;
    let ds = Dataset::load(data).with_context(|| format!("loading dataset {}", data.display()))?;

    let artifacts = evaluate(&model, &ds, split, globals.threads)?;
    std::fs::create_dir_all(&globals.out)?;

    let report_json = serde_json::json!({
        "model": artifacts.summary.model,
        "dataset": artifacts.summary.dataset,
        "split": artifacts.summary.split,
        "checkpoint": ckpt_dir.display().to_string(),
        "checkpoint_step": ckpt_manifest.step,
        "ema": ckpt_manifest.ema,
        "metrics": artifacts.summary.metrics,
        "error_bound": artifacts.summary.error_bound,
    });
    std::fs::write(
        globals.out.join("report.json"),
        serde_json::to_string_pretty(&report_json)?,
    )?;

    let csv = format!(
        "model,dataset,split,{}\n{},{},{},{}\n",
        phaedra_core::metrics::MetricsReport::CSV_HEADER,
        artifacts.summary.model,
        artifacts.summary.dataset,
        artifacts.summary.split,
        artifacts.summary.metrics.csv_row()
    );
    std::fs::write(globals.out.join("report.csv"), csv)?;

    let (truth, recon) = &artifacts.spectrum;
    let mut spectrum = String::from("k,E_truth,E_recon\n");
    for (k, (a, b)) in truth.iter().zip(recon.iter()).enumerate() {
        spectrum.push_str(&format!("{k},{a},{b}\n"));
    }
    std::fs::write(globals.out.join("spectrum.csv"), spectrum)?;

    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "eval",
            "checkpoint": ckpt_dir.display().to_string(),
            "data": data.display().to_string(),
            "split": artifacts.summary.split,
            "seed": globals.seed,
            "threads": globals.threads,
        }),
    )?;

    let m = &artifacts.summary.metrics;
    println!(
        "{} on {}: nMAE {:.4}, nRMSE {:.4}, dsigma2 {:.3}, gamma_min {:.2}",
        artifacts.summary.model, artifacts.summary.dataset, m.nmae, m.nrmse, m.delta_sigma2_loc, m.gamma_min
    );
    Ok(())
}

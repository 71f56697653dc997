//! `phaedra report`: merge evaluation outputs into one comparison table,
//! one row per (model, dataset), with stable ordering.

use crate::config::write_snapshot;
use crate::Globals;
use anyhow::{bail, Context, Result};
use std::path::{Path, PathBuf};

#[derive(Debug)]
struct Row {
    model: String,
    dataset: String,
    split: String,
    metrics: phaedra_core::metrics::MetricsReport,
    source: PathBuf,
}

fn load_row(dir: &Path) -> Result<Row> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    let metrics = serde_json::from_value(value["metrics"].clone())
        .with_context(|| format!("metrics block of {}", path.display()))?;
    Ok(Row {
        model: value["model"].as_str().unwrap_or_default().to_string(),
        dataset: value["dataset"].as_str().unwrap_or_default().to_string(),
        split: value["split"].as_str().unwrap_or_default().to_string(),
        metrics,
        source: dir.to_path_buf(),
    })
}

pub fn run(globals: &Globals, inputs: &[PathBuf], spectra: bool) -> Result<()> {
    if inputs.is_empty() {
        bail!("report needs at least one eval output directory");
    }
    let mut rows = inputs.iter().map(|d| load_row(d)).collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| (&a.model, &a.dataset, &a.split).cmp(&(&b.model, &b.dataset, &b.split)));

    std::fs::create_dir_all(&globals.out)?;
    let mut csv = format!(
        "model,dataset,split,{}\n",
        phaedra_core::metrics::MetricsReport::CSV_HEADER
    );
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.model, r.dataset, r.split, r.metrics.csv_row()));
    }
    std::fs::write(globals.out.join("comparison.csv"), &csv)?;

    if spectra {
        let mut merged = String::from("model,dataset,k,E_truth,E_recon\n");
        for r in &rows {
            let path = r.source.join("spectrum.csv");
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            for line in text.lines().skip(1) {
                merged.push_str(&format!("{},{},{line}\n", r.model, r.dataset));
            }
        }
        std::fs::write(globals.out.join("spectra.csv"), merged)?;
    }

    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "report",
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "spectra": spectra,
        }),
    )?;
    println!("merged {} reports into {}", rows.len(), globals.out.display());
    Ok(())
}

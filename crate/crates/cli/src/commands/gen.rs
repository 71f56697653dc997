//! `phaedra gen`: synthesize a dataset and its manifest.

use crate::config::{write_snapshot, KvConfig};
use crate::Globals;
use anyhow::{bail, Result};
use phaedra_core::datagen::{Family, GenOptions, SplitCounts};

pub fn run(
    globals: &Globals,
    family: &str,
    count: usize,
    resolution: usize,
    val: usize,
    test: usize,
) -> Result<()> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    if val + test >= count {
        bail!("--val plus --test must leave at least one training sample");
    }
    let family = Family::parse(family)?;
    let mut opts = GenOptions::default();
    if let Some(path) = &globals.config {
        let kv = KvConfig::from_file(path)?;
        if let Some(v) = kv.get("gaussian_count") {
            opts.gaussian_count = v.parse()?;
        }
        if let Some(v) = kv.get("sine_modes") {
            opts.sine_modes = v.parse()?;
        }
        if let Some(v) = kv.get("multiscale_k") {
            opts.multiscale_k = v.parse()?;
        }
        if let Some(v) = kv.get("multiscale_decay") {
            opts.multiscale_decay = v.parse()?;
        }
        if let Some(v) = kv.get("heavy_tail_sigma") {
            opts.heavy_tail_sigma = v.parse()?;
        }
    }
    let splits = SplitCounts { train: count - val - test, val, test };
    let manifest = phaedra_core::datagen::generate_dataset_threaded(
        &globals.out,
        family,
        &opts,
        resolution,
        splits,
        globals.seed,
        globals.threads,
    )?;

    write_snapshot(
        &globals.out,
        &serde_json::json!({
            "command": "gen",
            "family": family.as_str(),
            "count": count,
            "resolution": resolution,
            "splits": manifest.splits,
            "seed": globals.seed,
            "generator": manifest.generator,
        }),
    )?;
    println!(
        "generated {} {} samples at {}x{} (sigma_g = {:.6})",
        manifest.splits.total(),
        family.as_str(),
        resolution,
        resolution,
        manifest.sigma_g
    );
    Ok(())
}

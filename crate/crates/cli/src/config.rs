//! Key-value run configuration: a plain `key = value` file, overridable
//! with repeated `--set key=value` flags. Every run writes the fully
//! resolved configuration as JSON next to its outputs so it can be
//! re-executed exactly.

use anyhow::{bail, Context, Result};
use phaedra_core::model::{ModelConfig, Variant};
use phaedra_core::trainer::{OptimizerKind, TrainRunConfig};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    map: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {} is not `key = value`: {raw:?}", lineno + 1);
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { map })
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let Some((key, value)) = o.split_once('=') else {
                bail!("--set expects key=value, got {o:?}");
            };
            self.map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}={v:?}: {e}")),
        }
    }

    fn parse_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn parse_u32_list(&self, key: &str) -> Result<Option<Vec<u32>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|e| anyhow::anyhow!("config key {key}: {e}")))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Model topology resolved against the desk defaults for the variant.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let variant = match self.get("variant") {
            Some(v) => Variant::parse(v)?,
            None => Variant::Phaedra,
        };
        let mut cfg = ModelConfig::desk(variant);
        if let Some(v) = self.parse_as::<usize>("base_channels")? {
            cfg.base_channels = v;
        }
        if let Some(v) = self.parse_list("channel_multipliers")? {
            cfg.channel_multipliers = v;
        }
        if let Some(v) = self.parse_as::<usize>("embed_dim")? {
            cfg.embed_dim = v;
        }
        if let Some(v) = self.parse_as::<usize>("c_mu")? {
            cfg.c_mu = v;
        }
        if let Some(v) = self.parse_as::<usize>("input_resolution")? {
            cfg.input_resolution = v;
        }
        if let Some(v) = self.parse_as::<usize>("attention_threshold")? {
            cfg.attention_threshold = v;
        }
        if let Some(v) = self.parse_as::<usize>("blocks_per_stage")? {
            cfg.blocks_per_stage = v;
        }
        if let Some(v) = self.parse_u32_list("morph_levels")? {
            cfg.morph_levels = Some(v);
        }
        if let Some(v) = self.parse_as::<f64>("morph_scale")? {
            cfg.morph_scale = Some(v);
        }
        if let Some(v) = self.parse_u32_list("amp_levels")? {
            cfg.amp_levels = Some(v);
        }
        if let Some(v) = self.parse_as::<f64>("amp_scale")? {
            cfg.amp_scale = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training schedule resolved against the defaults.
    pub fn train_config(&self, seed: u64, threads: usize) -> Result<TrainRunConfig> {
        let mut cfg = TrainRunConfig { seed, threads, ..Default::default() };
        if let Some(v) = self.parse_as::<usize>("steps")? {
            cfg.steps = v;
        }
        if let Some(v) = self.parse_as::<usize>("batch_size")? {
            cfg.batch_size = v;
        }
        if let Some(v) = self.parse_as::<usize>("warmup_steps")? {
            cfg.warmup_steps = v;
        }
        if let Some(v) = self.parse_as::<f64>("lr")? {
            cfg.lr = v;
        }
        if let Some(v) = self.get("optimizer") {
            cfg.optimizer = OptimizerKind::parse(v)?;
        }
        if let Some(v) = self.parse_as::<f64>("ema_decay")? {
            cfg.ema_decay = v;
        }
        if let Some(v) = self.parse_as::<usize>("checkpoint_every")? {
            cfg.checkpoint_every = v;
        }
        Ok(cfg)
    }
}

/// Serialize the resolved run configuration beside the outputs.
pub fn write_snapshot(out: &Path, snapshot: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("resolved_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(snapshot)?)
        .with_context(|| format!("writing {}", path.display()))
}

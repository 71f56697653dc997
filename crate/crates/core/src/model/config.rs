//! Model topology and variant selection.

use crate::error::{CoreError, Result};
use crate::quantizer::QuantizerSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Parallel dual-stream tokenizer: channel split, per-stream FSQ,
    /// learned 1x1 recombination.
    Phaedra,
    /// Single-stream FSQ baseline with the morphology codebook.
    Fsq,
    /// No quantizer; the continuous autoencoder lower bound.
    Continuous,
    /// Amplitude stream swapped for a 5-d FSQ codebook of the same 1024
    /// codes at the same resolution.
    CodebookAblation,
    /// Sequential wiring: quantize a scalar projection first, then quantize
    /// the residual, summing contributions before the decoder.
    ResidualAblation,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Phaedra => "phaedra",
            Variant::Fsq => "fsq",
            Variant::Continuous => "continuous",
            Variant::CodebookAblation => "codebook_ablation",
            Variant::ResidualAblation => "residual_ablation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phaedra" => Ok(Variant::Phaedra),
            "fsq" => Ok(Variant::Fsq),
            "continuous" => Ok(Variant::Continuous),
            "codebook_ablation" => Ok(Variant::CodebookAblation),
            "residual_ablation" => Ok(Variant::ResidualAblation),
            other => Err(CoreError::Config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn is_quantized(&self) -> bool {
        !matches!(self, Variant::Continuous)
    }

    /// Number of discrete token streams the variant emits per position.
    pub fn stream_count(&self) -> usize {
        match self {
            Variant::Continuous => 0,
            Variant::Fsq => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Channel count after the stem (paper scale 128; desk default 32).
    pub base_channels: usize,
    /// Per-stage multipliers; stage count = len, downsampling = 2^(len-1).
    pub channel_multipliers: Vec<usize>,
    /// Latent embedding width fed to the decoder (d = 8 across all models).
    pub embed_dim: usize,
    /// Morphology channel count for split variants.
    pub c_mu: usize,
    pub in_channels: usize,
    /// Square input resolution.
    pub input_resolution: usize,
    /// Attention is inserted at the bottleneck when the latent side length
    /// does not exceed this.
    pub attention_threshold: usize,
    pub blocks_per_stage: usize,
    /// Optional overrides for the quantizer streams.
    pub morph_levels: Option<Vec<u32>>,
    pub morph_scale: Option<f64>,
    pub amp_levels: Option<Vec<u32>>,
    pub amp_scale: Option<f64>,
}

impl ModelConfig {
    /// The desk-scale configuration: base 32, multipliers [1, 2, 2],
    /// 64 x 64 inputs, 4x downsampling to a 16 x 16 latent grid.
    pub fn desk(variant: Variant) -> Self {
        ModelConfig {
            variant,
            base_channels: 32,
            channel_multipliers: vec![1, 2, 2],
            embed_dim: 8,
            c_mu: 8,
            in_channels: 1,
            input_resolution: 64,
            attention_threshold: 32,
            blocks_per_stage: 2,
            morph_levels: None,
            morph_scale: None,
            amp_levels: None,
            amp_scale: None,
        }
    }

    /// The paper-scale configuration: base 128, multipliers [2, 2, 4],
    /// 128 x 128 inputs, 32 x 32 latents.
    pub fn paper(variant: Variant) -> Self {
        ModelConfig {
            base_channels: 128,
            channel_multipliers: vec![2, 2, 4],
            input_resolution: 128,
            ..Self::desk(variant)
        }
    }

    /// A tiny configuration for gradient verification on 16 x 16 inputs.
    pub fn tiny(variant: Variant) -> Self {
        ModelConfig {
            base_channels: 8,
            channel_multipliers: vec![1, 2],
            input_resolution: 16,
            ..Self::desk(variant)
        }
    }

    pub fn downsample_factor(&self) -> usize {
        1 << (self.channel_multipliers.len().saturating_sub(1))
    }

    pub fn latent_resolution(&self) -> usize {
        self.input_resolution / self.downsample_factor()
    }

    pub fn use_attention(&self) -> bool {
        self.latent_resolution() <= self.attention_threshold
    }

    /// Encoder projection width C_q ahead of the factorization.
    pub fn c_q(&self) -> usize {
        match self.variant {
            Variant::Phaedra => self.c_mu + 1,
            Variant::CodebookAblation => self.c_mu + self.amp_spec().map(|s| s.dims()).unwrap_or(0),
            Variant::Fsq | Variant::Continuous | Variant::ResidualAblation => self.embed_dim,
        }
    }

    /// Decoder input width; constant across variants so only the bottleneck
    /// differs between checkpoints.
    pub fn decoder_width(&self) -> usize {
        self.embed_dim
    }

    pub fn morph_spec(&self) -> Option<QuantizerSpec> {
        if self.variant == Variant::Continuous {
            return None;
        }
        let default = QuantizerSpec::morphology_default();
        Some(QuantizerSpec {
            levels: self.morph_levels.clone().unwrap_or(default.levels),
            scale: self.morph_scale.unwrap_or(default.scale),
        })
    }

    pub fn amp_spec(&self) -> Option<QuantizerSpec> {
        let default = match self.variant {
            Variant::Phaedra | Variant::ResidualAblation => QuantizerSpec::amplitude_default(),
            Variant::CodebookAblation => QuantizerSpec::amplitude_ablation_default(),
            Variant::Fsq | Variant::Continuous => return None,
        };
        Some(QuantizerSpec {
            levels: self.amp_levels.clone().unwrap_or(default.levels),
            scale: self.amp_scale.unwrap_or(default.scale),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_multipliers.is_empty() {
            return Err(CoreError::Config("channel_multipliers must be nonempty".into()));
        }
        if self.base_channels == 0 || self.embed_dim == 0 || self.in_channels == 0 {
            return Err(CoreError::Config("channel counts must be positive".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(CoreError::Config("blocks_per_stage must be >= 1".into()));
        }
        let factor = self.downsample_factor();
        if self.input_resolution == 0 || self.input_resolution % factor != 0 {
            return Err(CoreError::Resolution { resolution: self.input_resolution, factor });
        }
        if let Some(morph) = self.morph_spec() {
            QuantizerSpec::new(morph.levels.clone(), morph.scale)?;
            let morph_width = match self.variant {
                Variant::Phaedra | Variant::CodebookAblation => self.c_mu,
                _ => self.embed_dim,
            };
            if morph.dims() != morph_width {
                return Err(CoreError::Config(format!(
                    "morphology levels have {} dims but the stream carries {} channels",
                    morph.dims(),
                    morph_width
                )));
            }
        }
        if let Some(amp) = self.amp_spec() {
            QuantizerSpec::new(amp.levels.clone(), amp.scale)?;
            if self.variant == Variant::Phaedra || self.variant == Variant::ResidualAblation {
                if amp.dims() != 1 {
                    return Err(CoreError::Config(
                        "the amplitude stream is 1-dimensional for this variant".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

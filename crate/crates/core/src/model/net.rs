//! Backbone architecture: residual stages with strided downsampling on the
//! encoder side, mirrored with nearest-neighbor upsampling on the decoder
//! side, and a single attention block at the bottleneck when the latent
//! resolution is small enough.

use crate::error::Result;
use crate::model::config::ModelConfig;
use crate::model::params::{Binding, ConvIdx, NetBuilder, NormIdx};
use phaedra_tensor::{attention_block, AttentionParams, Element, Graph, TensorId};

pub(crate) const GN_EPS: f64 = 1e-6;

/// Largest group count <= 8 that divides the channel count.
pub(crate) fn groups_for(channels: usize) -> usize {
    (1..=channels.min(8)).rev().find(|g| channels % g == 0).unwrap_or(1)
}

#[derive(Debug, Clone)]
pub(crate) struct ResBlockIdx {
    pub norm1: NormIdx,
    pub conv1: ConvIdx,
    pub norm2: NormIdx,
    pub conv2: ConvIdx,
    pub skip: Option<ConvIdx>,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct AttnIdx {
    pub q: ConvIdx,
    pub k: ConvIdx,
    pub v: ConvIdx,
    pub proj: ConvIdx,
}

#[derive(Debug, Clone)]
pub(crate) struct StageIdx {
    pub blocks: Vec<ResBlockIdx>,
    /// Encoder: strided conv after the stage. Decoder: conv after nearest
    /// upsampling.
    pub resample: Option<ConvIdx>,
}

#[derive(Debug, Clone)]
pub(crate) struct TrunkIdx {
    pub stem: ConvIdx,
    pub stages: Vec<StageIdx>,
    pub mid_block0: ResBlockIdx,
    pub mid_attn: Option<AttnIdx>,
    pub mid_block1: ResBlockIdx,
    pub mid_channels: usize,
    pub norm_out: NormIdx,
}

fn build_res_block<T: Element>(
    b: &mut NetBuilder<'_, T>,
    name: &str,
    c_in: usize,
    c_out: usize,
) -> ResBlockIdx {
    ResBlockIdx {
        norm1: b.norm(&format!("{name}.norm1"), c_in),
        conv1: b.conv(&format!("{name}.conv1"), c_out, c_in, 3, false),
        norm2: b.norm(&format!("{name}.norm2"), c_out),
        conv2: b.conv(&format!("{name}.conv2"), c_out, c_out, 3, false),
        skip: (c_in != c_out).then(|| b.conv(&format!("{name}.skip"), c_out, c_in, 1, false)),
        c_in,
        c_out,
    }
}

fn build_attn<T: Element>(b: &mut NetBuilder<'_, T>, name: &str, c: usize) -> AttnIdx {
    AttnIdx {
        q: b.conv(&format!("{name}.q"), c, c, 1, false),
        k: b.conv(&format!("{name}.k"), c, c, 1, false),
        v: b.conv(&format!("{name}.v"), c, c, 1, false),
        // zero init keeps the block an identity at the start of training
        proj: b.conv(&format!("{name}.proj"), c, c, 1, true),
    }
}

pub(crate) fn build_encoder<T: Element>(b: &mut NetBuilder<'_, T>, cfg: &ModelConfig) -> TrunkIdx {
    let stem = b.conv("encoder.stem", cfg.base_channels, cfg.in_channels, 3, false);
    let mut stages = Vec::new();
    let mut ch = cfg.base_channels;
    let n_stages = cfg.channel_multipliers.len();
    for (s, &mult) in cfg.channel_multipliers.iter().enumerate() {
        let target = cfg.base_channels * mult;
        let mut blocks = Vec::new();
        for blk in 0..cfg.blocks_per_stage {
            let c_in = if blk == 0 { ch } else { target };
            blocks.push(build_res_block(b, &format!("encoder.stage{s}.block{blk}"), c_in, target));
        }
        ch = target;
        let resample =
            (s + 1 < n_stages).then(|| b.conv(&format!("encoder.down{s}"), ch, ch, 3, false));
        stages.push(StageIdx { blocks, resample });
    }
    let mid_block0 = build_res_block(b, "encoder.mid.block0", ch, ch);
    let mid_attn = cfg.use_attention().then(|| build_attn(b, "encoder.mid.attn", ch));
    let mid_block1 = build_res_block(b, "encoder.mid.block1", ch, ch);
    let norm_out = b.norm("encoder.norm_out", ch);
    TrunkIdx { stem, stages, mid_block0, mid_attn, mid_block1, mid_channels: ch, norm_out }
}

pub(crate) fn build_decoder<T: Element>(b: &mut NetBuilder<'_, T>, cfg: &ModelConfig) -> (TrunkIdx, ConvIdx) {
    let n_stages = cfg.channel_multipliers.len();
    let ch_last = cfg.base_channels * cfg.channel_multipliers[n_stages - 1];
    let stem = b.conv("decoder.stem", ch_last, cfg.decoder_width(), 3, false);
    let mid_block0 = build_res_block(b, "decoder.mid.block0", ch_last, ch_last);
    let mid_attn = cfg.use_attention().then(|| build_attn(b, "decoder.mid.attn", ch_last));
    let mid_block1 = build_res_block(b, "decoder.mid.block1", ch_last, ch_last);
    let mut stages = Vec::new();
    let mut ch = ch_last;
    for s in (0..n_stages).rev() {
        let target = cfg.base_channels * cfg.channel_multipliers[s];
        let mut blocks = Vec::new();
        for blk in 0..cfg.blocks_per_stage {
            let c_in = if blk == 0 { ch } else { target };
            blocks.push(build_res_block(b, &format!("decoder.stage{s}.block{blk}"), c_in, target));
        }
        ch = target;
        let resample = (s > 0).then(|| b.conv(&format!("decoder.up{s}"), ch, ch, 3, false));
        stages.push(StageIdx { blocks, resample });
    }
    let norm_out = b.norm("decoder.norm_out", ch);
    let out = b.conv("decoder.out", cfg.in_channels, ch, 3, false);
    (
        TrunkIdx { stem, stages, mid_block0, mid_attn, mid_block1, mid_channels: ch_last, norm_out },
        out,
    )
}

fn run_res_block<T: Element>(
    g: &mut Graph<T>,
    x: TensorId,
    idx: &ResBlockIdx,
    bind: &Binding,
) -> Result<TensorId> {
    let h = g.group_norm(x, bind.id(idx.norm1.gamma), bind.id(idx.norm1.beta), groups_for(idx.c_in), GN_EPS)?;
    let h = g.silu(h)?;
    let h = g.conv2d(h, bind.id(idx.conv1.weight), Some(bind.id(idx.conv1.bias)), 1, 1)?;
    let h = g.group_norm(h, bind.id(idx.norm2.gamma), bind.id(idx.norm2.beta), groups_for(idx.c_out), GN_EPS)?;
    let h = g.silu(h)?;
    let h = g.conv2d(h, bind.id(idx.conv2.weight), Some(bind.id(idx.conv2.bias)), 1, 1)?;
    let skip = match &idx.skip {
        Some(conv) => g.conv2d(x, bind.id(conv.weight), Some(bind.id(conv.bias)), 1, 0)?,
        None => x,
    };
    Ok(g.add(skip, h)?)
}

fn run_attn<T: Element>(
    g: &mut Graph<T>,
    x: TensorId,
    idx: &AttnIdx,
    bind: &Binding,
) -> Result<TensorId> {
    let params = AttentionParams {
        q_weight: bind.id(idx.q.weight),
        q_bias: bind.id(idx.q.bias),
        k_weight: bind.id(idx.k.weight),
        k_bias: bind.id(idx.k.bias),
        v_weight: bind.id(idx.v.weight),
        v_bias: bind.id(idx.v.bias),
        out_weight: bind.id(idx.proj.weight),
        out_bias: bind.id(idx.proj.bias),
    };
    Ok(attention_block(g, x, &params)?)
}

/// Input field -> bottleneck features at the latent resolution (before the
/// projection conv).
pub(crate) fn run_encoder<T: Element>(
    g: &mut Graph<T>,
    x: TensorId,
    trunk: &TrunkIdx,
    bind: &Binding,
) -> Result<TensorId> {
    let mut h = g.conv2d(x, bind.id(trunk.stem.weight), Some(bind.id(trunk.stem.bias)), 1, 1)?;
    for stage in &trunk.stages {
        for block in &stage.blocks {
            h = run_res_block(g, h, block, bind)?;
        }
        if let Some(down) = &stage.resample {
            h = g.conv2d(h, bind.id(down.weight), Some(bind.id(down.bias)), 2, 1)?;
        }
    }
    h = run_res_block(g, h, &trunk.mid_block0, bind)?;
    if let Some(attn) = &trunk.mid_attn {
        h = run_attn(g, h, attn, bind)?;
    }
    h = run_res_block(g, h, &trunk.mid_block1, bind)?;
    let h = g.group_norm(
        h,
        bind.id(trunk.norm_out.gamma),
        bind.id(trunk.norm_out.beta),
        groups_for(trunk.mid_channels),
        GN_EPS,
    )?;
    Ok(g.silu(h)?)
}

/// Recombined latent -> reconstruction at the input resolution.
pub(crate) fn run_decoder<T: Element>(
    g: &mut Graph<T>,
    z_tilde: TensorId,
    trunk: &TrunkIdx,
    out: &ConvIdx,
    bind: &Binding,
) -> Result<TensorId> {
    let mut h = g.conv2d(z_tilde, bind.id(trunk.stem.weight), Some(bind.id(trunk.stem.bias)), 1, 1)?;
    h = run_res_block(g, h, &trunk.mid_block0, bind)?;
    if let Some(attn) = &trunk.mid_attn {
        h = run_attn(g, h, attn, bind)?;
    }
    h = run_res_block(g, h, &trunk.mid_block1, bind)?;
    for stage in &trunk.stages {
        for block in &stage.blocks {
            h = run_res_block(g, h, block, bind)?;
        }
        if let Some(up) = &stage.resample {
            h = g.upsample_nearest(h, 2)?;
            h = g.conv2d(h, bind.id(up.weight), Some(bind.id(up.bias)), 1, 1)?;
        }
    }
    let last = trunk.stages.last().map(|s| s.blocks.last().unwrap().c_out).unwrap_or(trunk.mid_channels);
    let h = g.group_norm(
        h,
        bind.id(trunk.norm_out.gamma),
        bind.id(trunk.norm_out.beta),
        groups_for(last),
        GN_EPS,
    )?;
    let h = g.silu(h)?;
    Ok(g.conv2d(h, bind.id(out.weight), Some(bind.id(out.bias)), 1, 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_rule_prefers_eight() {
        assert_eq!(groups_for(32), 8);
        assert_eq!(groups_for(64), 8);
        assert_eq!(groups_for(8), 8);
        assert_eq!(groups_for(4), 4);
        assert_eq!(groups_for(6), 6);
        assert_eq!(groups_for(9), 3);
        assert_eq!(groups_for(7), 7);
    }
}

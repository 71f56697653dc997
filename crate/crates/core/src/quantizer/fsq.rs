//! Finite scalar quantization onto a fixed per-channel lattice.
//!
//! Each channel is bounded by `tanh(scale * z)` scaled to half the level
//! range and rounded. Odd level counts round to integer codes; even level
//! counts round with a half shift (`round(v + 1/2) - 1/2`) so all L codes
//! are reachable. Emitted values are the codes normalized to [-1, 1], which
//! keeps every stream on the same hypercube regardless of its level count.
//! Rounding is half-away-from-zero throughout for cross-platform
//! determinism.

use crate::error::{CoreError, Result};
use crate::quantizer::spec::{pack_index, QuantizerSpec};
use crate::quantizer::token::TokenGrid;
use phaedra_tensor::Element;

/// Code for one channel from an already-bounded value `b` in
/// (-half, +half). Returns (code, position).
#[inline]
fn snap_channel(b: f64, level: u32) -> (f64, u32) {
    let half = QuantizerSpec::half_width(level);
    let code = if level % 2 == 1 {
        b.round().clamp(-half, half)
    } else {
        ((b + 0.5).round() - 0.5).clamp(-half, half)
    };
    (code, (code + half) as u32)
}

fn quantize_bounded<T: Element>(
    bounded: impl Fn(usize, T) -> f64,
    z: &[T],
    h: usize,
    w: usize,
    spec: &QuantizerSpec,
) -> Result<(Vec<T>, TokenGrid)> {
    let d = spec.dims();
    let n = h * w;
    if z.len() != d * n {
        return Err(CoreError::ChannelMismatch { expected: d * n, got: z.len() });
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFiniteLatent);
    }
    let mut values = vec![T::ZERO; d * n];
    let mut indices = vec![0u32; n];
    let mut positions = vec![0u32; d];
    for pos_idx in 0..n {
        for (ch, &level) in spec.levels.iter().enumerate() {
            let half = QuantizerSpec::half_width(level);
            let b = bounded(ch, z[ch * n + pos_idx]);
            let (code, position) = snap_channel(b, level);
            values[ch * n + pos_idx] = T::from_f64(code / half);
            positions[ch] = position;
        }
        indices[pos_idx] = pack_index(&positions, &spec.levels)? as u32;
    }
    let grid = TokenGrid::new(spec.clone(), h, w, indices)?;
    Ok((values, grid))
}

/// Quantize a d x h x w latent: bound with `tanh(scale * z)`, snap to the
/// lattice, emit normalized values plus the packed token grid.
pub fn fsq_quantize<T: Element>(
    z: &[T],
    h: usize,
    w: usize,
    spec: &QuantizerSpec,
) -> Result<(Vec<T>, TokenGrid)> {
    let scale = spec.scale;
    quantize_bounded(
        move |ch, v| {
            let half = QuantizerSpec::half_width(spec.levels[ch]);
            half * (scale * v.to_f64()).tanh()
        },
        z,
        h,
        w,
        spec,
    )
}

/// Re-quantize values already on the normalized hypercube (no tanh bound).
/// Emitted FSQ values are a fixed point of this map, which is the
/// idempotence contract for the discrete artifact.
pub fn fsq_requantize<T: Element>(
    values: &[T],
    h: usize,
    w: usize,
    spec: &QuantizerSpec,
) -> Result<(Vec<T>, TokenGrid)> {
    quantize_bounded(
        |ch, v| QuantizerSpec::half_width(spec.levels[ch]) * v.to_f64(),
        values,
        h,
        w,
        spec,
    )
}

/// Map emitted values back to pre-bound latents: `atanh(v) / scale`, with a
/// clamp that keeps the endpoints finite. Feeding the result through
/// [`fsq_quantize`] reproduces the original tokens.
pub fn fsq_unbound<T: Element>(values: &[T], spec: &QuantizerSpec) -> Vec<T> {
    const EDGE: f64 = 1.0 - 1e-9;
    values
        .iter()
        .map(|v| {
            let c = v.to_f64().clamp(-EDGE, EDGE);
            T::from_f64(c.atanh() / spec.scale)
        })
        .collect()
}

/// Exact inverse of the code-to-index packing; returns the d x h x w
/// normalized values.
pub fn fsq_dequantize<T: Element>(tokens: &TokenGrid) -> Result<Vec<T>> {
    tokens.validate()?;
    tokens.dequantize()
}

/// Index of the code vector closest to zero (ties toward the positive code,
/// matching what quantizing an exactly-zero latent produces).
pub fn zero_code(spec: &QuantizerSpec) -> u32 {
    let positions: Vec<u32> = spec
        .levels
        .iter()
        .map(|&level| snap_channel(0.0, level).1)
        .collect();
    pack_index(&positions, &spec.levels).expect("zero code is always in range") as u32
}

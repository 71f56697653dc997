//! Single-head self-attention over the spatial positions of a CxHxW map,
//! assembled from the primitive ops so its backward needs no bespoke kernel.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, TensorId};

/// Hard cap on attended positions; the quadratic score matrix above this is
/// outside the supported regime.
pub const MAX_ATTENTION_POSITIONS: usize = 1024;

/// Projection parameters for one attention block. All four are 1x1 convs
/// (weight CxCx1x1, bias C).
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub q_weight: TensorId,
    pub q_bias: TensorId,
    pub k_weight: TensorId,
    pub k_bias: TensorId,
    pub v_weight: TensorId,
    pub v_bias: TensorId,
    pub out_weight: TensorId,
    pub out_bias: TensorId,
}

/// Positionless attention with a residual connection:
/// `x + proj(V . softmax(Q^T K / sqrt(C))^T)`.
pub fn attention_block<T: Element>(
    g: &mut Graph<T>,
    x: TensorId,
    p: &AttentionParams,
) -> Result<TensorId> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "attention_block",
            detail: format!("want CxHxW, got {:?}", shape),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let positions = h * w;
    if positions > MAX_ATTENTION_POSITIONS {
        return Err(TensorError::AttentionResolution {
            positions,
            cap: MAX_ATTENTION_POSITIONS,
        });
    }

    let q = g.conv2d(x, p.q_weight, Some(p.q_bias), 1, 0)?;
    let k = g.conv2d(x, p.k_weight, Some(p.k_bias), 1, 0)?;
    let v = g.conv2d(x, p.v_weight, Some(p.v_bias), 1, 0)?;

    let q2 = g.reshape(q, &[c, positions])?;
    let k2 = g.reshape(k, &[c, positions])?;
    let v2 = g.reshape(v, &[c, positions])?;

    let qt = g.transpose(q2)?;
    let scores = g.matmul(qt, k2)?;
    let scaled = g.scale(scores, 1.0 / (c as f64).sqrt())?;
    let attn = g.softmax_rows(scaled)?;
    let attn_t = g.transpose(attn)?;
    let mixed = g.matmul(v2, attn_t)?;
    let mixed3 = g.reshape(mixed, &[c, h, w])?;
    let proj = g.conv2d(mixed3, p.out_weight, Some(p.out_bias), 1, 0)?;
    g.add(x, proj)
}

//! Channel-wise factorization of the latent into morphology and amplitude
//! streams, and the helpers shared by the graph-level model wiring.

use crate::error::{CoreError, Result};
use phaedra_tensor::{Element, Graph, TensorId};
use serde::{Deserialize, Serialize};

/// Shape contract for the channel split: the first `c_mu` channels carry
/// local structure, the remaining `amp_channels` carry magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationSpec {
    pub c_mu: usize,
    pub amp_channels: usize,
}

impl FactorizationSpec {
    pub fn new(c_mu: usize, amp_channels: usize) -> Result<Self> {
        if c_mu == 0 || amp_channels == 0 {
            return Err(CoreError::Config("factorization needs at least one channel per stream".into()));
        }
        Ok(FactorizationSpec { c_mu, amp_channels })
    }

    pub fn c_q(&self) -> usize {
        self.c_mu + self.amp_channels
    }
}

/// Split a C_q x h x w channel-major latent into (morphology, amplitude).
pub fn factorize<T: Element>(
    z: &[T],
    h: usize,
    w: usize,
    spec: &FactorizationSpec,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = h * w;
    if z.len() != spec.c_q() * n {
        return Err(CoreError::ChannelMismatch { expected: spec.c_q() * n, got: z.len() / n.max(1) });
    }
    let mu = z[..spec.c_mu * n].to_vec();
    let alpha = z[spec.c_mu * n..].to_vec();
    Ok((mu, alpha))
}

/// Exact inverse of [`factorize`].
pub fn recombine_concat<T: Element>(mu: &[T], alpha: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(mu.len() + alpha.len());
    out.extend_from_slice(mu);
    out.extend_from_slice(alpha);
    out
}

/// Graph-level split.
pub fn factorize_graph<T: Element>(
    g: &mut Graph<T>,
    z: TensorId,
    spec: &FactorizationSpec,
) -> Result<(TensorId, TensorId)> {
    let shape = g.shape(z).to_vec();
    if shape.len() != 3 || shape[0] != spec.c_q() {
        return Err(CoreError::ChannelMismatch { expected: spec.c_q(), got: shape.first().copied().unwrap_or(0) });
    }
    let mu = g.slice_channels(z, 0, spec.c_mu)?;
    let alpha = g.slice_channels(z, spec.c_mu, spec.c_q())?;
    Ok((mu, alpha))
}

/// beta * mean((z - sg[z_hat])^2): the commitment pull toward the quantized
/// values, with no gradient through the quantized operand.
pub fn commitment_loss<T: Element>(
    g: &mut Graph<T>,
    z: TensorId,
    z_hat: TensorId,
    beta: f64,
) -> Result<TensorId> {
    let stopped = g.detach(z_hat)?;
    let diff = g.sub(z, stopped)?;
    let sq = g.mul(diff, diff)?;
    let m = g.mean(sq)?;
    Ok(g.scale(m, beta)?)
}

//! Decomposition of the reconstruction error into embedding and
//! quantization parts, with the triangle-inequality bound that any discrete
//! tokenizer must satisfy against its own continuous path.

use crate::error::{CoreError, Result};
use crate::field::Field;
use serde::{Deserialize, Serialize};

pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    /// E ||x - x_hat_quant||^2 over the batch.
    pub l_final: f64,
    /// E ||x - x_hat_cont||^2.
    pub l_emb: f64,
    /// E ||x_hat_cont - x_hat_quant||^2.
    pub l_quant: f64,
    /// (sqrt(l_emb) + sqrt(l_quant))^2.
    pub bound: f64,
    pub holds: bool,
}

fn mean_sq_norm(a: &[Field], b: &[Field]) -> f64 {
    let mut total = 0.0f64;
    for (fa, fb) in a.iter().zip(b.iter()) {
        let mut s = 0.0f64;
        for (&x, &y) in fa.data.iter().zip(fb.data.iter()) {
            let d = x as f64 - y as f64;
            s += d * d;
        }
        total += s;
    }
    total / a.len() as f64
}

/// Batch-mean squared norms and the bound check.
pub fn error_bound_check(
    x: &[Field],
    x_hat_cont: &[Field],
    x_hat_quant: &[Field],
) -> Result<ErrorBound> {
    if x.is_empty() || x.len() != x_hat_cont.len() || x.len() != x_hat_quant.len() {
        return Err(CoreError::EmptyBatch);
    }
    for ((a, b), c) in x.iter().zip(x_hat_cont.iter()).zip(x_hat_quant.iter()) {
        if a.len() != b.len() || a.len() != c.len() {
            return Err(CoreError::MetricShape("error-bound batch shapes differ".into()));
        }
    }
    let l_final = mean_sq_norm(x, x_hat_quant);
    let l_emb = mean_sq_norm(x, x_hat_cont);
    let l_quant = mean_sq_norm(x_hat_cont, x_hat_quant);
    let bound = (l_emb.sqrt() + l_quant.sqrt()).powi(2);
    Ok(ErrorBound { l_final, l_emb, l_quant, bound, holds: l_final <= bound + BOUND_SLACK })
}

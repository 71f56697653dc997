//! Physical-space reconstruction errors, normalized by the training-corpus
//! standard deviation so different variables stay comparable.

use crate::error::{CoreError, Result};
use crate::field::Field;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalErrors {
    /// 100 * mean |y - y_hat| / sigma_g
    pub nmae: f64,
    /// 100 * sqrt(mean (y - y_hat)^2) / sigma_g
    pub nrmse: f64,
    /// max |y - y_hat| / sigma_g (unscaled; tables report sub-1 values)
    pub nlinf: f64,
    /// 100 * sum |err| / sum |y|; undefined when the denominator is zero
    pub rl1: Option<f64>,
    /// 100 * l2(err) / l2(y); undefined when the denominator is zero
    pub rl2: Option<f64>,
}

fn check_same_shape(y: &Field, y_hat: &Field) -> Result<()> {
    if y.channels != y_hat.channels || y.height != y_hat.height || y.width != y_hat.width {
        return Err(CoreError::MetricShape(format!(
            "{}x{}x{} vs {}x{}x{}",
            y.channels, y.height, y.width, y_hat.channels, y_hat.height, y_hat.width
        )));
    }
    Ok(())
}

pub fn physical_errors(y: &Field, y_hat: &Field, sigma_g: f64) -> Result<PhysicalErrors> {
    check_same_shape(y, y_hat)?;
    if !(sigma_g > 0.0) {
        return Err(CoreError::NonPositiveSigma(sigma_g));
    }
    let n = y.data.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut max_abs = 0.0f64;
    let mut y_abs_sum = 0.0;
    let mut y_sq_sum = 0.0;
    for (&a, &b) in y.data.iter().zip(y_hat.data.iter()) {
        let (a, b) = (a as f64, b as f64);
        let e = a - b;
        abs_sum += e.abs();
        sq_sum += e * e;
        max_abs = max_abs.max(e.abs());
        y_abs_sum += a.abs();
        y_sq_sum += a * a;
    }
    Ok(PhysicalErrors {
        nmae: 100.0 * (abs_sum / n) / sigma_g,
        nrmse: 100.0 * (sq_sum / n).sqrt() / sigma_g,
        nlinf: max_abs / sigma_g,
        rl1: (y_abs_sum > 0.0).then(|| 100.0 * abs_sum / y_abs_sum),
        rl2: (y_sq_sum > 0.0).then(|| 100.0 * sq_sum.sqrt() / y_sq_sum.sqrt()),
    })
}

pub const VARIANCE_WINDOW: usize = 7;

/// Worst-case discrepancy of sliding-window variances, as a percentage of
/// the largest window variance of the reference. Windows are 7x7, valid
/// positions only. Computed with summed-area tables; the naive double loop
/// lives in the tests as the oracle.
pub fn local_variance_error(y: &Field, y_hat: &Field) -> Result<f64> {
    check_same_shape(y, y_hat)?;
    let (h, w) = (y.height, y.width);
    if h < VARIANCE_WINDOW || w < VARIANCE_WINDOW {
        return Err(CoreError::WindowTooLarge { h, w, window: VARIANCE_WINDOW });
    }
    let mut max_diff = 0.0f64;
    let mut max_ref = 0.0f64;
    for c in 0..y.channels {
        let plane_y = &y.data[c * h * w..(c + 1) * h * w];
        let plane_h = &y_hat.data[c * h * w..(c + 1) * h * w];
        let var_y = window_variances(plane_y, h, w);
        let var_h = window_variances(plane_h, h, w);
        for (vy, vh) in var_y.iter().zip(var_h.iter()) {
            max_diff = max_diff.max((vy - vh).abs());
            max_ref = max_ref.max(vy.abs());
        }
    }
    if max_ref == 0.0 {
        // constant reference: zero-over-zero is declared zero
        return Ok(if max_diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(100.0 * max_diff / max_ref)
}

/// Per-window population variance E[x^2] - E[x]^2 over every valid 7x7
/// placement, via integral images.
fn window_variances(plane: &[f32], h: usize, w: usize) -> Vec<f64> {
    let k = VARIANCE_WINDOW;
    // (h+1) x (w+1) prefix sums of values and squares
    let stride = w + 1;
    let mut s1 = vec![0.0f64; (h + 1) * stride];
    let mut s2 = vec![0.0f64; (h + 1) * stride];
    for i in 0..h {
        let mut row1 = 0.0;
        let mut row2 = 0.0;
        for j in 0..w {
            let v = plane[i * w + j] as f64;
            row1 += v;
            row2 += v * v;
            s1[(i + 1) * stride + j + 1] = s1[i * stride + j + 1] + row1;
            s2[(i + 1) * stride + j + 1] = s2[i * stride + j + 1] + row2;
        }
    }
    let count = (k * k) as f64;
    let mut out = Vec::with_capacity((h - k + 1) * (w - k + 1));
    for i in 0..=h - k {
        for j in 0..=w - k {
            let rect = |s: &[f64]| {
                s[(i + k) * stride + j + k] + s[i * stride + j]
                    - s[i * stride + j + k]
                    - s[(i + k) * stride + j]
            };
            let mean = rect(&s1) / count;
            let mean_sq = rect(&s2) / count;
            out.push(mean_sq - mean * mean);
        }
    }
    out
}

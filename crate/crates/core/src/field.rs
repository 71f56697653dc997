//! Physical fields and their normalization statistics.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// A C x H x W field of 32-bit values. The `normalized` flag records whether
/// the values have been standardized; the encoder refuses raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub normalized: bool,
}

impl Field {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(CoreError::FieldShape {
                expected: channels * height * width,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteField);
        }
        Ok(Field { channels, height, width, data, normalized: false })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Field {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Per-variable normalization statistics, computed over a training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sigma_g: f64,
}

impl Stats {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_g > 0.0) || !self.sigma_g.is_finite() || !self.mean.is_finite() {
            return Err(CoreError::InvalidStats { sigma_g: self.sigma_g });
        }
        Ok(())
    }
}

/// (x - mu) / sigma_g, flagging the result as normalized.
pub fn normalize(x: &Field, stats: &Stats) -> Result<Field> {
    stats.validate()?;
    let data = x
        .data
        .iter()
        .map(|&v| ((v as f64 - stats.mean) / stats.sigma_g) as f32)
        .collect();
    Ok(Field {
        channels: x.channels,
        height: x.height,
        width: x.width,
        data,
        normalized: true,
    })
}

/// Exact inverse of [`normalize`] up to f32 rounding.
pub fn denormalize(x_hat: &Field, stats: &Stats) -> Result<Field> {
    stats.validate()?;
    let data = x_hat
        .data
        .iter()
        .map(|&v| (v as f64 * stats.sigma_g + stats.mean) as f32)
        .collect();
    Ok(Field {
        channels: x_hat.channels,
        height: x_hat.height,
        width: x_hat.width,
        data,
        normalized: false,
    })
}

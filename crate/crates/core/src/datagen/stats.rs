//! Pooled normalization statistics over a training split, via Welford's
//! streaming update so a pass over shards never holds more than one sample.

use crate::error::{CoreError, Result};
use crate::field::{Field, Stats};

#[derive(Debug, Clone, Default)]
pub struct StreamingStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl StreamingStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn push_field(&mut self, field: &Field) {
        for &v in &field.data {
            self.push(v as f64);
        }
    }

    pub fn finish(&self) -> Result<Stats> {
        if self.count == 0 {
            return Err(CoreError::EmptySplit);
        }
        // population standard deviation over all pooled pixels
        let var = self.m2 / self.count as f64;
        if !(var > 0.0) {
            return Err(CoreError::ZeroVariance);
        }
        Ok(Stats { mean: self.mean, sigma_g: var.sqrt() })
    }
}

/// One-pass statistics over every pixel of the given fields.
pub fn compute_stats<'a>(fields: impl IntoIterator<Item = &'a Field>) -> Result<Stats> {
    let mut acc = StreamingStats::new();
    let mut any = false;
    for f in fields {
        any = true;
        acc.push_field(f);
    }
    if !any {
        return Err(CoreError::EmptySplit);
    }
    acc.finish()
}

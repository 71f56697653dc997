//! Quantizer configuration and the mixed-radix index packing that realizes
//! the implicit codebook.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Levels vector and pre-bound scale for one FSQ stream. The codebook is
/// implicit: its size is the product of the per-channel level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub levels: Vec<u32>,
    pub scale: f64,
}

impl QuantizerSpec {
    pub fn new(levels: Vec<u32>, scale: f64) -> Result<Self> {
        if levels.is_empty() || levels.iter().any(|&l| l < 2) {
            return Err(CoreError::InvalidLevels(levels));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CoreError::InvalidScale(scale));
        }
        Ok(QuantizerSpec { levels, scale })
    }

    /// The 8-channel morphology stream: 5*4*4*3*3*3*2*2 = 8640 shapes.
    pub fn morphology_default() -> Self {
        QuantizerSpec { levels: vec![5, 4, 4, 3, 3, 3, 2, 2], scale: 10.0 }
    }

    /// The densely quantized scalar amplitude stream: 1024 levels.
    pub fn amplitude_default() -> Self {
        QuantizerSpec { levels: vec![1024], scale: 0.1 }
    }

    /// The 5-d amplitude stream used by the codebook ablation: 4^5 = 1024.
    pub fn amplitude_ablation_default() -> Self {
        QuantizerSpec { levels: vec![4, 4, 4, 4, 4], scale: 10.0 }
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn codebook_size(&self) -> u64 {
        self.levels.iter().map(|&l| l as u64).product()
    }

    pub(crate) fn half_width(level: u32) -> f64 {
        (level as f64 - 1.0) / 2.0
    }
}

/// Mixed-radix packing of per-channel code positions, channel 0 most
/// significant. Bijective with [`unpack_index`] over the whole codebook.
pub fn pack_index(positions: &[u32], levels: &[u32]) -> Result<u64> {
    if positions.len() != levels.len() {
        return Err(CoreError::ChannelMismatch { expected: levels.len(), got: positions.len() });
    }
    let mut idx: u64 = 0;
    for (channel, (&p, &l)) in positions.iter().zip(levels.iter()).enumerate() {
        if p >= l {
            return Err(CoreError::CodeOutOfRange { channel, position: p, level: l });
        }
        idx = idx * l as u64 + p as u64;
    }
    Ok(idx)
}

/// Inverse of [`pack_index`].
pub fn unpack_index(index: u64, levels: &[u32]) -> Result<Vec<u32>> {
    let codebook: u64 = levels.iter().map(|&l| l as u64).product();
    if index >= codebook {
        return Err(CoreError::IndexOutOfRange { index, codebook });
    }
    let mut positions = vec![0u32; levels.len()];
    let mut rest = index;
    for (pos, &l) in positions.iter_mut().zip(levels.iter()).rev() {
        *pos = (rest % l as u64) as u32;
        rest /= l as u64;
    }
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_cardinalities() {
        assert_eq!(QuantizerSpec::morphology_default().codebook_size(), 8640);
        assert_eq!(QuantizerSpec::amplitude_default().codebook_size(), 1024);
        assert_eq!(QuantizerSpec::amplitude_ablation_default().codebook_size(), 1024);
        assert_eq!(
            QuantizerSpec::morphology_default().codebook_size()
                + QuantizerSpec::amplitude_default().codebook_size(),
            9664
        );
    }

    #[test]
    fn pack_examples() {
        assert_eq!(pack_index(&[4, 3], &[5, 4]).unwrap(), 19);
        assert_eq!(pack_index(&[0, 0, 0], &[5, 4, 3]).unwrap(), 0);
        assert!(pack_index(&[5, 0], &[5, 4]).is_err());
        assert!(pack_index(&[0], &[5, 4]).is_err());
    }

    #[test]
    fn pack_unpack_bijection_exhaustive() {
        for levels in [vec![4, 4, 4, 4, 4], vec![5, 4], vec![20]] {
            let total: u64 = levels.iter().map(|&l| l as u64).product();
            for idx in 0..total {
                let pos = unpack_index(idx, &levels).unwrap();
                assert_eq!(pack_index(&pos, &levels).unwrap(), idx);
            }
        }
    }

    #[test]
    fn rejects_degenerate_levels() {
        assert!(QuantizerSpec::new(vec![], 1.0).is_err());
        assert!(QuantizerSpec::new(vec![1], 1.0).is_err());
        assert!(QuantizerSpec::new(vec![4], 0.0).is_err());
        assert!(QuantizerSpec::new(vec![4], f64::NAN).is_err());
    }
}

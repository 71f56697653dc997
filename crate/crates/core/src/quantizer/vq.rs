//! Nearest-neighbor vector quantization with a learned codebook; the
//! classical baseline the split-FSQ design is measured against.

use crate::error::{CoreError, Result};
use phaedra_tensor::Element;

/// K learned code vectors of width `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VqCodebook<T> {
    pub entries: Vec<T>,
    pub k: usize,
    pub dim: usize,
}

impl<T: Element> VqCodebook<T> {
    pub fn new(entries: Vec<T>, k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(CoreError::EmptyCodebook);
        }
        if entries.len() != k * dim {
            return Err(CoreError::FieldShape { expected: k * dim, got: entries.len() });
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteLatent);
        }
        Ok(VqCodebook { entries, k, dim })
    }

    pub fn entry(&self, idx: usize) -> &[T] {
        &self.entries[idx * self.dim..(idx + 1) * self.dim]
    }
}

/// Replace each spatial vector of a C x h x w latent (channel-major) with
/// its nearest codebook entry in Euclidean distance. Ties break to the
/// lowest index.
pub fn vq_quantize<T: Element>(
    z: &[T],
    h: usize,
    w: usize,
    codebook: &VqCodebook<T>,
) -> Result<(Vec<T>, Vec<u32>)> {
    let n = h * w;
    if z.len() != codebook.dim * n {
        return Err(CoreError::CodebookWidth {
            entry: codebook.dim,
            latent: if n == 0 { 0 } else { z.len() / n },
        });
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFiniteLatent);
    }
    let mut values = vec![T::ZERO; z.len()];
    let mut indices = vec![0u32; n];
    for pos in 0..n {
        let mut best_idx = 0usize;
        let mut best_dist = f64::INFINITY;
        for e in 0..codebook.k {
            let entry = codebook.entry(e);
            let mut dist = 0.0f64;
            for (c, &ev) in entry.iter().enumerate() {
                let d = z[c * n + pos].to_f64() - ev.to_f64();
                dist += d * d;
            }
            // strict less-than keeps the lowest index on ties
            if dist < best_dist {
                best_dist = dist;
                best_idx = e;
            }
        }
        indices[pos] = best_idx as u32;
        let entry = codebook.entry(best_idx);
        for (c, &ev) in entry.iter().enumerate() {
            values[c * n + pos] = ev;
        }
    }
    Ok((values, indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn picks_nearest_entry() {
        // codebook {[0,0],[1,1]}, z = [0.9, 0.8]: squared distances 1.45 vs
        // 0.05, so index 1
        let cb = VqCodebook::new(vec![0.0f64, 0.0, 1.0, 1.0], 2, 2).unwrap();
        let (values, indices) = vq_quantize(&[0.9, 0.8], 1, 1, &cb).unwrap();
        assert_eq!(indices, vec![1]);
        assert_eq!(values, vec![1.0, 1.0]);
    }

    #[test]
    fn codebook_entry_is_a_fixed_point() {
        let cb = VqCodebook::new(vec![0.2f64, -0.4, 1.0, 0.5], 2, 2).unwrap();
        let (values, indices) = vq_quantize(&[1.0, 0.5], 1, 1, &cb).unwrap();
        assert_eq!(indices, vec![1]);
        assert_eq!(values, vec![1.0, 0.5]);
    }

    #[test]
    fn equidistant_tie_breaks_low() {
        let cb = VqCodebook::new(vec![0.0f64, 0.0, 1.0, 1.0], 2, 2).unwrap();
        let (_, indices) = vq_quantize(&[0.5, 0.5], 1, 1, &cb).unwrap();
        assert_eq!(indices, vec![0]);
    }

    #[test]
    fn matches_brute_force_distance_table() {
        // Production scan against an independently coded argmin over a full
        // distance table, random codebooks up to K = 256.
        let mut rng = Rng::seed_from_u64(77);
        for &k in &[3usize, 17, 256] {
            let dim = 4;
            let (h, w) = (3, 3);
            let n = h * w;
            let entries: Vec<f64> = (0..k * dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            // quantize some positions exactly onto entries to exercise ties
            let mut z = vec![0.0f64; dim * n];
            for pos in 0..n {
                if pos % 3 == 0 {
                    let e = (pos * 7) % k;
                    for c in 0..dim {
                        z[c * n + pos] = entries[e * dim + c];
                    }
                } else {
                    for c in 0..dim {
                        z[c * n + pos] = rng.uniform_in(-1.0, 1.0);
                    }
                }
            }
            let cb = VqCodebook::new(entries.clone(), k, dim).unwrap();
            let (_, indices) = vq_quantize(&z, h, w, &cb).unwrap();

            for pos in 0..n {
                let dists: Vec<f64> = (0..k)
                    .map(|e| {
                        (0..dim)
                            .map(|c| {
                                let d = z[c * n + pos] - entries[e * dim + c];
                                d * d
                            })
                            .sum()
                    })
                    .collect();
                let mut best = 0usize;
                for (e, &d) in dists.iter().enumerate() {
                    if d < dists[best] {
                        best = e;
                    }
                }
                assert_eq!(indices[pos] as usize, best, "k={k} pos={pos}");
            }
        }
    }

    #[test]
    fn empty_codebook_is_rejected() {
        assert!(VqCodebook::<f64>::new(vec![], 0, 2).is_err());
    }
}

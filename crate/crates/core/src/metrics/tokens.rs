//! Token-usage statistics: vocabulary utilization, Shannon entropy of the
//! code distribution, and redundancy relative to a uniform code.

use crate::error::{CoreError, Result};
use crate::model::TokenizedSample;

/// Occurrence counts per code index over a corpus. For multi-stream
/// tokenizers the streams share one alphabet: stream k's indices are offset
/// by the sizes of the streams before it, so the Phaedra pair counts into a
/// combined vocabulary of 8640 + 1024 = 9664.
#[derive(Debug, Clone)]
pub struct TokenHistogram {
    pub counts: Vec<u64>,
}

impl TokenHistogram {
    pub fn new(vocab: u64) -> Self {
        TokenHistogram { counts: vec![0; vocab as usize] }
    }

    pub fn vocab(&self) -> u64 {
        self.counts.len() as u64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn for_sample(sample: &TokenizedSample) -> Self {
        let vocab: u64 = sample.streams.iter().map(|s| s.spec.codebook_size()).sum();
        let mut hist = Self::new(vocab);
        hist.record(sample);
        hist
    }

    pub fn record(&mut self, sample: &TokenizedSample) {
        let mut offset = 0u64;
        for stream in &sample.streams {
            for &idx in &stream.indices {
                self.counts[(offset + idx as u64) as usize] += 1;
            }
            offset += stream.spec.codebook_size();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenStats {
    /// Percent of the vocabulary with nonzero counts.
    pub utilization: f64,
    /// Shannon entropy of the empirical code distribution, in bits.
    pub entropy_bits: f64,
    /// 100 * (1 - H / log2 V).
    pub redundancy: f64,
}

pub fn token_stats(hist: &TokenHistogram) -> Result<TokenStats> {
    let total = hist.total();
    if total == 0 {
        return Err(CoreError::EmptyHistogram);
    }
    let v = hist.vocab();
    if v < 2 {
        return Err(CoreError::VocabTooSmall(v));
    }
    let used = hist.counts.iter().filter(|&&c| c > 0).count();
    let mut entropy = 0.0f64;
    for &c in &hist.counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            entropy -= p * p.log2();
        }
    }
    Ok(TokenStats {
        utilization: 100.0 * used as f64 / v as f64,
        entropy_bits: entropy,
        redundancy: 100.0 * (1.0 - entropy / (v as f64).log2()),
    })
}

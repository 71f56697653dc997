//! Discrete token grids and their wire format.
//!
//! File layout (all little-endian):
//!   magic "PHTK" | version u32 | h u32 | w u32 | stream_count u32
//!   per stream: levels_len u32, levels u32..., scale f64
//!   per stream: h*w indices as u32, row-major
//! Round-trips are bit-exact.

use crate::error::{CoreError, Result};
use crate::quantizer::spec::{unpack_index, QuantizerSpec};
use phaedra_tensor::Element;
use std::io::{Read, Write};
use std::path::Path;

pub const TOKEN_MAGIC: [u8; 4] = *b"PHTK";
pub const TOKEN_VERSION: u32 = 1;

/// Integer code indices on an h x w latent grid for one quantized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub spec: QuantizerSpec,
    pub h: usize,
    pub w: usize,
    pub indices: Vec<u32>,
}

impl TokenGrid {
    pub fn new(spec: QuantizerSpec, h: usize, w: usize, indices: Vec<u32>) -> Result<Self> {
        let grid = TokenGrid { spec, h, w, indices };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.h * self.w {
            return Err(CoreError::FieldShape {
                expected: self.h * self.w,
                got: self.indices.len(),
            });
        }
        let k = self.spec.codebook_size();
        for &idx in &self.indices {
            if idx as u64 >= k {
                return Err(CoreError::IndexOutOfRange { index: idx as u64, codebook: k });
            }
        }
        Ok(())
    }

    /// Reconstruct the d x h x w normalized code values, channel-major.
    pub fn dequantize<T: Element>(&self) -> Result<Vec<T>> {
        let d = self.spec.dims();
        let n = self.h * self.w;
        let mut out = vec![T::ZERO; d * n];
        for (pos_idx, &index) in self.indices.iter().enumerate() {
            let positions = unpack_index(index as u64, &self.spec.levels)?;
            for (ch, (&p, &level)) in positions.iter().zip(self.spec.levels.iter()).enumerate() {
                let half = QuantizerSpec::half_width(level);
                let code = p as f64 - half;
                out[ch * n + pos_idx] = T::from_f64(code / half);
            }
        }
        Ok(out)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn get_u32(bytes: &[u8], off: &mut usize) -> Result<u32> {
    let end = *off + 4;
    if end > bytes.len() {
        return Err(CoreError::Malformed { path: "<bytes>".into(), detail: "truncated".into() });
    }
    let v = u32::from_le_bytes(bytes[*off..end].try_into().unwrap());
    *off = end;
    Ok(v)
}

fn get_f64(bytes: &[u8], off: &mut usize) -> Result<f64> {
    let end = *off + 8;
    if end > bytes.len() {
        return Err(CoreError::Malformed { path: "<bytes>".into(), detail: "truncated".into() });
    }
    let v = f64::from_le_bytes(bytes[*off..end].try_into().unwrap());
    *off = end;
    Ok(v)
}

/// Serialize the token grids of one sample.
pub fn tokens_to_bytes(grids: &[TokenGrid]) -> Result<Vec<u8>> {
    if grids.is_empty() {
        return Err(CoreError::StreamMismatch("no streams to serialize".into()));
    }
    let (h, w) = (grids[0].h, grids[0].w);
    for g in grids {
        g.validate()?;
        if g.h != h || g.w != w {
            return Err(CoreError::StreamMismatch("stream grids have differing sizes".into()));
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&TOKEN_MAGIC);
    put_u32(&mut buf, TOKEN_VERSION);
    put_u32(&mut buf, h as u32);
    put_u32(&mut buf, w as u32);
    put_u32(&mut buf, grids.len() as u32);
    for g in grids {
        put_u32(&mut buf, g.spec.levels.len() as u32);
        for &l in &g.spec.levels {
            put_u32(&mut buf, l);
        }
        buf.extend_from_slice(&g.spec.scale.to_le_bytes());
    }
    for g in grids {
        for &idx in &g.indices {
            put_u32(&mut buf, idx);
        }
    }
    Ok(buf)
}

pub fn tokens_from_bytes(bytes: &[u8]) -> Result<Vec<TokenGrid>> {
    if bytes.len() < 4 || bytes[..4] != TOKEN_MAGIC {
        return Err(CoreError::BadMagic);
    }
    let mut off = 4usize;
    let version = get_u32(bytes, &mut off)?;
    if version != TOKEN_VERSION {
        return Err(CoreError::BadVersion(version));
    }
    let h = get_u32(bytes, &mut off)? as usize;
    let w = get_u32(bytes, &mut off)? as usize;
    let streams = get_u32(bytes, &mut off)? as usize;
    let mut specs = Vec::with_capacity(streams);
    for _ in 0..streams {
        let d = get_u32(bytes, &mut off)? as usize;
        let mut levels = Vec::with_capacity(d);
        for _ in 0..d {
            levels.push(get_u32(bytes, &mut off)?);
        }
        let scale = get_f64(bytes, &mut off)?;
        specs.push(QuantizerSpec::new(levels, scale)?);
    }
    let mut grids = Vec::with_capacity(streams);
    for spec in specs {
        let mut indices = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            indices.push(get_u32(bytes, &mut off)?);
        }
        grids.push(TokenGrid::new(spec, h, w, indices)?);
    }
    if off != bytes.len() {
        return Err(CoreError::Malformed {
            path: "<bytes>".into(),
            detail: format!("{} trailing bytes", bytes.len() - off),
        });
    }
    Ok(grids)
}

pub fn write_token_file(path: &Path, grids: &[TokenGrid]) -> Result<()> {
    let bytes = tokens_to_bytes(grids)?;
    let mut f = std::fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(&bytes)
        .map_err(|e| CoreError::io(path.display().to_string(), e))
}

pub fn read_token_file(path: &Path) -> Result<Vec<TokenGrid>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    tokens_from_bytes(&bytes).map_err(|e| match e {
        CoreError::Malformed { detail, .. } => CoreError::Malformed {
            path: path.display().to_string(),
            detail,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sample_grids() -> Vec<TokenGrid> {
        let mut rng = Rng::seed_from_u64(5);
        let morph = QuantizerSpec::morphology_default();
        let amp = QuantizerSpec::amplitude_default();
        let mk = |spec: QuantizerSpec, rng: &mut Rng| {
            let k = spec.codebook_size();
            let indices = (0..16).map(|_| rng.below(k) as u32).collect();
            TokenGrid::new(spec, 4, 4, indices).unwrap()
        };
        vec![mk(morph, &mut rng), mk(amp, &mut rng)]
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let grids = sample_grids();
        let bytes = tokens_to_bytes(&grids).unwrap();
        let back = tokens_from_bytes(&bytes).unwrap();
        assert_eq!(back, grids);
        let again = tokens_to_bytes(&back).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let grids = sample_grids();
        let mut bytes = tokens_to_bytes(&grids).unwrap();
        bytes[0] = b'X';
        assert!(matches!(tokens_from_bytes(&bytes), Err(CoreError::BadMagic)));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let spec = QuantizerSpec::new(vec![4], 1.0).unwrap();
        assert!(TokenGrid::new(spec, 1, 1, vec![4]).is_err());
    }
}

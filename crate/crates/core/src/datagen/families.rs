//! Synthetic 2D field families covering the structural axes the tokenizer
//! must handle: smooth blobs, oscillatory fields, sharp discontinuities,
//! and multiscale spectra. Every family is deterministic under
//! (master_seed, sample_index) and gets an extra log-normal amplitude
//! factor so sample magnitudes are heavy-tailed rather than bounded.

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussians,
    Sines,
    Quadrants,
    Multiscale,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Gaussians => "gaussians",
            Family::Sines => "sines",
            Family::Quadrants => "quadrants",
            Family::Multiscale => "multiscale",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussians" => Ok(Family::Gaussians),
            "sines" => Ok(Family::Sines),
            "quadrants" => Ok(Family::Quadrants),
            "multiscale" => Ok(Family::Multiscale),
            other => Err(CoreError::Generator(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    /// Blob count for the gaussian superposition.
    pub gaussian_count: usize,
    pub gaussian_width_min: f64,
    pub gaussian_width_max: f64,
    /// Mode count for the sine/cosine combination.
    pub sine_modes: usize,
    /// Integer wavenumbers are drawn from [-max_wavenumber, max_wavenumber].
    pub max_wavenumber: i64,
    /// Double-sum extent K of the multiscale source.
    pub multiscale_k: usize,
    /// Spectral decay exponent r of the multiscale source.
    pub multiscale_decay: f64,
    /// Sigma of the log-normal per-sample amplitude factor; 0 disables it.
    pub heavy_tail_sigma: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            gaussian_count: 100,
            gaussian_width_min: 0.02,
            gaussian_width_max: 0.1,
            sine_modes: 10,
            max_wavenumber: 8,
            multiscale_k: 20,
            multiscale_decay: 1.0,
            heavy_tail_sigma: 0.5,
        }
    }
}

impl GenOptions {
    pub fn validate(&self, family: Family, resolution: usize) -> Result<()> {
        if resolution == 0 {
            return Err(CoreError::Generator("resolution must be positive".into()));
        }
        match family {
            Family::Gaussians => {
                if self.gaussian_count == 0 {
                    return Err(CoreError::Generator("gaussian_count must be >= 1".into()));
                }
                if !(self.gaussian_width_min > 0.0)
                    || self.gaussian_width_max < self.gaussian_width_min
                {
                    return Err(CoreError::Generator("invalid gaussian width range".into()));
                }
            }
            Family::Sines => {
                if self.sine_modes == 0 || self.max_wavenumber < 1 {
                    return Err(CoreError::Generator("invalid sine mode parameters".into()));
                }
            }
            Family::Quadrants => {
                if resolution % 2 != 0 {
                    return Err(CoreError::Generator("quadrants need an even resolution".into()));
                }
            }
            Family::Multiscale => {
                if self.multiscale_k == 0 {
                    return Err(CoreError::Generator("multiscale_k must be >= 1".into()));
                }
                if self.multiscale_decay < 0.0 {
                    return Err(CoreError::Generator("multiscale decay must be >= 0".into()));
                }
            }
        }
        Ok(())
    }
}

// ---- deterministic kernels -------------------------------------------------

/// Superposition of periodic Gaussians on [0,1)^2 with grid points at
/// (j/R, i/R); each blob is wrapped over the +-1 domain copies. The wrapped
/// kernel is separable, so the double sum over copies is evaluated as a
/// product of per-axis sums.
pub fn gaussian_field(
    centers: &[(f64, f64)],
    amplitudes: &[f64],
    widths: &[f64],
    resolution: usize,
) -> Field {
    let r = resolution;
    let mut data = vec![0.0f64; r * r];
    let mut fx = vec![0.0f64; r];
    let mut fy = vec![0.0f64; r];
    for ((&(cx, cy), &a), &s) in centers.iter().zip(amplitudes).zip(widths) {
        let inv = 1.0 / (2.0 * s * s);
        let axis = |c: f64, out: &mut [f64]| {
            for (k, o) in out.iter_mut().enumerate() {
                let p = k as f64 / r as f64;
                let mut v = 0.0;
                for shift in [-1.0, 0.0, 1.0] {
                    let d = p - c + shift;
                    v += (-d * d * inv).exp();
                }
                *o = v;
            }
        };
        axis(cx, &mut fx);
        axis(cy, &mut fy);
        for i in 0..r {
            let ay = a * fy[i];
            let row = &mut data[i * r..(i + 1) * r];
            for (cell, &gx) in row.iter_mut().zip(fx.iter()) {
                *cell += ay * gx;
            }
        }
    }
    Field {
        channels: 1,
        height: r,
        width: r,
        data: data.iter().map(|&v| v as f32).collect(),
        normalized: false,
    }
}

/// Modes are (a, b, k, l): a*sin(2 pi (k x + l y)) + b*cos(...), sampled on
/// the periodic grid (full periods, so each mode has exactly zero mean).
fn sine_values(modes: &[(f64, f64, i64, i64)], resolution: usize) -> Vec<f64> {
    let r = resolution;
    let mut data = vec![0.0f64; r * r];
    let tau = 2.0 * std::f64::consts::PI;
    for i in 0..r {
        let y = i as f64 / r as f64;
        for j in 0..r {
            let x = j as f64 / r as f64;
            let mut v = 0.0f64;
            for &(a, b, k, l) in modes {
                let phase = tau * (k as f64 * x + l as f64 * y);
                v += a * phase.sin() + b * phase.cos();
            }
            data[i * r + j] = v;
        }
    }
    data
}

pub fn sine_field(modes: &[(f64, f64, i64, i64)], resolution: usize) -> Field {
    let data = sine_values(modes, resolution).iter().map(|&v| v as f32).collect();
    Field { channels: 1, height: resolution, width: resolution, data, normalized: false }
}

/// Four constant blocks (top-left, top-right, bottom-left, bottom-right).
pub fn quadrant_field(values: [f64; 4], resolution: usize) -> Field {
    let r = resolution;
    let half = r / 2;
    let mut data = vec![0.0f32; r * r];
    for i in 0..r {
        for j in 0..r {
            let q = match (i < half, j < half) {
                (true, true) => values[0],
                (true, false) => values[1],
                (false, true) => values[2],
                (false, false) => values[3],
            };
            data[i * r + j] = q as f32;
        }
    }
    Field { channels: 1, height: r, width: r, data, normalized: false }
}

/// f(x,y) = sum_{i,j=1..K} a_ij (i^2+j^2)^{-r} sin(pi i x) sin(pi j y) on an
/// inclusive [0,1] grid, so the boundary zeros of the sine basis land on the
/// grid exactly. Separable evaluation: contract the weighted coefficients
/// against the y-basis first, then against the x-basis.
pub fn multiscale_field(coeffs: &[f64], k: usize, decay: f64, resolution: usize) -> Field {
    let r = resolution;
    debug_assert_eq!(coeffs.len(), k * k);
    let denom = (r - 1).max(1) as f64;
    // sin tables: basis[m-1][grid]
    let table = |_: ()| -> Vec<Vec<f64>> {
        (1..=k)
            .map(|m| {
                (0..r)
                    .map(|g| (std::f64::consts::PI * m as f64 * g as f64 / denom).sin())
                    .collect()
            })
            .collect()
    };
    let sx = table(());
    let sy = &sx; // square grid, same basis both axes

    // g[i-1][y] = sum_j a_ij (i^2+j^2)^{-decay} sin(pi j y)
    let mut g = vec![vec![0.0f64; r]; k];
    for i in 1..=k {
        let gi = &mut g[i - 1];
        for j in 1..=k {
            let w = coeffs[(i - 1) * k + (j - 1)] * ((i * i + j * j) as f64).powf(-decay);
            for (cell, &s) in gi.iter_mut().zip(sy[j - 1].iter()) {
                *cell += w * s;
            }
        }
    }
    let mut data = vec![0.0f64; r * r];
    for gi_y in 0..r {
        let row = &mut data[gi_y * r..(gi_y + 1) * r];
        for i in 0..k {
            let gy = g[i][gi_y];
            for (cell, &s) in row.iter_mut().zip(sx[i].iter()) {
                *cell += gy * s;
            }
        }
    }
    Field {
        channels: 1,
        height: r,
        width: r,
        data: data.iter().map(|&v| v as f32).collect(),
        normalized: false,
    }
}

// ---- seeded samplers --------------------------------------------------------

fn heavy_tail_factor(rng: &mut Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (sigma * rng.normal()).exp()
    } else {
        1.0
    }
}

fn scale_field(mut field: Field, factor: f64) -> Field {
    for v in &mut field.data {
        *v = (*v as f64 * factor) as f32;
    }
    field
}

/// One deterministic sample of the given family.
pub fn generate_sample(
    family: Family,
    opts: &GenOptions,
    resolution: usize,
    master_seed: u64,
    sample_index: u64,
) -> Result<Field> {
    opts.validate(family, resolution)?;
    let mut rng = Rng::for_sample(master_seed, sample_index);
    let field = match family {
        Family::Gaussians => {
            let n = opts.gaussian_count;
            let centers: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.uniform(), rng.uniform())).collect();
            let amplitudes: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let widths: Vec<f64> = (0..n)
                .map(|_| rng.uniform_in(opts.gaussian_width_min, opts.gaussian_width_max))
                .collect();
            gaussian_field(&centers, &amplitudes, &widths, resolution)
        }
        Family::Sines => {
            let max_k = opts.max_wavenumber;
            let modes: Vec<(f64, f64, i64, i64)> = (0..opts.sine_modes)
                .map(|_| {
                    // draw integer wavenumbers, rejecting the constant mode
                    let (k, l) = loop {
                        let k = rng.below((2 * max_k + 1) as u64) as i64 - max_k;
                        let l = rng.below((2 * max_k + 1) as u64) as i64 - max_k;
                        if k != 0 || l != 0 {
                            break (k, l);
                        }
                    };
                    (rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0), k, l)
                })
                .collect();
            sine_field(&modes, resolution)
        }
        Family::Quadrants => {
            let values = [
                rng.uniform_in(-1.0, 1.0),
                rng.uniform_in(-1.0, 1.0),
                rng.uniform_in(-1.0, 1.0),
                rng.uniform_in(-1.0, 1.0),
            ];
            quadrant_field(values, resolution)
        }
        Family::Multiscale => {
            let k = opts.multiscale_k;
            let coeffs: Vec<f64> = (0..k * k).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            multiscale_field(&coeffs, k, opts.multiscale_decay, resolution)
        }
    };
    Ok(scale_field(field, heavy_tail_factor(&mut rng, opts.heavy_tail_sigma)))
}

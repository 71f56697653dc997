//! Spectral fidelity: minimum radial coherence, log-domain spectrum
//! similarity, and the worst single-mode power discrepancy.
//!
//! Conventions: unnormalized 2D DFT, power = |F|^2, annular bins of unit
//! width in integer wavenumber (rounded radius of the centered frequency
//! coordinates), no windowing (the fields are treated as periodic), and a
//! 1e-20 floor under every logarithm or coherence denominator.

use crate::error::{CoreError, Result};
use crate::field::Field;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub const SPECTRAL_FLOOR: f64 = 1e-20;

/// Unnormalized 2D DFT of an h x w plane (row FFTs, then column FFTs).
pub fn fft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = data[i * w + j];
        }
        col_fft.process(&mut col);
        for i in 0..h {
            data[i * w + j] = col[i];
        }
    }
    data
}

/// Centered signed frequency index.
fn centered(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Annular bin of a 2D mode: round(sqrt(kx^2 + ky^2)).
pub fn radial_bin(iy: usize, ix: usize, h: usize, w: usize) -> usize {
    let ky = centered(iy, h) as f64;
    let kx = centered(ix, w) as f64;
    (ky * ky + kx * kx).sqrt().round() as usize
}

pub fn bin_count(h: usize, w: usize) -> usize {
    let mut max_bin = 0;
    for iy in 0..h {
        for ix in 0..w {
            max_bin = max_bin.max(radial_bin(iy, ix, h, w));
        }
    }
    max_bin + 1
}

/// Radially averaged power spectrum: mean of |F|^2 over each annulus.
pub fn radial_power_spectrum(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let spec = fft2(plane, h, w);
    let bins = bin_count(h, w);
    let mut power = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    for iy in 0..h {
        for ix in 0..w {
            let b = radial_bin(iy, ix, h, w);
            power[b] += spec[iy * w + ix].norm_sqr();
            counts[b] += 1;
        }
    }
    for (p, &c) in power.iter_mut().zip(counts.iter()) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    power
}

fn check_batch(batch_y: &[Field], batch_y_hat: &[Field]) -> Result<(usize, usize, usize)> {
    if batch_y.is_empty() || batch_y.len() != batch_y_hat.len() {
        return Err(CoreError::EmptyBatch);
    }
    let (c, h, w) = (batch_y[0].channels, batch_y[0].height, batch_y[0].width);
    for f in batch_y.iter().chain(batch_y_hat.iter()) {
        if f.channels != c || f.height != h || f.width != w {
            return Err(CoreError::MetricShape("spectral batch shapes differ".into()));
        }
    }
    Ok((c, h, w))
}

/// Minimum spectral coherence over radial bins, in percent.
///
/// Cross and auto spectral densities are averaged over the batch and over
/// each annulus; gamma^2(k) = |G_yh|^2 / (G_yy * G_hh). Bins whose
/// reference power falls below the floor are excluded.
pub fn spectral_coherence_min(batch_y: &[Field], batch_y_hat: &[Field]) -> Result<f64> {
    let (c, h, w) = check_batch(batch_y, batch_y_hat)?;
    let bins = bin_count(h, w);
    let mut g_yh = vec![Complex64::new(0.0, 0.0); bins];
    let mut g_yy = vec![0.0f64; bins];
    let mut g_hh = vec![0.0f64; bins];
    let mut counts = vec![0u64; bins];

    for (fy, fh) in batch_y.iter().zip(batch_y_hat.iter()) {
        for ch in 0..c {
            let plane_y: Vec<f64> =
                fy.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
            let plane_h: Vec<f64> =
                fh.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
            let sy = fft2(&plane_y, h, w);
            let sh = fft2(&plane_h, h, w);
            for iy in 0..h {
                for ix in 0..w {
                    let b = radial_bin(iy, ix, h, w);
                    let yv = sy[iy * w + ix];
                    let hv = sh[iy * w + ix];
                    g_yh[b] += yv * hv.conj();
                    g_yy[b] += yv.norm_sqr();
                    g_hh[b] += hv.norm_sqr();
                    counts[b] += 1;
                }
            }
        }
    }

    let mut min_gamma = f64::INFINITY;
    for b in 0..bins {
        if counts[b] == 0 {
            continue;
        }
        let n = counts[b] as f64;
        let (cyy, chh) = (g_yy[b] / n, g_hh[b] / n);
        if cyy < SPECTRAL_FLOOR {
            continue;
        }
        let gamma_sq = if chh < SPECTRAL_FLOOR {
            0.0
        } else {
            (g_yh[b] / n).norm_sqr() / (cyy * chh)
        };
        min_gamma = min_gamma.min(gamma_sq.max(0.0).sqrt());
    }
    if !min_gamma.is_finite() {
        return Err(CoreError::DegenerateSpectrum);
    }
    Ok(100.0 * min_gamma)
}

/// Log-domain radial spectrum similarity in percent. Can fall below zero
/// for badly mismatched spectra; the report clamps and flags that case.
pub fn log_spectral_fidelity(y: &Field, y_hat: &Field) -> Result<f64> {
    let (c, h, w) = check_batch(std::slice::from_ref(y), std::slice::from_ref(y_hat))?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ch in 0..c {
        let plane_y: Vec<f64> =
            y.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
        let plane_h: Vec<f64> =
            y_hat.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
        let e = radial_power_spectrum(&plane_y, h, w);
        let e_hat = radial_power_spectrum(&plane_h, h, w);
        for (a, b) in e.iter().zip(e_hat.iter()) {
            let la = a.max(SPECTRAL_FLOOR).log10();
            let lb = b.max(SPECTRAL_FLOOR).log10();
            num += (la - lb).abs();
            den += la.abs();
        }
    }
    if den == 0.0 {
        return Err(CoreError::DegenerateSpectrum);
    }
    Ok(100.0 * (1.0 - num / den))
}

/// Maximum log-power discrepancy over all 2D modes.
pub fn max_spectral_difference(y: &Field, y_hat: &Field) -> Result<f64> {
    let (c, h, w) = check_batch(std::slice::from_ref(y), std::slice::from_ref(y_hat))?;
    let mut worst = 0.0f64;
    for ch in 0..c {
        let plane_y: Vec<f64> =
            y.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
        let plane_h: Vec<f64> =
            y_hat.data[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
        let sy = fft2(&plane_y, h, w);
        let sh = fft2(&plane_h, h, w);
        for (a, b) in sy.iter().zip(sh.iter()) {
            let d = ((a.norm_sqr() + SPECTRAL_FLOOR).log10()
                - (b.norm_sqr() + SPECTRAL_FLOOR).log10())
            .abs();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_field(rng: &mut Rng, h: usize, w: usize) -> Field {
        Field::new(1, h, w, (0..h * w).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect()).unwrap()
    }

    #[test]
    fn perfect_reconstruction_saturates_metrics() {
        let mut rng = Rng::seed_from_u64(41);
        let y = random_field(&mut rng, 16, 16);
        let batch = vec![y.clone(), random_field(&mut rng, 16, 16)];
        assert!((spectral_coherence_min(&batch, &batch).unwrap() - 100.0).abs() < 1e-9);
        assert!((log_spectral_fidelity(&y, &y).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(max_spectral_difference(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn coherence_is_scale_invariant() {
        let mut rng = Rng::seed_from_u64(42);
        let batch: Vec<Field> = (0..4).map(|_| random_field(&mut rng, 16, 16)).collect();
        let doubled: Vec<Field> = batch
            .iter()
            .map(|f| {
                let mut g = f.clone();
                for v in &mut g.data {
                    *v *= 2.0;
                }
                g
            })
            .collect();
        assert!((spectral_coherence_min(&batch, &doubled).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_mode_doubling_shows_log10_four() {
        // doubling one mode's amplitude quadruples its power
        let (h, w) = (16, 16);
        let mut y = vec![0.0f32; h * w];
        let mut y_hat = vec![0.0f32; h * w];
        for i in 0..h {
            for j in 0..w {
                let phase = 2.0 * std::f64::consts::PI * (3.0 * j as f64) / w as f64;
                y[i * w + j] = phase.cos() as f32;
                y_hat[i * w + j] = 2.0 * phase.cos() as f32;
            }
        }
        let fy = Field::new(1, h, w, y).unwrap();
        let fh = Field::new(1, h, w, y_hat).unwrap();
        let d = max_spectral_difference(&fy, &fh).unwrap();
        assert!((d - 4.0f64.log10()).abs() < 1e-9, "{d}");
    }

    #[test]
    fn max_difference_is_symmetric() {
        let mut rng = Rng::seed_from_u64(43);
        let y = random_field(&mut rng, 12, 12);
        let y_hat = random_field(&mut rng, 12, 12);
        let a = max_spectral_difference(&y, &y_hat).unwrap();
        let b = max_spectral_difference(&y_hat, &y).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flog_closed_form_for_uniform_tenfold_spectrum() {
        // y_hat = sqrt(10) * y makes every power 10x, so |log10 E - log10
        // E_hat| = 1 in each bin
        let mut rng = Rng::seed_from_u64(44);
        let y = random_field(&mut rng, 16, 16);
        let mut y_hat = y.clone();
        for v in &mut y_hat.data {
            *v *= 10.0f32.sqrt();
        }
        let f = log_spectral_fidelity(&y, &y_hat).unwrap();

        let plane: Vec<f64> = y.data.iter().map(|&v| v as f64).collect();
        let e = radial_power_spectrum(&plane, 16, 16);
        let den: f64 = e.iter().map(|&v| v.max(SPECTRAL_FLOOR).log10().abs()).sum();
        let expected = 100.0 * (1.0 - e.len() as f64 / den);
        assert!((f - expected).abs() < 1e-6, "{f} vs {expected}");
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(spectral_coherence_min(&[], &[]), Err(CoreError::EmptyBatch)));
    }

    // ---- naive oracles ---------------------------------------------------

    /// O(n^2) DFT straight off the definition.
    fn naive_dft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let ang = -2.0 * std::f64::consts::PI
                            * (ky as f64 * y as f64 / h as f64 + kx as f64 * x as f64 / w as f64);
                        acc += plane[y * w + x] * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                out[ky * w + kx] = acc;
            }
        }
        out
    }

    fn naive_coherence_min(batch_y: &[Field], batch_y_hat: &[Field]) -> f64 {
        let (h, w) = (batch_y[0].height, batch_y[0].width);
        let bins = bin_count(h, w);
        let mut g_yh = vec![Complex64::new(0.0, 0.0); bins];
        let mut g_yy = vec![0.0f64; bins];
        let mut g_hh = vec![0.0f64; bins];
        let mut counts = vec![0u64; bins];
        for (fy, fh) in batch_y.iter().zip(batch_y_hat.iter()) {
            let py: Vec<f64> = fy.data.iter().map(|&v| v as f64).collect();
            let ph: Vec<f64> = fh.data.iter().map(|&v| v as f64).collect();
            let sy = naive_dft2(&py, h, w);
            let sh = naive_dft2(&ph, h, w);
            for iy in 0..h {
                for ix in 0..w {
                    let b = radial_bin(iy, ix, h, w);
                    g_yh[b] += sy[iy * w + ix] * sh[iy * w + ix].conj();
                    g_yy[b] += sy[iy * w + ix].norm_sqr();
                    g_hh[b] += sh[iy * w + ix].norm_sqr();
                    counts[b] += 1;
                }
            }
        }
        let mut min_gamma = f64::INFINITY;
        for b in 0..bins {
            if counts[b] == 0 {
                continue;
            }
            let n = counts[b] as f64;
            if g_yy[b] / n < SPECTRAL_FLOOR {
                continue;
            }
            let gamma_sq = if g_hh[b] / n < SPECTRAL_FLOOR {
                0.0
            } else {
                (g_yh[b] / n).norm_sqr() / ((g_yy[b] / n) * (g_hh[b] / n))
            };
            min_gamma = min_gamma.min(gamma_sq.max(0.0).sqrt());
        }
        100.0 * min_gamma
    }

    #[test]
    fn coherence_matches_naive_per_bin_oracle() {
        let mut rng = Rng::seed_from_u64(45);
        let batch_y: Vec<Field> = (0..8).map(|_| random_field(&mut rng, 32, 32)).collect();
        let batch_h: Vec<Field> = batch_y
            .iter()
            .map(|f| {
                let data = f
                    .data
                    .iter()
                    .map(|&v| v + rng.uniform_in(-0.3, 0.3) as f32)
                    .collect();
                Field::new(1, 32, 32, data).unwrap()
            })
            .collect();
        let fast = spectral_coherence_min(&batch_y, &batch_h).unwrap();
        let slow = naive_coherence_min(&batch_y, &batch_h);
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    }

    #[test]
    fn fft_matches_naive_dft() {
        let mut rng = Rng::seed_from_u64(46);
        let plane: Vec<f64> = (0..12 * 20).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let fast = fft2(&plane, 12, 20);
        let slow = naive_dft2(&plane, 12, 20);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}

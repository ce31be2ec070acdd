//! Ensemble noise power spectrum.
//!
//! Each realization minus the ensemble mean (scaled by √(n/(n−1))) is cut to
//! the ROI and plane-detrended. Detrending suppresses the lowest frequencies
//! by a known, signal-independent factor; that factor is divided out per
//! frequency so the estimate stays unbiased for white noise.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Roi};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpsResult {
    pub nx: usize,
    pub ny: usize,
    /// Frequency steps in lp/mm.
    pub du: f64,
    pub dv: f64,
    /// HU²·mm², row-major `ny`×`nx`, zero frequency at `(ny/2, nx/2)`.
    pub nps2d: Vec<f64>,
    /// Bin centers `k·Δf`, starting with the DC bin.
    pub radial_freqs: Vec<f64>,
    pub radial_values: Vec<f64>,
    pub n_realizations: usize,
    pub roi_size: usize,
}

impl NpsResult {
    /// Frequency (u, v) in lp/mm of 2D element `(row, col)`.
    pub fn freq_at(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 - (self.nx / 2) as f64) * self.du,
            (row as f64 - (self.ny / 2) as f64) * self.dv,
        )
    }

    /// Σ NPS·Δu·Δv: the noise variance.
    pub fn integral(&self) -> f64 {
        self.nps2d.iter().sum::<f64>() * self.du * self.dv
    }

    /// Radial curve without the DC bin.
    pub fn radial_curve(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.radial_freqs.iter().copied().zip(self.radial_values.iter().copied()).skip(1)
    }

    /// Mean radial value over bins with frequency above `f`.
    pub fn mean_above(&self, f: f64) -> f64 {
        let v: Vec<f64> = self.radial_curve().filter(|&(x, _)| x > f).map(|(_, y)| y).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

fn fft2(data: &mut [Complex<f64>], nx: usize, ny: usize, planner: &mut FftPlanner<f64>) {
    let row = planner.plan_fft_forward(nx);
    for r in data.chunks_mut(nx) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(ny);
    let mut buf = vec![Complex::new(0.0, 0.0); ny];
    for x in 0..nx {
        for y in 0..ny {
            buf[y] = data[y * nx + x];
        }
        col.process(&mut buf);
        for y in 0..ny {
            data[y * nx + x] = buf[y];
        }
    }
}

/// Subtracts the least-squares plane a + b·x + c·y.
fn detrend_plane(v: &mut [f64], nx: usize, ny: usize) {
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let (mut s0, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..ny {
        for x in 0..nx {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let val = v[y * nx + x];
            s0 += val;
            sx += val * dx;
            sy += val * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    // Centered coordinates on a full grid are mutually orthogonal.
    let a = s0 / (nx * ny) as f64;
    let b = if sxx > 0.0 { sx / sxx } else { 0.0 };
    let c = if syy > 0.0 { sy / syy } else { 0.0 };
    for y in 0..ny {
        for x in 0..nx {
            v[y * nx + x] -= a + b * (x as f64 - cx) + c * (y as f64 - cy);
        }
    }
}

/// Expected fraction of white-noise power that survives plane detrending,
/// per (unshifted) frequency.
fn detrend_retention(nx: usize, ny: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = nx * ny;
    let mut keep = vec![1.0; n];
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let bases: [Box<dyn Fn(usize, usize) -> f64>; 3] =
        [Box::new(|_, _| 1.0), Box::new(move |x, _| x as f64 - cx), Box::new(move |_, y| y as f64 - cy)];
    for basis in bases.iter() {
        let mut e: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(basis(i % nx, i / nx), 0.0)).collect();
        let norm: f64 = e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        e.iter_mut().for_each(|c| *c /= norm);
        fft2(&mut e, nx, ny, planner);
        for (k, c) in keep.iter_mut().zip(&e) {
            *k -= c.norm_sqr() / n as f64;
        }
    }
    keep
}

pub fn nps_estimate(realizations: &[Image], roi: Roi) -> Result<NpsResult> {
    let n = realizations.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("nps needs at least 2 realizations, got {n}")));
    }
    let first = &realizations[0];
    for r in &realizations[1..] {
        first.check_same_shape(r)?;
    }
    roi.check_within(first.width(), first.height())?;
    let (nx, ny) = (roi.w, roi.h);
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument("nps roi must be at least 2x2".into()));
    }
    let w = first.width();
    let sp = first.pixel_spacing_mm();
    let roi_values = |img: &Image| -> Vec<f64> {
        let mut out = Vec::with_capacity(nx * ny);
        for y in roi.y0..roi.y0 + ny {
            out.extend(img.data()[y * w + roi.x0..y * w + roi.x0 + nx].iter().map(|&v| v as f64));
        }
        out
    };
    let mut mean = vec![0.0; nx * ny];
    for r in realizations {
        for (m, v) in mean.iter_mut().zip(roi_values(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let scale = (n as f64 / (n as f64 - 1.0)).sqrt();
    let spectra: Vec<Vec<f64>> = realizations
        .par_iter()
        .map(|r| {
            let mut v: Vec<f64> = roi_values(r).iter().zip(&mean).map(|(a, m)| (a - m) * scale).collect();
            detrend_plane(&mut v, nx, ny);
            let mut c: Vec<Complex<f64>> = v.into_iter().map(|x| Complex::new(x, 0.0)).collect();
            fft2(&mut c, nx, ny, &mut FftPlanner::new());
            c.into_iter().map(|z| z.norm_sqr()).collect()
        })
        .collect();
    let keep = detrend_retention(nx, ny, &mut FftPlanner::new());
    let norm = sp * sp / (nx * ny) as f64 / n as f64;
    let mut nps2d = vec![0.0; nx * ny];
    for ky in 0..ny {
        for kx in 0..nx {
            let k = ky * nx + kx;
            let total: f64 = spectra.iter().map(|s| s[k]).sum();
            // Fully removed components (DC) stay at zero.
            let corr = if keep[k] > 1e-9 { 1.0 / keep[k] } else { 0.0 };
            let row = (ky + ny / 2) % ny;
            let col = (kx + nx / 2) % nx;
            nps2d[row * nx + col] = total * norm * corr;
        }
    }
    let du = 1.0 / (nx as f64 * sp);
    let dv = 1.0 / (ny as f64 * sp);
    let df = du.max(dv);
    let n_bins = nx.min(ny) / 2 + 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for row in 0..ny {
        for col in 0..nx {
            let u = (col as f64 - (nx / 2) as f64) * du;
            let v = (row as f64 - (ny / 2) as f64) * dv;
            let b = (u.hypot(v) / df).round() as usize;
            if b < n_bins {
                sums[b] += nps2d[row * nx + col];
                counts[b] += 1;
            }
        }
    }
    let radial_freqs = (0..n_bins).map(|k| k as f64 * df).collect();
    let radial_values = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    Ok(NpsResult { nx, ny, du, dv, nps2d, radial_freqs, radial_values, n_realizations: n, roi_size: nx.max(ny) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, size: usize, sigma: f64, seed: u64) -> Vec<Image> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sigma).unwrap();
        (0..n)
            .map(|_| {
                let d = (0..size * size).map(|_| dist.sample(&mut rng) as f32 + 40.0).collect();
                Image::new(size, size, 0.5, d).unwrap()
            })
            .collect()
    }

    #[test]
    fn detrend_removes_planes_exactly() {
        let mut v: Vec<f64> = (0..20).map(|i| 3.0 + 0.5 * (i % 5) as f64 - 2.0 * (i / 5) as f64).collect();
        detrend_plane(&mut v, 5, 4);
        assert!(v.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn retention_matches_monte_carlo_intuition() {
        let keep = detrend_retention(16, 16, &mut FftPlanner::new());
        assert!(keep[0].abs() < 1e-12);
        // Ramps live on the axes only.
        assert!((keep[16 + 1] - 1.0).abs() < 1e-12);
        assert!(keep[1] < 0.75 && keep[1] > 0.6);
        let removed: f64 = keep.iter().map(|k| 1.0 - k).sum();
        assert!((removed - 3.0).abs() < 1e-9);
    }

    #[test]
    fn white_noise_is_flat_and_parseval_holds() {
        let sigma = 20.0;
        let imgs = white(50, 128, sigma, 3);
        let nps = nps_estimate(&imgs, Roi::new(0, 0, 128, 128)).unwrap();
        let expect = sigma * sigma * 0.25;
        for (f, v) in nps.radial_curve() {
            assert!((v / expect - 1.0).abs() < 0.15, "f {f}: {v} vs {expect}");
        }
        let var: f64 = {
            let mut total = 0.0;
            for img in &imgs {
                total += img.data().iter().map(|&x| (x as f64 - 40.0).powi(2)).sum::<f64>();
            }
            total / (50.0 * 128.0 * 128.0)
        };
        assert!((nps.integral() / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn conjugate_symmetry_and_nonnegativity() {
        let imgs = white(4, 32, 5.0, 4);
        let nps = nps_estimate(&imgs, Roi::new(0, 0, 32, 32)).unwrap();
        assert!(nps.nps2d.iter().all(|&v| v >= 0.0));
        for row in 1..32 {
            for col in 1..32 {
                let a = nps.nps2d[row * 32 + col];
                let b = nps.nps2d[(32 - row) * 32 + (32 - col)];
                assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }

    #[test]
    fn identical_realizations_give_zero_and_scaling_is_quadratic() {
        let one = white(1, 16, 3.0, 5).remove(0);
        let nps = nps_estimate(&[one.clone(), one.clone(), one], Roi::new(0, 0, 16, 16)).unwrap();
        assert!(nps.nps2d.iter().all(|&v| v == 0.0));

        let imgs = white(5, 16, 3.0, 6);
        let scaled: Vec<Image> = imgs.iter().map(|i| i.map(|v| v * 4.0).unwrap()).collect();
        let a = nps_estimate(&imgs, Roi::new(0, 0, 16, 16)).unwrap();
        let b = nps_estimate(&scaled, Roi::new(0, 0, 16, 16)).unwrap();
        for (x, y) in a.nps2d.iter().zip(&b.nps2d) {
            assert!((y - 16.0 * x).abs() <= 1e-6 * y.abs().max(1e-9));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let imgs = white(3, 16, 1.0, 7);
        assert!(nps_estimate(&imgs[..1], Roi::new(0, 0, 8, 8)).is_err());
        assert!(nps_estimate(&imgs, Roi::new(10, 10, 8, 8)).is_err());
    }
}

//! Circular-edge MTF of a disk insert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::phantom::{pixel_center_mm, DiskInsert};

/// ESF bins per pixel.
pub const OVERSAMPLE: usize = 8;
/// Minimum insert/background contrast for a usable edge.
pub const MIN_CONTRAST_HU: f64 = 20.0;
/// Frequency samples between DC and Nyquist.
pub const FREQ_SAMPLES: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtfCurve {
    /// Insert HU the curve was measured on.
    pub contrast_hu: f64,
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub mtf50: f64,
}

impl MtfCurve {
    pub fn nyquist(&self) -> f64 {
        *self.freqs.last().expect("non-empty curve")
    }

    /// Linear interpolation at `f` (clamped to the sampled range).
    pub fn at(&self, f: f64) -> f64 {
        let df = self.freqs[1] - self.freqs[0];
        let t = (f / df).clamp(0.0, (self.freqs.len() - 1) as f64);
        let i = (t.floor() as usize).min(self.freqs.len() - 2);
        let w = t - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// First downward crossing of 0.5, linearly interpolated. Curves that stay
/// above 0.5 up to Nyquist report Nyquist.
pub fn mtf50(freqs: &[f64], values: &[f64]) -> f64 {
    for k in 1..values.len() {
        if values[k - 1] >= 0.5 && values[k] < 0.5 {
            let t = (values[k - 1] - 0.5) / (values[k - 1] - values[k]);
            return freqs[k - 1] + t * (freqs[k] - freqs[k - 1]);
        }
    }
    *freqs.last().unwrap_or(&0.0)
}

/// Radius range used around the edge: a Hann taper of half-width `h`
/// centered on the edge.
fn taper_half_width(img: &Image, insert: &DiskInsert) -> Result<f64> {
    let sp = img.pixel_spacing_mm();
    let half_w = img.width() as f64 * sp / 2.0;
    let half_h = img.height() as f64 * sp / 2.0;
    let room = (half_w - insert.cx_mm.abs()).min(half_h - insert.cy_mm.abs());
    if room < insert.radius_mm + sp {
        return Err(Error::OutOfBounds(format!(
            "insert at ({}, {}) mm with radius {} mm is clipped by the image border",
            insert.cx_mm, insert.cy_mm, insert.radius_mm
        )));
    }
    let h = (0.8 * insert.radius_mm).min(room - insert.radius_mm - 0.5 * sp);
    if h < 3.0 * sp {
        return Err(Error::OutOfBounds("too little margin around the insert edge for an MTF".into()));
    }
    Ok(h)
}

/// MTF from the radial edge of `insert`, normalized at DC.
pub fn mtf_from_disk(img: &Image, insert: &DiskInsert, background_hu: f64) -> Result<MtfCurve> {
    if (insert.hu - background_hu).abs() < MIN_CONTRAST_HU {
        return Err(Error::InvalidArgument(format!(
            "insert contrast {} HU is below the {MIN_CONTRAST_HU} HU needed for an MTF",
            insert.hu - background_hu
        )));
    }
    let sp = img.pixel_spacing_mm();
    let h = taper_half_width(img, insert)?;
    let delta = sp / OVERSAMPLE as f64;
    // Bins cover r0 − h − 2δ .. r0 + h + 2δ; the extra bins feed smoothing
    // and differencing at the ends.
    let r_lo = insert.radius_mm - h - 2.0 * delta;
    let n_bins = ((2.0 * h + 4.0 * delta) / delta).ceil() as usize + 1;
    let mut sum = vec![0.0f64; n_bins];
    let mut count = vec![0usize; n_bins];
    let (w, ht) = (img.width(), img.height());
    let r_hi = r_lo + n_bins as f64 * delta;
    let x_min = (((insert.cx_mm - r_hi) / sp + w as f64 / 2.0).floor().max(0.0)) as usize;
    let x_max = (((insert.cx_mm + r_hi) / sp + w as f64 / 2.0).ceil() as usize).min(w);
    let y_min = ((ht as f64 / 2.0 - (insert.cy_mm + r_hi) / sp).floor().max(0.0)) as usize;
    let y_max = ((ht as f64 / 2.0 - (insert.cy_mm - r_hi) / sp).ceil() as usize).min(ht);
    for y in y_min..y_max {
        for x in x_min..x_max {
            let (px, py) = pixel_center_mm(x as f64, y as f64, w, ht, sp);
            let r = (px - insert.cx_mm).hypot(py - insert.cy_mm);
            if r < r_lo {
                continue;
            }
            let b = ((r - r_lo) / delta) as usize;
            if b < n_bins {
                sum[b] += img.get(x, y) as f64;
                count[b] += 1;
            }
        }
    }
    let esf = fill_empty_bins(&sum, &count)?;
    let smooth: Vec<f64> = (0..n_bins)
        .map(|i| {
            let a = esf[i.saturating_sub(1)];
            let c = esf[(i + 1).min(n_bins - 1)];
            (a + esf[i] + c) / 3.0
        })
        .collect();
    // Central-difference LSF with its Hann taper, sampled at bin centers.
    let mut lsf = Vec::with_capacity(n_bins);
    for i in 1..n_bins - 1 {
        let r = r_lo + (i as f64 + 0.5) * delta;
        let d = r - insert.radius_mm;
        if d.abs() > h {
            continue;
        }
        let taper = 0.5 * (1.0 + (std::f64::consts::PI * d / h).cos());
        lsf.push((d, taper * (smooth[i + 1] - smooth[i - 1]) / (2.0 * delta)));
    }
    let nyquist = 1.0 / (2.0 * sp);
    let freqs: Vec<f64> = (0..=FREQ_SAMPLES).map(|k| nyquist * k as f64 / FREQ_SAMPLES as f64).collect();
    let dc: f64 = lsf.iter().map(|&(_, v)| v).sum();
    if !(dc.abs() > 0.0) {
        return Err(Error::Numerical("edge-spread function has no step".into()));
    }
    let values: Vec<f64> = freqs
        .iter()
        .map(|&f| {
            let (mut re, mut im) = (0.0, 0.0);
            for &(d, v) in &lsf {
                let ph = -2.0 * std::f64::consts::PI * f * d;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            re.hypot(im) / dc.abs()
        })
        .collect();
    let m50 = mtf50(&freqs, &values);
    Ok(MtfCurve { contrast_hu: insert.hu, freqs, values, mtf50: m50 })
}

/// Bin means, with empty bins linearly interpolated from their neighbors.
fn fill_empty_bins(sum: &[f64], count: &[usize]) -> Result<Vec<f64>> {
    let known: Vec<usize> = (0..sum.len()).filter(|&i| count[i] > 0).collect();
    if known.len() < 2 {
        return Err(Error::Numerical("too few pixels around the insert edge".into()));
    }
    let mean = |i: usize| sum[i] / count[i] as f64;
    let mut out = vec![0.0; sum.len()];
    let mut j = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while j + 1 < known.len() && known[j + 1] <= i {
            j += 1;
        }
        *o = if count[i] > 0 {
            mean(i)
        } else if i < known[0] {
            mean(known[0])
        } else if j + 1 >= known.len() {
            mean(*known.last().unwrap())
        } else {
            let (a, b) = (known[j], known[j + 1]);
            let t = (i - a) as f64 / (b - a) as f64;
            mean(a) + t * (mean(b) - mean(a))
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::gaussian_denoise;
    use crate::phantom::{make_contrast_phantom, rasterize};

    fn disk_image() -> (Image, DiskInsert) {
        let spec = make_contrast_phantom();
        let img = rasterize(&spec, 512, 512, 0.5, 8).unwrap();
        (img, spec.inserts[0])
    }

    #[test]
    fn mtf50_first_downward_crossing() {
        let f = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(mtf50(&f, &[1.0, 0.8, 0.4, 0.6, 0.2]), 1.75);
        assert_eq!(mtf50(&f, &[1.0, 0.9, 0.8, 0.7, 0.6]), 4.0);
    }

    #[test]
    fn curve_invariants_and_sharp_raster() {
        let (img, ins) = disk_image();
        let c = mtf_from_disk(&img, &ins, 0.0).unwrap();
        assert!((c.values[0] - 1.0).abs() < 1e-12);
        assert!(c.freqs.windows(2).all(|p| p[1] > p[0]));
        assert!((c.nyquist() - 1.0).abs() < 1e-12);
        assert!(c.mtf50 >= 0.7 * c.nyquist(), "{}", c.mtf50);
    }

    #[test]
    fn gaussian_blur_matches_closed_form() {
        let (img, ins) = disk_image();
        let base = mtf_from_disk(&img, &ins, 0.0).unwrap();
        for sigma_px in [0.5, 1.0] {
            let blurred = gaussian_denoise(&img, sigma_px).unwrap();
            let c = mtf_from_disk(&blurred, &ins, 0.0).unwrap();
            let s = sigma_px * 0.5;
            for (k, &f) in c.freqs.iter().enumerate().filter(|(_, &f)| f <= 0.8) {
                let expect = (-2.0 * std::f64::consts::PI.powi(2) * s * s * f * f).exp() * base.values[k];
                assert!((c.values[k] - expect).abs() < 0.05, "sigma {sigma_px} f {f}: {} vs {expect}", c.values[k]);
            }
        }
    }

    #[test]
    fn affine_remap_leaves_mtf50_unchanged() {
        let (img, ins) = disk_image();
        let a = mtf_from_disk(&img, &ins, 0.0).unwrap();
        let stretched = img.map(|v| 2.5 * v - 300.0).unwrap();
        let moved = DiskInsert { hu: 2.5 * ins.hu - 300.0, ..ins };
        let b = mtf_from_disk(&stretched, &moved, -300.0).unwrap();
        assert!((a.mtf50 - b.mtf50).abs() < 1e-4);
    }

    #[test]
    fn rejects_low_contrast_and_clipped_disks() {
        let (img, ins) = disk_image();
        assert!(mtf_from_disk(&img, &DiskInsert { hu: 10.0, ..ins }, 0.0).is_err());
        assert!(mtf_from_disk(&img, &DiskInsert { cx_mm: 125.0, ..ins }, 0.0).is_err());
    }
}

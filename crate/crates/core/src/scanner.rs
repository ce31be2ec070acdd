//! Parallel-beam CT simulation: ray-driven forward projection, transmission
//! Poisson noise and filtered backprojection with sharp or smooth kernels.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_raster, write_raster, Image};
use crate::phantom::{self, pixel_center_mm, PhantomSpec};

/// Linear attenuation of water at roughly 60 keV effective energy.
pub const DEFAULT_MU_WATER: f64 = 0.019;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Un-apodized ramp (Ram-Lak).
    Sharp,
    /// Ramp with a Hann window reaching zero at the detector Nyquist frequency.
    Smooth,
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(Kernel::Sharp),
            "smooth" => Ok(Kernel::Smooth),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub n_views: usize,
    pub n_detectors: usize,
    pub detector_spacing_mm: f64,
    /// Mean unattenuated photon count per ray at full dose.
    pub i0: f64,
    pub kernel: Kernel,
    #[serde(default = "default_mu_water")]
    pub mu_water: f64,
}

fn default_mu_water() -> f64 {
    DEFAULT_MU_WATER
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            n_views: 720,
            n_detectors: 729,
            detector_spacing_mm: 0.4,
            i0: 1.0e5,
            kernel: Kernel::Sharp,
            mu_water: DEFAULT_MU_WATER,
        }
    }
}

impl ScanGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 || self.n_detectors == 0 {
            return Err(Error::InvalidArgument("geometry needs at least one view and detector".into()));
        }
        if !(self.i0 > 0.0) || !(self.detector_spacing_mm > 0.0) || !(self.mu_water > 0.0) {
            return Err(Error::InvalidArgument(
                "i0, detector spacing and mu_water must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Half-width of the detector array in millimeters.
    pub fn half_span_mm(&self) -> f64 {
        0.5 * self.n_detectors as f64 * self.detector_spacing_mm
    }

    #[inline]
    fn detector_position(&self, d: usize) -> f64 {
        (d as f64 - 0.5 * (self.n_detectors as f64 - 1.0)) * self.detector_spacing_mm
    }

    fn angles(&self) -> Vec<(f64, f64)> {
        (0..self.n_views)
            .map(|k| {
                let theta = PI * k as f64 / self.n_views as f64;
                (theta.cos(), theta.sin())
            })
            .collect()
    }
}

/// Attenuation coefficients in mm⁻¹ on the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMap {
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_mm: f64,
    pub data: Vec<f32>,
}

pub fn hu_to_mu(img: &Image, mu_water: f64) -> AttenuationMap {
    let data = img
        .data()
        .iter()
        .map(|&hu| (mu_water * (1.0 + hu as f64 / 1000.0)).max(0.0) as f32)
        .collect();
    AttenuationMap {
        width: img.width(),
        height: img.height(),
        pixel_spacing_mm: img.pixel_spacing_mm(),
        data,
    }
}

pub fn mu_to_hu(mu: f64, mu_water: f64) -> f64 {
    1000.0 * (mu / mu_water - 1.0)
}

/// View-major grid of line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_views: usize,
    pub n_detectors: usize,
    pub detector_spacing_mm: f64,
    pub data: Vec<f32>,
}

impl Sinogram {
    pub fn view(&self, k: usize) -> &[f32] {
        &self.data[k * self.n_detectors..(k + 1) * self.n_detectors]
    }

    fn check_geometry(&self, geom: &ScanGeometry) -> Result<()> {
        if self.n_views != geom.n_views || self.n_detectors != geom.n_detectors {
            return Err(Error::Dimension(format!(
                "sinogram is {}x{}, geometry expects {}x{}",
                self.n_views, self.n_detectors, geom.n_views, geom.n_detectors
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SinogramSidecar {
    n_views: usize,
    n_detectors: usize,
    detector_spacing_mm: f64,
}

pub fn write_sinogram(path: impl AsRef<Path>, sino: &Sinogram) -> Result<()> {
    let meta = SinogramSidecar {
        n_views: sino.n_views,
        n_detectors: sino.n_detectors,
        detector_spacing_mm: sino.detector_spacing_mm,
    };
    write_raster(path, &meta, &sino.data)
}

pub fn read_sinogram(path: impl AsRef<Path>) -> Result<Sinogram> {
    let (meta, data): (SinogramSidecar, Vec<f32>) = read_raster(path)?;
    if data.len() != meta.n_views * meta.n_detectors {
        return Err(Error::DataLength {
            expected: meta.n_views * meta.n_detectors,
            found: data.len(),
        });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(Sinogram {
        n_views: meta.n_views,
        n_detectors: meta.n_detectors,
        detector_spacing_mm: meta.detector_spacing_mm,
        data,
    })
}

#[inline]
fn bilinear(mu: &AttenuationMap, col: f64, row: f64) -> f64 {
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = col - c0;
    let fr = row - r0;
    let (c0, r0) = (c0 as isize, r0 as isize);
    let (w, h) = (mu.width as isize, mu.height as isize);
    let fetch = |c: isize, r: isize| -> f64 {
        if c >= 0 && c < w && r >= 0 && r < h {
            mu.data[(r * w + c) as usize] as f64
        } else {
            0.0
        }
    };
    let top = fetch(c0, r0) * (1.0 - fc) + fetch(c0 + 1, r0) * fc;
    let bottom = fetch(c0, r0 + 1) * (1.0 - fc) + fetch(c0 + 1, r0 + 1) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Ray-driven projection with bilinear sampling every half pixel.
///
/// Rays are integrated over the chord of the circle that the detector array
/// covers, so sample positions depend on the geometry only and the operator
/// is exactly linear in `mu`.
pub fn forward_project(mu: &AttenuationMap, geom: &ScanGeometry) -> Result<Sinogram> {
    geom.validate()?;
    let spacing = mu.pixel_spacing_mm;
    let radius = geom.half_span_mm();

    // Everything non-zero must be seen by every view.
    let mut support = 0.0f64;
    for row in 0..mu.height {
        for col in 0..mu.width {
            if mu.data[row * mu.width + col] != 0.0 {
                let (x, y) = pixel_center_mm(col as f64, row as f64, mu.width, mu.height, spacing);
                let r = x.hypot(y);
                if r + spacing * std::f64::consts::FRAC_1_SQRT_2 > radius {
                    return Err(Error::Dimension(format!(
                        "object extends beyond the detector coverage radius {radius} mm"
                    )));
                }
                support = support.max(r);
            }
        }
    }
    // Bilinear samples farther out than this touch only zero pixels; they
    // are skipped, which leaves every sum bit-for-bit unchanged.
    let support = support + 1.5 * spacing;

    let step_target = 0.5 * spacing;
    let half_w = mu.width as f64 / 2.0;
    let half_h = mu.height as f64 / 2.0;
    let angles = geom.angles();
    let mut data = vec![0.0f32; geom.n_views * geom.n_detectors];
    data.par_chunks_mut(geom.n_detectors)
        .zip(angles.par_iter())
        .for_each(|(out, &(c, s))| {
            for (d, value) in out.iter_mut().enumerate() {
                let t = geom.detector_position(d);
                if t.abs() >= radius {
                    continue;
                }
                let chord = (radius * radius - t * t).sqrt();
                let n = (2.0 * chord / step_target).ceil().max(1.0) as usize;
                let h = 2.0 * chord / n as f64;
                // Ray point: t*(c, s) + u*(-s, c), u from -chord to chord.
                if t.abs() >= support {
                    continue;
                }
                let reach = (support * support - t * t).sqrt();
                let k0 = (((chord - reach) / h - 0.5).floor().max(0.0)) as usize;
                let k1 = ((((chord + reach) / h - 0.5).ceil() + 1.0) as usize).min(n);
                let mut acc = 0.0;
                for k in k0..k1 {
                    let u = -chord + (k as f64 + 0.5) * h;
                    let x = t * c - u * s;
                    let y = t * s + u * c;
                    let col = x / spacing + half_w - 0.5;
                    let row = half_h - 0.5 - y / spacing;
                    acc += bilinear(mu, col, row);
                }
                *value = (acc * h) as f32;
            }
        });
    Ok(Sinogram {
        n_views: geom.n_views,
        n_detectors: geom.n_detectors,
        detector_spacing_mm: geom.detector_spacing_mm,
        data,
    })
}

/// Transmission-domain Poisson noise at `dose_fraction` of the full-dose
/// photon budget. Zero-count rays are floored at one count.
pub fn add_poisson_noise(
    sino: &Sinogram,
    geom: &ScanGeometry,
    dose_fraction: f64,
    seed: u64,
) -> Result<Sinogram> {
    if !(dose_fraction > 0.0 && dose_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dose fraction must lie in (0, 1], got {dose_fraction}"
        )));
    }
    geom.validate()?;
    let budget = dose_fraction * geom.i0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(sino.data.len());
    for &p in &sino.data {
        let lambda = budget * (-(p as f64)).exp();
        let counts = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::Numerical(format!("poisson rate {lambda}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        data.push((-(counts.max(1.0) / budget).ln()) as f32);
    }
    Ok(Sinogram { data, ..sino.clone() })
}

/// Frequency response of the reconstruction kernel on an FFT grid of `len`
/// (a power of two), including the detector-spacing factor of the discrete
/// convolution.
fn filter_response(kernel: Kernel, len: usize, spacing: f64) -> Vec<f64> {
    // Band-limited ramp in the spatial domain, wrapped circularly.
    let mut h = vec![Complex::new(0.0, 0.0); len];
    h[0].re = 1.0 / (4.0 * spacing * spacing);
    for n in 1..len / 2 {
        if n % 2 == 1 {
            let v = -1.0 / ((n * n) as f64 * PI * PI * spacing * spacing);
            h[n].re = v;
            h[len - n].re = v;
        }
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    (0..len)
        .map(|k| {
            let ramp = h[k].re * spacing;
            match kernel {
                Kernel::Sharp => ramp,
                Kernel::Smooth => {
                    let kk = k.min(len - k) as f64;
                    // f / f_nyquist
                    let rel = 2.0 * kk / len as f64;
                    ramp * 0.5 * (1.0 + (PI * rel).cos())
                }
            }
        })
        .collect()
}

/// Filters every view with the geometry's kernel.
pub fn filter_sinogram(sino: &Sinogram, geom: &ScanGeometry) -> Result<Vec<f64>> {
    sino.check_geometry(geom)?;
    let n = geom.n_detectors;
    let len = (2 * n).next_power_of_two();
    let response = filter_response(geom.kernel, len, geom.detector_spacing_mm);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = vec![0.0f64; geom.n_views * n];
    out.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (b, &p) in buf.iter_mut().zip(sino.view(k)) {
            b.re = p as f64;
        }
        fwd.process(&mut buf);
        for (b, &r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        let scale = 1.0 / len as f64;
        for (o, b) in row.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    });
    Ok(out)
}

/// Filtered backprojection onto a `width`×`height` grid, returned in HU.
pub fn fbp(
    sino: &Sinogram,
    geom: &ScanGeometry,
    width: usize,
    height: usize,
    spacing_mm: f64,
) -> Result<Image> {
    geom.validate()?;
    if width == 0 || height == 0 || !(spacing_mm > 0.0) {
        return Err(Error::InvalidArgument("empty reconstruction grid".into()));
    }
    let inscribed = 0.5 * width.max(height) as f64 * spacing_mm;
    if inscribed > geom.half_span_mm() + 1e-9 {
        return Err(Error::OutOfBounds(format!(
            "reconstruction grid half-width {inscribed} mm exceeds detector half-span {} mm",
            geom.half_span_mm()
        )));
    }
    let filtered = filter_sinogram(sino, geom)?;
    let angles = geom.angles();
    let n = geom.n_detectors;
    let center = 0.5 * (n as f64 - 1.0);
    let inv_det = 1.0 / geom.detector_spacing_mm;
    let weight = PI / geom.n_views as f64;
    let mu_w = geom.mu_water;
    let last = (n - 1) as f64;

    let mut data = vec![0.0f32; width * height];
    data.par_chunks_mut(width).enumerate().for_each(|(row, out)| {
        let mut acc = vec![0.0f64; width];
        let (x0, y) = pixel_center_mm(0.0, row as f64, width, height, spacing_mm);
        for (k, &(c, s)) in angles.iter().enumerate() {
            let q = &filtered[k * n..(k + 1) * n];
            let u0 = (x0 * c + y * s) * inv_det + center;
            let du = spacing_mm * c * inv_det;
            for (col, a) in acc.iter_mut().enumerate() {
                let u = u0 + col as f64 * du;
                if u >= 0.0 && u <= last {
                    let i = (u.floor() as usize).min(n.saturating_sub(2));
                    let f = u - i as f64;
                    *a += q[i] * (1.0 - f) + q[(i + 1).min(n - 1)] * f;
                }
            }
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = mu_to_hu(a * weight, mu_w) as f32;
        }
    });
    Image::new(width, height, spacing_mm, data)
}

/// Canvas, supersampling and scanner geometry for a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSetup {
    pub width: usize,
    pub height: usize,
    pub spacing_mm: f64,
    pub supersample: usize,
    pub geometry: ScanGeometry,
}

impl Default for ScanSetup {
    fn default() -> Self {
        Self {
            width: phantom::DEFAULT_CANVAS_PX,
            height: phantom::DEFAULT_CANVAS_PX,
            spacing_mm: phantom::DEFAULT_SPACING_MM,
            supersample: phantom::DEFAULT_SUPERSAMPLE,
            geometry: ScanGeometry::default(),
        }
    }
}

impl ScanSetup {
    pub fn with_kernel(&self, kernel: Kernel) -> Self {
        let mut out = self.clone();
        out.geometry.kernel = kernel;
        out
    }

    pub fn ground_truth(&self, spec: &PhantomSpec) -> Result<Image> {
        phantom::rasterize(spec, self.width, self.height, self.spacing_mm, self.supersample)
    }

    pub fn noiseless_sinogram(&self, spec: &PhantomSpec) -> Result<Sinogram> {
        let truth = self.ground_truth(spec)?;
        forward_project(&hu_to_mu(&truth, self.geometry.mu_water), &self.geometry)
    }

    pub fn reconstruct(&self, sino: &Sinogram) -> Result<Image> {
        fbp(sino, &self.geometry, self.width, self.height, self.spacing_mm)
    }

    /// One noisy acquisition of a pre-computed noiseless sinogram.
    pub fn noisy_recon(&self, clean: &Sinogram, dose_fraction: f64, seed: u64) -> Result<Image> {
        let noisy = add_poisson_noise(clean, &self.geometry, dose_fraction, seed)?;
        self.reconstruct(&noisy)
    }

    pub fn scan(&self, spec: &PhantomSpec, dose_fraction: f64, seed: u64) -> Result<Image> {
        let clean = self.noiseless_sinogram(spec)?;
        self.noisy_recon(&clean, dose_fraction, seed)
    }
}

/// `n` independent noisy reconstructions seeded `seed`, `seed + 1`, ...
pub fn make_noise_ensemble(
    spec: &PhantomSpec,
    setup: &ScanSetup,
    n: usize,
    dose_fraction: f64,
    seed: u64,
) -> Result<Vec<Image>> {
    let clean = setup.noiseless_sinogram(spec)?;
    ensemble_from_sinogram(&clean, setup, n, dose_fraction, seed)
}

pub fn ensemble_from_sinogram(
    clean: &Sinogram,
    setup: &ScanSetup,
    n: usize,
    dose_fraction: f64,
    seed: u64,
) -> Result<Vec<Image>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("ensemble needs at least 2 realizations, got {n}")));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| setup.noisy_recon(clean, dose_fraction, seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geom() -> ScanGeometry {
        ScanGeometry {
            n_views: 90,
            n_detectors: 129,
            detector_spacing_mm: 1.0,
            i0: 1.0e5,
            kernel: Kernel::Sharp,
            mu_water: DEFAULT_MU_WATER,
        }
    }

    #[test]
    fn hu_to_mu_definition() {
        let img = Image::new(3, 1, 1.0, vec![0.0, -1000.0, 900.0]).unwrap();
        let mu = hu_to_mu(&img, 0.019);
        assert!((mu.data[0] as f64 - 0.019).abs() < 1e-9);
        assert_eq!(mu.data[1], 0.0);
        assert!((mu.data[2] as f64 - 0.0361).abs() < 1e-8);
        let below = Image::new(1, 1, 1.0, vec![-1500.0]).unwrap();
        assert_eq!(hu_to_mu(&below, 0.019).data[0], 0.0);
    }

    #[test]
    fn zero_map_projects_to_zero() {
        let img = Image::filled(64, 64, 1.0, -1000.0).unwrap();
        let sino = forward_project(&hu_to_mu(&img, 0.019), &small_geom()).unwrap();
        assert!(sino.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn object_outside_coverage_is_rejected() {
        let img = Image::filled(256, 256, 1.0, 0.0).unwrap();
        assert!(forward_project(&hu_to_mu(&img, 0.019), &small_geom()).is_err());
    }

    #[test]
    fn recon_grid_outside_coverage_is_rejected() {
        let geom = small_geom();
        let sino = Sinogram {
            n_views: 90,
            n_detectors: 129,
            detector_spacing_mm: 1.0,
            data: vec![0.0; 90 * 129],
        };
        assert!(fbp(&sino, &geom, 200, 200, 1.0).is_err());
        assert!(fbp(&sino, &geom, 128, 128, 1.0).is_ok());
    }

    #[test]
    fn noise_is_seeded_and_dose_checked() {
        let geom = small_geom();
        let sino = Sinogram {
            n_views: 2,
            n_detectors: 3,
            detector_spacing_mm: 1.0,
            data: vec![0.5, 1.0, 2.0, 3.0, 0.1, 0.0],
        };
        let a = add_poisson_noise(&sino, &geom, 0.25, 7).unwrap();
        let b = add_poisson_noise(&sino, &geom, 0.25, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, add_poisson_noise(&sino, &geom, 0.25, 8).unwrap());
        assert!(add_poisson_noise(&sino, &geom, 0.0, 7).is_err());
        assert!(add_poisson_noise(&sino, &geom, 1.5, 7).is_err());
    }

    #[test]
    fn zero_count_rays_are_floored() {
        let geom = ScanGeometry { i0: 10.0, ..small_geom() };
        let sino = Sinogram {
            n_views: 1,
            n_detectors: 4,
            detector_spacing_mm: 1.0,
            data: vec![50.0; 4],
        };
        let noisy = add_poisson_noise(&sino, &geom, 0.25, 1).unwrap();
        let cap = -(1.0f64 / 2.5).ln() as f32;
        assert!(noisy.data.iter().all(|&v| v == cap));
    }

    #[test]
    fn smooth_kernel_rolls_off() {
        let sharp = filter_response(Kernel::Sharp, 256, 1.0);
        let smooth = filter_response(Kernel::Smooth, 256, 1.0);
        assert!(smooth[128].abs() < 1e-12);
        assert!((sharp[128] - 0.5).abs() < 1e-3, "ramp at nyquist {}", sharp[128]);
        assert!(sharp[0] > 0.0 && sharp[0] < 0.01);
        for k in 1..128 {
            assert!(smooth[k] <= sharp[k] + 1e-15);
        }
    }

    #[test]
    fn sinogram_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sino = Sinogram {
            n_views: 2,
            n_detectors: 2,
            detector_spacing_mm: 0.4,
            data: vec![0.0, 1.5, 2.25, 3.0],
        };
        write_sinogram(dir.path().join("s"), &sino).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
        assert!(text.contains("n_views") && text.contains("detector_spacing_mm"));
        assert_eq!(read_sinogram(dir.path().join("s")).unwrap(), sino);
    }

    #[test]
    fn ensemble_needs_two() {
        let setup = ScanSetup {
            width: 64,
            height: 64,
            spacing_mm: 1.0,
            supersample: 2,
            geometry: small_geom(),
        };
        let spec = PhantomSpec {
            body_radius_mm: 20.0,
            ..phantom::make_water_cylinder()
        };
        assert!(make_noise_ensemble(&spec, &setup, 1, 0.25, 0).is_err());
        let a = make_noise_ensemble(&spec, &setup, 3, 0.25, 11).unwrap();
        let b = make_noise_ensemble(&spec, &setup, 3, 0.25, 11).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}

//! Analytic disk phantoms and their anti-aliased rasterization.
//!
//! Phantom coordinates are millimeters relative to the image center with
//! `y` pointing up; image rows run top to bottom.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub const AIR_HU: f64 = -1000.0;
pub const WATER_HU: f64 = 0.0;

/// Insert contrasts of the contrast phantom, in ring order.
pub const CONTRAST_LEVELS_HU: [f64; 4] = [900.0, 340.0, 120.0, -35.0];

pub const DEFAULT_BODY_RADIUS_MM: f64 = 100.0;
pub const DEFAULT_CANVAS_PX: usize = 512;
pub const DEFAULT_SPACING_MM: f64 = 0.5;
pub const DEFAULT_SUPERSAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskInsert {
    pub cx_mm: f64,
    pub cy_mm: f64,
    pub radius_mm: f64,
    pub hu: f64,
}

impl DiskInsert {
    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx_mm;
        let dy = y - self.cy_mm;
        dx * dx + dy * dy <= self.radius_mm * self.radius_mm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub background_hu: f64,
    pub body_radius_mm: f64,
    pub body_hu: f64,
    pub inserts: Vec<DiskInsert>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.body_radius_mm > 0.0) {
            return Err(Error::InvalidArgument("body radius must be positive".into()));
        }
        for (i, ins) in self.inserts.iter().enumerate() {
            if !(ins.radius_mm > 0.0) {
                return Err(Error::InvalidArgument(format!("insert {i}: radius must be positive")));
            }
            if ins.cx_mm.hypot(ins.cy_mm) + ins.radius_mm > self.body_radius_mm {
                return Err(Error::InvalidArgument(format!("insert {i} is not inside the body")));
            }
            for (j, other) in self.inserts.iter().enumerate().skip(i + 1) {
                let d = (ins.cx_mm - other.cx_mm).hypot(ins.cy_mm - other.cy_mm);
                if d < ins.radius_mm + other.radius_mm {
                    return Err(Error::InvalidArgument(format!("inserts {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    /// HU of the analytic object at a point.
    pub fn hu_at(&self, x_mm: f64, y_mm: f64) -> f64 {
        if x_mm * x_mm + y_mm * y_mm > self.body_radius_mm * self.body_radius_mm {
            return self.background_hu;
        }
        self.inserts
            .iter()
            .find(|ins| ins.contains(x_mm, y_mm))
            .map_or(self.body_hu, |ins| ins.hu)
    }

    /// Smallest and largest HU present in the object.
    pub fn hu_range(&self) -> (f64, f64) {
        self.inserts
            .iter()
            .map(|i| i.hu)
            .chain([self.background_hu, self.body_hu])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PhantomSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Water body on air with four contrast inserts on a ring.
///
/// Ring radius is 0.55 of the body radius, inserts sit at 0°, 90°, 180° and
/// 270° (counter-clockwise from +x) in the order of [`CONTRAST_LEVELS_HU`],
/// each with radius 0.12 of the body radius.
pub fn make_contrast_phantom() -> PhantomSpec {
    contrast_phantom_with_levels(&CONTRAST_LEVELS_HU)
}

/// Contrast phantom geometry with caller-chosen insert values (e.g. 990 HU
/// in place of 900 HU for line-profile studies).
pub fn contrast_phantom_with_levels(levels: &[f64; 4]) -> PhantomSpec {
    let body = DEFAULT_BODY_RADIUS_MM;
    let ring = 0.55 * body;
    let radius = 0.12 * body;
    let inserts = levels
        .iter()
        .enumerate()
        .map(|(k, &hu)| {
            let angle = k as f64 * std::f64::consts::FRAC_PI_2;
            DiskInsert {
                cx_mm: ring * angle.cos(),
                cy_mm: ring * angle.sin(),
                radius_mm: radius,
                hu,
            }
        })
        .collect();
    PhantomSpec {
        background_hu: AIR_HU,
        body_radius_mm: body,
        body_hu: WATER_HU,
        inserts,
    }
}

pub fn make_water_cylinder() -> PhantomSpec {
    PhantomSpec {
        background_hu: AIR_HU,
        body_radius_mm: DEFAULT_BODY_RADIUS_MM,
        body_hu: WATER_HU,
        inserts: Vec::new(),
    }
}

/// A randomized disk phantom used to build training slices: water body of
/// random radius with `n_inserts` non-overlapping disks of random contrast.
pub fn make_random_phantom(seed: u64, body_radius_mm: f64, n_inserts: usize) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = body_radius_mm * rng.random_range(0.8..1.0);
    let mut inserts: Vec<DiskInsert> = Vec::with_capacity(n_inserts);
    let mut attempts = 0;
    while inserts.len() < n_inserts && attempts < 1000 {
        attempts += 1;
        let radius = body * rng.random_range(0.04..0.16);
        let max_off = body - radius - 1.0;
        let r = max_off * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let cand = DiskInsert {
            cx_mm: r * phi.cos(),
            cy_mm: r * phi.sin(),
            radius_mm: radius,
            hu: rng.random_range(-200.0..1000.0f64).round(),
        };
        let clear = inserts.iter().all(|o| {
            (o.cx_mm - cand.cx_mm).hypot(o.cy_mm - cand.cy_mm) > o.radius_mm + cand.radius_mm + 1.0
        });
        if clear {
            inserts.push(cand);
        }
    }
    PhantomSpec {
        background_hu: AIR_HU,
        body_radius_mm: body,
        body_hu: WATER_HU,
        inserts,
    }
}

/// Pixel-center coordinates in millimeters for column `x`, row `y`.
#[inline]
pub fn pixel_center_mm(x: f64, y: f64, width: usize, height: usize, spacing: f64) -> (f64, f64) {
    (
        (x + 0.5 - width as f64 / 2.0) * spacing,
        (height as f64 / 2.0 - y - 0.5) * spacing,
    )
}

/// Relation of an axis-aligned square to a circle.
#[derive(PartialEq)]
enum Coverage {
    Inside,
    Outside,
    Partial,
}

fn square_vs_circle(cx: f64, cy: f64, half: f64, ox: f64, oy: f64, r: f64) -> Coverage {
    let dx = (cx - ox).abs();
    let dy = (cy - oy).abs();
    let far = (dx + half).hypot(dy + half);
    if far < r {
        return Coverage::Inside;
    }
    let nx = (dx - half).max(0.0);
    let ny = (dy - half).max(0.0);
    if nx.hypot(ny) > r {
        Coverage::Outside
    } else {
        Coverage::Partial
    }
}

/// Area-weighted rasterization on a `supersample`² grid of sub-pixel samples.
///
/// Pixels that lie entirely within one region receive that region's HU
/// exactly.
pub fn rasterize(
    spec: &PhantomSpec,
    width: usize,
    height: usize,
    spacing_mm: f64,
    supersample: usize,
) -> Result<Image> {
    spec.validate()?;
    if !(1..=16).contains(&supersample) {
        return Err(Error::InvalidArgument(format!(
            "supersample must be in 1..=16, got {supersample}"
        )));
    }
    if width == 0 || height == 0 || !(spacing_mm > 0.0) {
        return Err(Error::InvalidArgument("canvas must be non-empty with positive spacing".into()));
    }
    let fov = width.min(height) as f64 * spacing_mm;
    if 2.0 * spec.body_radius_mm > fov {
        return Err(Error::InvalidArgument(format!(
            "phantom body diameter {} mm exceeds field of view {fov} mm",
            2.0 * spec.body_radius_mm
        )));
    }

    let half = 0.5 * spacing_mm;
    let s = supersample;
    let mut data = vec![0.0f32; width * height];
    data.par_chunks_mut(width).enumerate().for_each(|(row, out)| {
        for (col, px) in out.iter_mut().enumerate() {
            let (cx, cy) = pixel_center_mm(col as f64, row as f64, width, height, spacing_mm);
            *px = rasterize_pixel(spec, cx, cy, half, s) as f32;
        }
    });
    Image::new(width, height, spacing_mm, data)
}

fn rasterize_pixel(spec: &PhantomSpec, cx: f64, cy: f64, half: f64, s: usize) -> f64 {
    // Uniform coverage: a single region owns the whole pixel.
    match square_vs_circle(cx, cy, half, 0.0, 0.0, spec.body_radius_mm) {
        Coverage::Outside => return spec.background_hu,
        Coverage::Inside => {
            let mut partial = false;
            for ins in &spec.inserts {
                match square_vs_circle(cx, cy, half, ins.cx_mm, ins.cy_mm, ins.radius_mm) {
                    Coverage::Inside => return ins.hu,
                    Coverage::Partial => partial = true,
                    Coverage::Outside => {}
                }
            }
            if !partial {
                return spec.body_hu;
            }
        }
        Coverage::Partial => {}
    }
    let step = 2.0 * half / s as f64;
    let x0 = cx - half;
    let y0 = cy - half;
    let mut sum = 0.0;
    for j in 0..s {
        let y = y0 + (j as f64 + 0.5) * step;
        for i in 0..s {
            let x = x0 + (i as f64 + 0.5) * step;
            sum += spec.hu_at(x, y);
        }
    }
    sum / (s * s) as f64
}

//! HU line profiles through inserts and difference images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::phantom::PhantomSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" | "h" | "x" => Ok(Axis::Horizontal),
            "vertical" | "v" | "y" => Ok(Axis::Vertical),
            _ => Err(Error::InvalidArgument(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineProfile {
    pub axis: Axis,
    /// Along-line coordinate (x or y, mm).
    pub positions_mm: Vec<f64>,
    pub values_hu: Vec<f64>,
    pub reference_hu: Vec<f64>,
    /// Along-line coordinate of the insert center and its radius.
    pub center_mm: f64,
    pub radius_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuAccuracy {
    pub plateau_bias: f64,
    pub plateau_mad: f64,
    pub edge_overshoot: f64,
}

/// Bilinear sample at fractional pixel coordinates (must be in range).
fn bilinear(img: &Image, px: f64, py: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    let x0 = (px.floor() as usize).min(w.saturating_sub(2));
    let y0 = (py.floor() as usize).min(h.saturating_sub(2));
    let (tx, ty) = (px - x0 as f64, py - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let lerp = |a: f64, b: f64, t: f64| if a == b { a } else { a + t * (b - a) };
    let top = lerp(img.get(x0, y0) as f64, img.get(x1, y0) as f64, tx);
    let bottom = lerp(img.get(x0, y1) as f64, img.get(x1, y1) as f64, tx);
    lerp(top, bottom, ty)
}

/// Profile through the center of `spec.inserts[insert_index]`, three insert
/// diameters long, sampled once per pixel spacing.
pub fn line_profile(img: &Image, spec: &PhantomSpec, insert_index: usize, axis: Axis) -> Result<LineProfile> {
    let ins = spec.inserts.get(insert_index).ok_or_else(|| {
        Error::InvalidArgument(format!("insert index {insert_index} out of range ({} inserts)", spec.inserts.len()))
    })?;
    disk_profile(img, spec, (ins.cx_mm, ins.cy_mm), ins.radius_mm, axis)
}

/// Profile through the phantom body itself (clamped to the image); its
/// plateau is the central half of the body diameter.
pub fn body_profile(img: &Image, spec: &PhantomSpec, axis: Axis) -> Result<LineProfile> {
    disk_profile(img, spec, (0.0, 0.0), spec.body_radius_mm, axis)
}

/// Profile through any disk-shaped region centered at `center` (mm).
pub fn disk_profile(
    img: &Image,
    spec: &PhantomSpec,
    center: (f64, f64),
    radius_mm: f64,
    axis: Axis,
) -> Result<LineProfile> {
    band_disk_profile(img, spec, center, radius_mm, axis, 0.0)
}

/// [`line_profile`] averaged over parallel lines at every pixel-spacing
/// offset within `half_width_mm` of the center line. Values and reference
/// are averaged alike, so the plateau reference stays exact for half-widths
/// up to half the insert radius.
pub fn band_profile(
    img: &Image,
    spec: &PhantomSpec,
    insert_index: usize,
    axis: Axis,
    half_width_mm: f64,
) -> Result<LineProfile> {
    let ins = spec.inserts.get(insert_index).ok_or_else(|| {
        Error::InvalidArgument(format!("insert index {insert_index} out of range ({} inserts)", spec.inserts.len()))
    })?;
    band_disk_profile(img, spec, (ins.cx_mm, ins.cy_mm), ins.radius_mm, axis, half_width_mm)
}

fn band_disk_profile(
    img: &Image,
    spec: &PhantomSpec,
    center: (f64, f64),
    radius_mm: f64,
    axis: Axis,
    half_width_mm: f64,
) -> Result<LineProfile> {
    if !(half_width_mm >= 0.0) {
        return Err(Error::InvalidArgument(format!("band half-width must be >= 0, got {half_width_mm}")));
    }
    let sp = img.pixel_spacing_mm();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let n = (6.0 * radius_mm / sp).round() as usize;
    let k = (half_width_mm / sp + 1e-9).floor() as i64;
    let along = match axis {
        Axis::Horizontal => center.0,
        Axis::Vertical => center.1,
    };
    let mut profile = LineProfile {
        axis,
        positions_mm: Vec::with_capacity(n),
        values_hu: Vec::with_capacity(n),
        reference_hu: Vec::with_capacity(n),
        center_mm: along,
        radius_mm,
    };
    let inside = |x_mm: f64, y_mm: f64| {
        let px = x_mm / sp + w / 2.0 - 0.5;
        let py = h / 2.0 - 0.5 - y_mm / sp;
        (px >= 0.0 && py >= 0.0 && px <= w - 1.0 && py <= h - 1.0).then_some((px, py))
    };
    for i in 0..n {
        let s = along + (i as f64 - (n as f64 - 1.0) / 2.0) * sp;
        let (mut v, mut r) = (0.0, 0.0);
        let mut all_inside = true;
        for j in -k..=k {
            let t = j as f64 * sp;
            let (x_mm, y_mm) = match axis {
                Axis::Horizontal => (s, center.1 + t),
                Axis::Vertical => (center.0 + t, s),
            };
            match inside(x_mm, y_mm) {
                Some((px, py)) => {
                    v += bilinear(img, px, py);
                    r += spec.hu_at(x_mm, y_mm);
                }
                None => {
                    all_inside = false;
                    break;
                }
            }
        }
        if !all_inside {
            continue;
        }
        let m = (2 * k + 1) as f64;
        profile.positions_mm.push(s);
        profile.values_hu.push(v / m);
        profile.reference_hu.push(r / m);
    }
    if profile.positions_mm.len() < 2 {
        return Err(Error::OutOfBounds("profile line lies outside the image".into()));
    }
    Ok(profile)
}

/// Plateau statistics over the central half of the disk diameter, and the
/// overshoot over the whole line.
pub fn hu_accuracy(profile: &LineProfile) -> Result<HuAccuracy> {
    let n = profile.positions_mm.len();
    if profile.values_hu.len() != n || profile.reference_hu.len() != n {
        return Err(Error::Dimension("profile arrays differ in length".into()));
    }
    let plateau: Vec<usize> =
        (0..n).filter(|&i| (profile.positions_mm[i] - profile.center_mm).abs() <= 0.5 * profile.radius_mm).collect();
    if plateau.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "profile has {} plateau samples, at least 5 needed",
            plateau.len()
        )));
    }
    let diffs: Vec<f64> = plateau.iter().map(|&i| profile.values_hu[i] - profile.reference_hu[i]).collect();
    let m = diffs.len() as f64;
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(HuAccuracy {
        plateau_bias: diffs.iter().sum::<f64>() / m,
        plateau_mad: diffs.iter().map(|d| d.abs()).sum::<f64>() / m,
        edge_overshoot: max(&profile.values_hu) - max(&profile.reference_hu),
    })
}

pub fn abs_diff(a: &Image, b: &Image) -> Result<Image> {
    a.check_same_shape(b)?;
    a.with_data(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).collect())
}

/// Pixelwise mean of equally sized images.
pub fn mean_image(images: &[Image]) -> Result<Image> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no images to average".into()))?;
    let mut acc = vec![0.0f64; first.data().len()];
    for img in images {
        first.check_same_shape(img)?;
        for (a, &v) in acc.iter_mut().zip(img.data()) {
            *a += v as f64;
        }
    }
    first.with_data(acc.into_iter().map(|v| (v / images.len() as f64) as f32).collect())
}

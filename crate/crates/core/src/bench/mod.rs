//! CT bench tests: contrast-dependent MTF, NPS, HU line profiles and
//! difference images, plus their CSV/JSON/PNG exports.

pub mod mtf;
pub mod nps;
pub mod profile;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use mtf::{mtf50, mtf_from_disk, MtfCurve};
pub use nps::{nps_estimate, NpsResult};
pub use profile::{abs_diff, band_profile, body_profile, disk_profile, hu_accuracy, line_profile, mean_image, Axis, HuAccuracy, LineProfile};

use crate::error::{Error, Result};
use crate::image::{write_gray_png, write_raster};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_mtf_csv(path: impl AsRef<Path>, curve: &MtfCurve) -> Result<()> {
    let mut s = String::from("freq_lp_per_mm,mtf\n");
    for (f, v) in curve.freqs.iter().zip(&curve.values) {
        let _ = writeln!(s, "{f},{v}");
    }
    write_text(path.as_ref(), &s)
}

/// `{contrast_hu: mtf50}` keyed by the insert HU as text.
pub fn write_mtf_summary(path: impl AsRef<Path>, curves: &[MtfCurve]) -> Result<()> {
    let map: BTreeMap<String, f64> = curves.iter().map(|c| (format!("{}", c.contrast_hu), c.mtf50)).collect();
    write_text(path.as_ref(), &serde_json::to_string_pretty(&map)?)
}

/// Radial NPS without the DC bin.
pub fn write_nps_csv(path: impl AsRef<Path>, nps: &NpsResult) -> Result<()> {
    let mut s = String::from("freq_lp_per_mm,nps_hu2_mm2\n");
    for (f, v) in nps.radial_curve() {
        let _ = writeln!(s, "{f},{v}");
    }
    write_text(path.as_ref(), &s)
}

#[derive(serde::Serialize)]
struct Nps2dSidecar {
    width: usize,
    height: usize,
    du_lp_per_mm: f64,
    dv_lp_per_mm: f64,
    units: &'static str,
    layout: &'static str,
}

/// 2D NPS as `.f32` + `.json`.
pub fn write_nps2d(path: impl AsRef<Path>, nps: &NpsResult) -> Result<()> {
    let meta = Nps2dSidecar {
        width: nps.nx,
        height: nps.ny,
        du_lp_per_mm: nps.du,
        dv_lp_per_mm: nps.dv,
        units: "HU^2*mm^2",
        layout: "row-major, zero frequency at (height/2, width/2)",
    };
    let data: Vec<f32> = nps.nps2d.iter().map(|&v| v as f32).collect();
    write_raster(path, &meta, &data)
}

/// 8-bit rendering of log10(1 + NPS) scaled to the maximum.
pub fn nps2d_log_pixels(nps: &NpsResult) -> Vec<u8> {
    let logs: Vec<f64> = nps.nps2d.iter().map(|&v| (1.0 + v.max(0.0)).log10()).collect();
    let max = logs.iter().copied().fold(0.0, f64::max);
    logs.iter().map(|&l| if max > 0.0 { (255.0 * l / max).round() as u8 } else { 0 }).collect()
}

pub fn write_nps2d_png(path: impl AsRef<Path>, nps: &NpsResult) -> Result<()> {
    write_gray_png(path, nps.nx, nps.ny, &nps2d_log_pixels(nps))
}

pub fn write_profile_csv(path: impl AsRef<Path>, profile: &LineProfile) -> Result<()> {
    let mut s = String::from("pos_mm,hu,ref_hu\n");
    for ((p, v), r) in profile.positions_mm.iter().zip(&profile.values_hu).zip(&profile.reference_hu) {
        let _ = writeln!(s, "{p},{v},{r}");
    }
    write_text(path.as_ref(), &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Image, Roi};

    #[test]
    fn csv_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let curve = MtfCurve { contrast_hu: 340.0, freqs: vec![0.0, 0.5], values: vec![1.0, 0.25], mtf50: 0.33 };
        write_mtf_csv(dir.path().join("m.csv"), &curve).unwrap();
        let text = fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert_eq!(text, "freq_lp_per_mm,mtf\n0,1\n0.5,0.25\n");
        write_mtf_summary(dir.path().join("s.json"), &[curve]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
        assert_eq!(v["340"], 0.33);

        let imgs: Vec<Image> =
            (0..3).map(|i| Image::from_fn(8, 8, 1.0, |x, y| ((x * 7 + y * 3 + i * 5) % 11) as f32).unwrap()).collect();
        let nps = nps_estimate(&imgs, Roi::new(0, 0, 8, 8)).unwrap();
        write_nps_csv(dir.path().join("n.csv"), &nps).unwrap();
        let text = fs::read_to_string(dir.path().join("n.csv")).unwrap();
        assert!(text.starts_with("freq_lp_per_mm,nps_hu2_mm2\n"));
        assert_eq!(text.lines().count(), nps.radial_freqs.len());
        write_nps2d(dir.path().join("n2d"), &nps).unwrap();
        write_nps2d_png(dir.path().join("n2d.png"), &nps).unwrap();
        assert!(dir.path().join("n2d.f32").exists() && dir.path().join("n2d.png").exists());
    }
}

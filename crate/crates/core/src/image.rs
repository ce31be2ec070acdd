//! Image, region and display-window types plus the raw `.f32` + JSON sidecar
//! file format shared by images, sinograms and NPS grids.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D grid of HU values, row-major with a top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixel_spacing_mm: f64,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixel_spacing_mm: f64, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(pixel_spacing_mm > 0.0 && pixel_spacing_mm.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pixel spacing must be positive, got {pixel_spacing_mm}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DataLength {
                expected: width * height,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            pixel_spacing_mm,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel_spacing_mm: f64, value: f32) -> Result<Self> {
        Self::new(width, height, pixel_spacing_mm, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel (x = column, y = row).
    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_spacing_mm: f64,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, pixel_spacing_mm, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_spacing_mm(&self) -> f64 {
        self.pixel_spacing_mm
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Applies `f` to every value; fails if the result is non-finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Image> {
        Image::new(
            self.width,
            self.height,
            self.pixel_spacing_mm,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Same geometry, new payload.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Image> {
        Image::new(self.width, self.height, self.pixel_spacing_mm, data)
    }

    /// Rotates the image by 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..w {
            for x in 0..h {
                data.push(self.get(w - 1 - y, x));
            }
        }
        Image {
            width: h,
            height: w,
            pixel_spacing_mm: self.pixel_spacing_mm,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|&v| (v as f64 - m).powi(2))
            .sum::<f64>()
            / self.data.len() as f64
    }
}

/// Axis-aligned rectangular region of interest in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    /// A `size`×`size` region centered on the image.
    pub fn centered(img_width: usize, img_height: usize, size: usize) -> Result<Self> {
        if size == 0 || size > img_width || size > img_height {
            return Err(Error::OutOfBounds(format!(
                "centered roi of size {size} does not fit {img_width}x{img_height}"
            )));
        }
        Ok(Self::new(
            (img_width - size) / 2,
            (img_height - size) / 2,
            size,
            size,
        ))
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::OutOfBounds("roi must have positive extent".into()));
        }
        if self.x0 + self.w > width || self.y0 + self.h > height {
            return Err(Error::OutOfBounds(format!(
                "roi ({}, {}, {}x{}) exceeds {width}x{height}",
                self.x0, self.y0, self.w, self.h
            )));
        }
        Ok(())
    }
}

pub fn extract_roi(img: &Image, roi: Roi) -> Result<Image> {
    roi.check_within(img.width, img.height)?;
    let mut data = Vec::with_capacity(roi.w * roi.h);
    for y in roi.y0..roi.y0 + roi.h {
        let start = y * img.width + roi.x0;
        data.extend_from_slice(&img.data[start..start + roi.w]);
    }
    Image::new(roi.w, roi.h, img.pixel_spacing_mm, data)
}

/// Display window in HU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayWindow {
    pub width_hu: f64,
    pub level_hu: f64,
}

impl DisplayWindow {
    pub fn new(width_hu: f64, level_hu: f64) -> Result<Self> {
        if !(width_hu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "window width must be positive, got {width_hu}"
            )));
        }
        Ok(Self { width_hu, level_hu })
    }

    /// Window covering `[lo, hi]` HU.
    pub fn from_range(lo: f64, hi: f64) -> Result<Self> {
        Self::new(hi - lo, 0.5 * (lo + hi))
    }

    /// Maps one HU value onto 0..=255, rounding half up.
    pub fn map(&self, hu: f64) -> u8 {
        let lo = self.level_hu - 0.5 * self.width_hu;
        let v = (hu - lo) / self.width_hu * 255.0;
        (v + 0.5).floor().clamp(0.0, 255.0) as u8
    }
}

/// Renders an image through a display window as 8-bit grayscale, row-major.
pub fn window_to_display(img: &Image, win: DisplayWindow) -> Vec<u8> {
    img.data.iter().map(|&v| win.map(v as f64)).collect()
}

pub fn write_gray_png(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(width as u32, height as u32, pixels.to_vec())
        .ok_or_else(|| Error::DataLength {
            expected: width * height,
            found: pixels.len(),
        })?;
    buf.save(path).map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
}

pub fn write_windowed_png(path: impl AsRef<Path>, img: &Image, win: DisplayWindow) -> Result<()> {
    write_gray_png(path, img.width, img.height, &window_to_display(img, win))
}

// ---------------------------------------------------------------------------
// Raw raster file pair: `<name>.f32` (little-endian f32, row-major) + `<name>.json`.

/// Returns the `(payload, sidecar)` paths for a raster given any of the stem,
/// the `.f32` path or the `.json` path.
pub fn raster_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("f32") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut payload = stem.clone().into_os_string();
    payload.push(".f32");
    let mut sidecar = stem.into_os_string();
    sidecar.push(".json");
    (payload.into(), sidecar.into())
}

pub(crate) fn write_raster<S: Serialize>(path: impl AsRef<Path>, sidecar: &S, data: &[f32]) -> Result<()> {
    let (payload, side) = raster_paths(path);
    if let Some(dir) = payload.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
    let json = serde_json::to_string_pretty(sidecar)?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub(crate) fn read_raster<S: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<(S, Vec<f32>)> {
    let (payload, side) = raster_paths(path);
    for p in [&payload, &side] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: S = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: side.clone(),
        msg: e.to_string(),
    })?;
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::DataLength {
            expected: bytes.len() / 4 + 1,
            found: bytes.len() / 4,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((meta, data))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageSidecar {
    width: usize,
    height: usize,
    pixel_spacing_mm: f64,
    units: String,
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let meta = ImageSidecar {
        width: img.width,
        height: img.height,
        pixel_spacing_mm: img.pixel_spacing_mm,
        units: "HU".into(),
    };
    write_raster(path, &meta, &img.data)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let (meta, data): (ImageSidecar, _) = read_raster(path.as_ref())?;
    if meta.units != "HU" {
        return Err(Error::Sidecar {
            path: raster_paths(path).1,
            msg: format!("unsupported units {:?}", meta.units),
        });
    }
    if data.len() != meta.width * meta.height {
        return Err(Error::DataLength {
            expected: meta.width * meta.height,
            found: data.len(),
        });
    }
    Image::new(meta.width, meta.height, meta.pixel_spacing_mm, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 0.5, |x, y| (x + 10 * y) as f32).unwrap()
    }

    #[test]
    fn rejects_invalid_construction() {
        assert!(matches!(
            Image::new(2, 2, 1.0, vec![0.0; 3]),
            Err(Error::DataLength { expected: 4, found: 3 })
        ));
        assert!(Image::new(0, 2, 1.0, vec![]).is_err());
        assert!(Image::new(1, 1, 0.0, vec![0.0]).is_err());
        assert!(matches!(
            Image::new(2, 1, 1.0, vec![0.0, f32::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn hu_values_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(2, 2, 0.5, vec![-1000.0, 0.0, 120.0, 900.0]).unwrap();
        let path = dir.path().join("small");
        write_image(&path, &img).unwrap();
        let back = read_image(dir.path().join("small.f32")).unwrap();
        assert_eq!(back, img);
        let bits: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u32> = img.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn data_length_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        // 512 wide sidecar, 512x511 payload
        let meta = ImageSidecar {
            width: 512,
            height: 512,
            pixel_spacing_mm: 0.5,
            units: "HU".into(),
        };
        write_raster(&path, &meta, &vec![0.0; 512 * 511]).unwrap();
        let err = read_image(&path).unwrap_err();
        assert!(err.to_string().contains("data-length mismatch"), "{err}");
    }

    #[test]
    fn missing_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_image(dir.path().join("nothing")),
            Err(Error::MissingFile(_))
        ));
        let path = dir.path().join("broken");
        std::fs::write(dir.path().join("broken.f32"), [0u8; 4]).unwrap();
        std::fs::write(dir.path().join("broken.json"), "{\"width\": 1}").unwrap();
        assert!(matches!(read_image(&path), Err(Error::Sidecar { .. })));
    }

    #[test]
    fn non_finite_payload_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan");
        let meta = ImageSidecar {
            width: 1,
            height: 1,
            pixel_spacing_mm: 1.0,
            units: "HU".into(),
        };
        write_raster(&path, &meta, &[f32::INFINITY]).unwrap();
        assert!(matches!(read_image(&path), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn roi_extraction() {
        let img = ramp(5, 4);
        let full = extract_roi(&img, Roi::new(0, 0, 5, 4)).unwrap();
        assert_eq!(full, img);
        let one = extract_roi(&img, Roi::new(0, 0, 1, 1)).unwrap();
        assert_eq!(one.data(), &[img.get(0, 0)]);
        let sub = extract_roi(&img, Roi::new(1, 2, 3, 2)).unwrap();
        assert_eq!(sub.data(), &[21.0, 22.0, 23.0, 31.0, 32.0, 33.0]);
        assert!(extract_roi(&img, Roi::new(3, 0, 3, 1)).is_err());
        assert!(extract_roi(&img, Roi::new(0, 0, 0, 1)).is_err());
    }

    #[test]
    fn window_mapping() {
        let win = DisplayWindow::new(491.0, 62.0).unwrap();
        assert_eq!(win.map(62.0), 128);
        assert_eq!(win.map(62.0 + 245.5), 255);
        assert_eq!(win.map(62.0 - 245.5), 0);
        assert_eq!(win.map(5000.0), 255);
        assert_eq!(win.map(-5000.0), 0);
        assert!(DisplayWindow::new(0.0, 0.0).is_err());
        let diff = DisplayWindow::from_range(0.0, 122.0).unwrap();
        assert_eq!(diff.map(0.0), 0);
        assert_eq!(diff.map(122.0), 255);
    }

    #[test]
    fn rotation_cycles() {
        let img = ramp(3, 2);
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (2, 3));
        assert_eq!(r.rotate90().rotate90().rotate90(), img);
    }

    proptest::proptest! {
        #[test]
        fn window_is_monotone(a in -3000.0f64..3000.0, b in -3000.0f64..3000.0,
                              w in 1.0f64..4000.0, l in -1000.0f64..1000.0) {
            let win = DisplayWindow::new(w, l).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(win.map(lo) <= win.map(hi));
        }

        #[test]
        fn write_read_identity(vals in proptest::collection::vec(-1.0e6f32..1.0e6, 12)) {
            let dir = tempfile::tempdir().unwrap();
            let img = Image::new(4, 3, 0.7, vals).unwrap();
            write_image(dir.path().join("p"), &img).unwrap();
            proptest::prop_assert_eq!(read_image(dir.path().join("p.json")).unwrap(), img);
        }
    }
}

//! Applying any denoiser to HU images, and the CNN3 weights file.
//!
//! Weights are stored as `<name>.json` (layer shapes, normalization) plus
//! `<name>.f32` (little-endian values, kernel then bias, layer by layer).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classical::{gaussian_denoise, tv_denoise};
use super::cnn3::{cnn3_forward, Cnn3Weights};
use super::preprocess::{denormalize, normalize, Normalization};
use crate::error::{Error, Result};
use crate::image::{raster_paths, read_image, read_raster, write_raster, Image};

/// CNN3 weights together with the normalization they were trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub weights: Cnn3Weights<f32>,
    pub normalization: Normalization,
}

impl TrainedModel {
    pub fn denoise(&self, img: &Image) -> Result<Image> {
        let x = normalize(img, &self.normalization)?;
        let y = cnn3_forward(&self.weights, x.data(), x.width(), x.height())?;
        denormalize(&x.with_data(y)?, &self.normalization)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerHeader {
    name: String,
    kernel_shape: [usize; 4],
    bias_len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightsHeader {
    architecture: String,
    layers: Vec<LayerHeader>,
    normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<serde_json::Value>,
}

/// Writes a weights file; `training` is an optional record of how the model
/// was produced.
pub fn write_weights(path: impl AsRef<Path>, model: &TrainedModel, training: Option<serde_json::Value>) -> Result<()> {
    let layers = model
        .weights
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerHeader { name: format!("conv{}", i + 1), kernel_shape: [3, 3, l.c_in, l.c_out], bias_len: l.bias.len() })
        .collect();
    let header =
        WeightsHeader { architecture: "cnn3".into(), layers, normalization: Some(model.normalization), training };
    write_raster(path, &header, &model.weights.to_flat())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let side = raster_paths(path.as_ref()).1;
    let (header, data): (WeightsHeader, Vec<f32>) = read_raster(path.as_ref())?;
    let bad = |msg: String| Error::Sidecar { path: side.clone(), msg };
    if header.architecture != "cnn3" {
        return Err(bad(format!("unsupported architecture {:?}", header.architecture)));
    }
    let expected = Cnn3Weights::<f32>::zeros();
    let shapes_ok = header.layers.len() == 3
        && header.layers.iter().zip(&expected.layers).all(|(h, l)| {
            h.kernel_shape == [3, 3, l.c_in, l.c_out] && h.bias_len == l.bias.len()
        });
    if !shapes_ok {
        return Err(bad("layer shapes do not match cnn3".into()));
    }
    let normalization =
        header.normalization.ok_or_else(|| bad("normalization metadata is absent".into()))?;
    let weights = Cnn3Weights::from_flat(&data)?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(TrainedModel { weights, normalization })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Denoiser {
    Identity,
    Gaussian { sigma_px: f64 },
    Tv { lambda: f64, iterations: usize },
    Cnn3(TrainedModel),
    /// Pre-denoised images in a directory, matched to inputs by file name.
    External { dir: PathBuf },
}

impl Denoiser {
    pub fn label(&self) -> String {
        match self {
            Denoiser::Identity => "identity".into(),
            Denoiser::Gaussian { sigma_px } => format!("gaussian(sigma={sigma_px}px)"),
            Denoiser::Tv { lambda, iterations } => format!("tv(lambda={lambda},iter={iterations})"),
            Denoiser::Cnn3(m) => format!("cnn3({})", m.normalization.mode),
            Denoiser::External { dir } => format!("external({})", dir.display()),
        }
    }

    /// Denoises one named image. The name is used only by external sets.
    pub fn apply_one(&self, name: &str, img: &Image) -> Result<Image> {
        match self {
            Denoiser::Identity => Ok(img.clone()),
            Denoiser::Gaussian { sigma_px } => gaussian_denoise(img, *sigma_px),
            Denoiser::Tv { lambda, iterations } => tv_denoise(img, *lambda, *iterations),
            Denoiser::Cnn3(model) => model.denoise(img),
            Denoiser::External { dir } => {
                let path = dir.join(name);
                let (payload, _) = raster_paths(&path);
                if !payload.exists() {
                    return Err(Error::MissingFile(payload));
                }
                let out = read_image(&path)?;
                if !out.same_shape(img) {
                    return Err(Error::Dimension(format!(
                        "external image {} is {}x{}, input is {}x{}",
                        payload.display(),
                        out.width(),
                        out.height(),
                        img.width(),
                        img.height()
                    )));
                }
                Ok(out)
            }
        }
    }
}

/// One HU output per named input, in input order.
pub fn apply_denoiser(denoiser: &Denoiser, inputs: &[(String, Image)]) -> Result<Vec<Image>> {
    inputs.par_iter().map(|(name, img)| denoiser.apply_one(name, img)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::preprocess::NormMode;
    use crate::image::write_image;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 0.5, |x, y| (x as f32 * 37.0 - y as f32 * 11.0) - 200.0).unwrap()
    }

    #[test]
    fn identity_is_bitwise() {
        let img = ramp(9, 7);
        let out = apply_denoiser(&Denoiser::Identity, &[("a".into(), img.clone())]).unwrap();
        assert_eq!(out[0], img);
    }

    #[test]
    fn identity_weights_roundtrip_hu_in_both_modes() {
        let img = ramp(12, 10);
        for norm in [Normalization::unity(), Normalization::norm_f()] {
            let model = TrainedModel { weights: Cnn3Weights::identity(), normalization: norm };
            let out = model.denoise(&img).unwrap();
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-3, "{:?}: {a} vs {b}", norm.mode);
            }
        }
    }

    #[test]
    fn weights_file_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.w");
        let model = TrainedModel {
            weights: Cnn3Weights::he_init(7),
            normalization: Normalization::new(NormMode::NormF, -1024.0, 3072.0).unwrap(),
        };
        write_weights(&path, &model, Some(serde_json::json!({"epochs": 3}))).unwrap();
        assert_eq!(read_weights(&path).unwrap(), model);

        // Strip the normalization record.
        let side = raster_paths(&path).1;
        let mut header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&side).unwrap()).unwrap();
        header.as_object_mut().unwrap().remove("normalization");
        std::fs::write(&side, header.to_string()).unwrap();
        let err = read_weights(&path).unwrap_err().to_string();
        assert!(err.contains("normalization"), "{err}");

        assert!(matches!(read_weights(dir.path().join("nope")), Err(Error::MissingFile(_))));
    }

    #[test]
    fn external_matches_by_name_and_names_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = ramp(8, 8);
        let denoised = img.map(|v| v * 0.5).unwrap();
        write_image(dir.path().join("slice_0"), &denoised).unwrap();
        let ext = Denoiser::External { dir: dir.path().to_path_buf() };
        let out = apply_denoiser(&ext, &[("slice_0".into(), img.clone())]).unwrap();
        assert_eq!(out[0], denoised);
        let err = apply_denoiser(&ext, &[("slice_0".into(), img.clone()), ("slice_1".into(), img)]).unwrap_err();
        assert!(err.to_string().contains("slice_1"), "{err}");
    }
}

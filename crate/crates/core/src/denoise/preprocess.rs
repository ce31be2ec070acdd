//! Training-data preprocessing: intensity normalization, dose blending,
//! augmentation and co-located LD/ND patch extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// HU offset used by the `normF` mapping.
pub const NORMF_OFFSET_HU: f64 = 1024.0;
pub const DEFAULT_UNITY_LO: f64 = -1024.0;
pub const DEFAULT_UNITY_HI: f64 = 3072.0;
pub const PATCH_SIZES: [usize; 4] = [32, 55, 64, 96];
pub const SCALE_FACTORS: [f64; 2] = [0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// `(x − lo)/(hi − lo)` clamped to [0, 1].
    Unity,
    /// `x + 1024` clamped below at 0.
    #[serde(rename = "normF", alias = "normf")]
    NormF,
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMode::Unity => "unity",
            NormMode::NormF => "normF",
        })
    }
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unity" => Ok(NormMode::Unity),
            "normF" | "normf" => Ok(NormMode::NormF),
            other => Err(Error::InvalidArgument(format!("unknown normalization {other:?}"))),
        }
    }
}

/// A normalization mode together with its HU window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormMode,
    pub lo: f64,
    pub hi: f64,
}

impl Normalization {
    pub fn new(mode: NormMode, lo: f64, hi: f64) -> Result<Self> {
        if mode == NormMode::Unity && !(hi > lo) {
            return Err(Error::InvalidArgument(format!("normalization needs hi > lo, got [{lo}, {hi}]")));
        }
        Ok(Self { mode, lo, hi })
    }

    pub fn unity() -> Self {
        Self { mode: NormMode::Unity, lo: DEFAULT_UNITY_LO, hi: DEFAULT_UNITY_HI }
    }

    pub fn norm_f() -> Self {
        Self { mode: NormMode::NormF, lo: DEFAULT_UNITY_LO, hi: DEFAULT_UNITY_HI }
    }

    pub fn forward(&self, hu: f64) -> f64 {
        match self.mode {
            NormMode::Unity => ((hu - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0),
            NormMode::NormF => (hu + NORMF_OFFSET_HU).max(0.0),
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        match self.mode {
            NormMode::Unity => self.lo + v * (self.hi - self.lo),
            NormMode::NormF => v - NORMF_OFFSET_HU,
        }
    }

    /// Span of model-domain values for in-range HU inputs; used as the SSIM
    /// data range of the MS-SSIM loss.
    pub fn model_range(&self) -> f64 {
        match self.mode {
            NormMode::Unity => 1.0,
            NormMode::NormF => self.hi + NORMF_OFFSET_HU,
        }
    }
}

impl Default for Normalization {
    fn default() -> Self {
        Self::unity()
    }
}

pub fn normalize(img: &Image, norm: &Normalization) -> Result<Image> {
    Normalization::new(norm.mode, norm.lo, norm.hi)?;
    img.map(|v| norm.forward(v as f64) as f32)
}

pub fn denormalize(img: &Image, norm: &Normalization) -> Result<Image> {
    img.map(|v| norm.inverse(v as f64) as f32)
}

/// `nd + gamma·(ld − nd)`.
pub fn dose_blend(nd: &Image, ld: &Image, gamma: f64) -> Result<Image> {
    nd.check_same_shape(ld)?;
    let data = nd
        .data()
        .iter()
        .zip(ld.data())
        .map(|(&n, &l)| (n as f64 + gamma * (l as f64 - n as f64)) as f32)
        .collect();
    nd.with_data(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augment {
    /// Downscaled copies at 0.6 and 0.8.
    pub scale: bool,
    /// One random rotation plus one random flip per base patch.
    pub rotate_flip: bool,
    /// One dose-blended duplicate per image pair.
    pub dose_blend: bool,
    pub gamma_low: f64,
    pub gamma_high: f64,
}

impl Default for Augment {
    fn default() -> Self {
        Self { scale: false, rotate_flip: false, dose_blend: false, gamma_low: 0.5, gamma_high: 1.2 }
    }
}

impl Augment {
    pub fn all() -> Self {
        Self { scale: true, rotate_flip: true, dose_blend: true, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub normalization: Normalization,
    pub patch_size: usize,
    pub patch_stride: usize,
    pub augment: Augment,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { normalization: Normalization::unity(), patch_size: 55, patch_stride: 55, augment: Augment::default() }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        Normalization::new(self.normalization.mode, self.normalization.lo, self.normalization.hi)?;
        if self.patch_size < 3 {
            return Err(Error::InvalidArgument(format!("patch size {} is below 3", self.patch_size)));
        }
        if self.patch_stride == 0 {
            return Err(Error::InvalidArgument("patch stride must be >= 1".into()));
        }
        if !(self.augment.gamma_low < self.augment.gamma_high) {
            return Err(Error::InvalidArgument("gamma_low must be below gamma_high".into()));
        }
        Ok(())
    }
}

/// One co-located model-domain input/target patch pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub normalization: Normalization,
    pub pairs: Vec<PatchPair>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Bilinear resampling by `factor` (< 1 shrinks).
pub fn rescale_bilinear(img: &Image, factor: f64) -> Result<Image> {
    if !(factor > 0.0) {
        return Err(Error::InvalidArgument(format!("scale factor must be positive, got {factor}")));
    }
    let (w, h) = (img.width(), img.height());
    let nw = ((w as f64 * factor).floor() as usize).max(1);
    let nh = ((h as f64 * factor).floor() as usize).max(1);
    let sample = |x: f64, y: f64| -> f64 {
        let x = x.clamp(0.0, (w - 1) as f64);
        let y = y.clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let v = |xx: usize, yy: usize| img.get(xx, yy) as f64;
        (v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx) * (1.0 - fy) + (v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx) * fy
    };
    Image::from_fn(nw, nh, img.pixel_spacing_mm() / factor, |x, y| {
        sample((x as f64 + 0.5) / factor - 0.5, (y as f64 + 0.5) / factor - 0.5) as f32
    })
}

/// Square patch transform: `rot` quarter turns counter-clockwise, then an
/// optional left-right (`flip = 1`) or up-down (`flip = 2`) mirror.
pub fn transform_patch(p: &[f32], size: usize, rot: usize, flip: usize) -> Vec<f32> {
    let mut cur = p.to_vec();
    for _ in 0..rot % 4 {
        let mut next = vec![0.0; size * size];
        for y in 0..size {
            for x in 0..size {
                next[y * size + x] = cur[x * size + (size - 1 - y)];
            }
        }
        cur = next;
    }
    match flip {
        1 => cur.chunks_mut(size).for_each(|row| row.reverse()),
        2 => {
            let rows: Vec<Vec<f32>> = cur.chunks(size).rev().map(|r| r.to_vec()).collect();
            cur = rows.concat();
        }
        _ => {}
    }
    cur
}

fn grid_positions(len: usize, size: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..).map(move |k| k * stride).take_while(move |&p| p + size <= len)
}

fn extract_patches(ld: &Image, nd: &Image, size: usize, stride: usize, out: &mut Vec<PatchPair>) {
    let w = ld.width();
    for y0 in grid_positions(ld.height(), size, stride) {
        for x0 in grid_positions(w, size, stride) {
            let mut input = Vec::with_capacity(size * size);
            let mut target = Vec::with_capacity(size * size);
            for y in y0..y0 + size {
                input.extend_from_slice(&ld.data()[y * w + x0..y * w + x0 + size]);
                target.extend_from_slice(&nd.data()[y * w + x0..y * w + x0 + size]);
            }
            out.push(PatchPair { input, target });
        }
    }
}

/// Builds the model-domain training patches from `(ld, nd)` HU pairs.
///
/// Order: original pairs, then dose-blended duplicates, then downscaled copies
/// of both; rotate/flip copies of every resulting patch follow at the end.
pub fn make_patch_set(pairs: &[(Image, Image)], cfg: &PreprocessConfig, seed: u64) -> Result<PatchSet> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no image pairs supplied".into()));
    }
    let size = cfg.patch_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images: Vec<(Image, Image)> = Vec::new();
    for (i, (ld, nd)) in pairs.iter().enumerate() {
        ld.check_same_shape(nd)?;
        if ld.width() < size || ld.height() < size {
            return Err(Error::InvalidArgument(format!(
                "pair {i}: image {}x{} is smaller than patch size {size}",
                ld.width(),
                ld.height()
            )));
        }
        images.push((ld.clone(), nd.clone()));
    }
    if cfg.augment.dose_blend {
        let n = images.len();
        for i in 0..n {
            let gamma = rng.random_range(cfg.augment.gamma_low..=cfg.augment.gamma_high);
            let (ld, nd) = &images[i];
            let blended = dose_blend(nd, ld, gamma)?;
            images.push((blended, nd.clone()));
        }
    }
    if cfg.augment.scale {
        let n = images.len();
        for i in 0..n {
            for &f in &SCALE_FACTORS {
                let ld = rescale_bilinear(&images[i].0, f)?;
                let nd = rescale_bilinear(&images[i].1, f)?;
                if ld.width() >= size && ld.height() >= size {
                    images.push((ld, nd));
                }
            }
        }
    }
    let norm = cfg.normalization;
    let mut patches = Vec::new();
    for (ld, nd) in &images {
        let ld = normalize(ld, &norm)?;
        let nd = normalize(nd, &norm)?;
        extract_patches(&ld, &nd, size, cfg.patch_stride, &mut patches);
    }
    if cfg.augment.rotate_flip {
        let base = patches.len();
        for i in 0..base {
            let rot = rng.random_range(1..=3usize);
            let flip = rng.random_range(1..=2usize);
            let p = &patches[i];
            let aug = PatchPair {
                input: transform_patch(&p.input, size, rot, flip),
                target: transform_patch(&p.target, size, rot, flip),
            };
            patches.push(aug);
        }
    }
    Ok(PatchSet { size, normalization: norm, pairs: patches })
}

//! Bench suite: simulated quarter-dose phantoms, denoised and measured.
//!
//! Simulations are cached in memory (and optionally on disk under
//! `CTBENCH_CACHE_DIR`) keyed by geometry, dose, counts and seed, so tuning
//! many candidates scans each phantom once.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::bench::{
    band_profile, hu_accuracy, mean_image, mtf_from_disk, nps_estimate, Axis, HuAccuracy, LineProfile, MtfCurve,
    NpsResult,
};
use crate::denoise::{apply_denoiser, Denoiser};
use crate::error::Result;
use crate::image::{read_image, write_image, Image, Roi};
use crate::phantom::{make_contrast_phantom, make_water_cylinder, PhantomSpec};
use crate::scanner::{ensemble_from_sinogram, ScanSetup};

pub const CACHE_ENV: &str = "CTBENCH_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuiteConfig {
    pub setup: ScanSetup,
    pub dose_fraction: f64,
    /// Contrast-phantom realizations averaged for MTF and HU profiles.
    pub n_mtf: usize,
    /// Water-cylinder realizations for the NPS.
    pub n_nps: usize,
    pub nps_roi: usize,
    pub seed: u64,
}

impl Default for BenchSuiteConfig {
    fn default() -> Self {
        Self { setup: ScanSetup::default(), dose_fraction: 0.25, n_mtf: 50, n_nps: 50, nps_roi: 128, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertHu {
    pub contrast_hu: f64,
    #[serde(flatten)]
    pub accuracy: HuAccuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subscores {
    pub resolution: f64,
    pub texture: f64,
    pub hu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub denoiser: String,
    pub mtf: Vec<MtfCurve>,
    /// Insert HU (as text) → MTF50% in lp/mm.
    pub mtf50_by_contrast: BTreeMap<String, f64>,
    pub nps: NpsResult,
    pub hu: Vec<InsertHu>,
    pub profiles: Vec<LineProfile>,
    /// Filled in when the report is scored against a baseline.
    pub nps_distance: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub subscores: Option<Subscores>,
    pub composite_score: Option<f64>,
}

impl BenchReport {
    pub fn mean_plateau_mad(&self) -> f64 {
        self.hu.iter().map(|h| h.accuracy.plateau_mad).sum::<f64>() / self.hu.len().max(1) as f64
    }
}

/// Noisy reconstructions shared by every candidate.
#[derive(Debug)]
pub struct SuiteData {
    pub contrast_spec: PhantomSpec,
    pub contrast: Vec<Image>,
    pub water_spec: PhantomSpec,
    pub water: Vec<Image>,
}

type Cache = RwLock<HashMap<String, Arc<SuiteData>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

static SIMULATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of suite simulations actually run (cache misses) in this process.
pub fn simulation_count() -> usize {
    SIMULATIONS.load(Ordering::SeqCst)
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn cache_key(cfg: &BenchSuiteConfig) -> Result<String> {
    Ok(serde_json::to_string(cfg)?)
}

fn disk_dir(key: &str) -> Option<PathBuf> {
    let root = std::env::var_os(CACHE_ENV)?;
    Some(PathBuf::from(root).join(format!("suite-{:016x}", fnv1a(key))))
}

fn load_from_disk(dir: &PathBuf, cfg: &BenchSuiteConfig) -> Option<(Vec<Image>, Vec<Image>)> {
    let read = |prefix: &str, n: usize| -> Option<Vec<Image>> {
        (0..n).map(|i| read_image(dir.join(format!("{prefix}_{i:03}"))).ok()).collect()
    };
    Some((read("contrast", cfg.n_mtf)?, read("water", cfg.n_nps)?))
}

fn store_to_disk(dir: &PathBuf, key: &str, data: &SuiteData) -> Result<()> {
    for (prefix, imgs) in [("contrast", &data.contrast), ("water", &data.water)] {
        for (i, img) in imgs.iter().enumerate() {
            write_image(dir.join(format!("{prefix}_{i:03}")), img)?;
        }
    }
    std::fs::write(dir.join("key.json"), key).map_err(|e| crate::error::Error::io(dir.join("key.json"), e))
}

/// Simulated (or cached) suite inputs for `cfg`.
pub fn suite_data(cfg: &BenchSuiteConfig) -> Result<Arc<SuiteData>> {
    let key = cache_key(cfg)?;
    if let Some(hit) = cache().read().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let mut guard = cache().write().expect("cache lock");
    if let Some(hit) = guard.get(&key) {
        return Ok(hit.clone());
    }
    let contrast_spec = make_contrast_phantom();
    let water_spec = make_water_cylinder();
    let dir = disk_dir(&key);
    let from_disk = dir.as_ref().and_then(|d| load_from_disk(d, cfg));
    let data = match from_disk {
        Some((contrast, water)) => SuiteData { contrast_spec, contrast, water_spec, water },
        None => {
            SIMULATIONS.fetch_add(1, Ordering::SeqCst);
            let setup = &cfg.setup;
            let c_sino = setup.noiseless_sinogram(&contrast_spec)?;
            let contrast = ensemble_from_sinogram(&c_sino, setup, cfg.n_mtf.max(2), cfg.dose_fraction, cfg.seed)?;
            let w_sino = setup.noiseless_sinogram(&water_spec)?;
            let water = ensemble_from_sinogram(&w_sino, setup, cfg.n_nps, cfg.dose_fraction, cfg.seed + 1_000_000)?;
            let data = SuiteData { contrast_spec, contrast: contrast[..cfg.n_mtf.max(1)].to_vec(), water_spec, water };
            if let Some(d) = &dir {
                store_to_disk(d, &key, &data)?;
            }
            data
        }
    };
    let data = Arc::new(data);
    guard.insert(key, data.clone());
    Ok(data)
}

fn named(prefix: &str, imgs: &[Image]) -> Vec<(String, Image)> {
    imgs.iter().enumerate().map(|(i, img)| (format!("{prefix}_{i:03}"), img.clone())).collect()
}

/// Runs MTF (per contrast), NPS and HU accuracy on the denoised suite.
///
/// External denoisers are looked up as `contrast_NNN` / `water_NNN`.
///
/// HU accuracy uses horizontal profiles averaged over a band of half the
/// insert radius on the realization mean.
pub fn run_bench_suite(denoiser: &Denoiser, cfg: &BenchSuiteConfig) -> Result<BenchReport> {
    let data = suite_data(cfg)?;
    let contrast = apply_denoiser(denoiser, &named("contrast", &data.contrast))?;
    let water = apply_denoiser(denoiser, &named("water", &data.water))?;
    let mean = mean_image(&contrast)?;
    let spec = &data.contrast_spec;
    let mut mtf = Vec::new();
    let mut hu = Vec::new();
    let mut profiles = Vec::new();
    for (i, ins) in spec.inserts.iter().enumerate() {
        mtf.push(mtf_from_disk(&mean, ins, spec.body_hu)?);
        let p = band_profile(&mean, spec, i, Axis::Horizontal, 0.5 * ins.radius_mm)?;
        hu.push(InsertHu { contrast_hu: ins.hu, accuracy: hu_accuracy(&p)? });
        profiles.push(p);
    }
    let roi = Roi::centered(cfg.setup.width, cfg.setup.height, cfg.nps_roi)?;
    let nps = nps_estimate(&water, roi)?;
    Ok(BenchReport {
        denoiser: denoiser.label(),
        mtf50_by_contrast: mtf.iter().map(|c| (format!("{}", c.contrast_hu), c.mtf50)).collect(),
        mtf,
        nps,
        hu,
        profiles,
        nps_distance: None,
        psnr: None,
        ssim: None,
        subscores: None,
        composite_score: None,
    })
}

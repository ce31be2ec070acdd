//! Command-line grammar. Every argument struct is also the serialized
//! invocation stored in run manifests, so a manifest can be replayed.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctbench::denoise::{LossKind, NormMode};
use ctbench::harness::Paradigm;
use ctbench::scanner::Kernel;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "ctbench", version, about = "CT image-quality bench testing toolkit")]
pub struct Cli {
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Forces order-fixed reductions (results are thread-count independent).
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "lowercase")]
pub enum Command {
    /// Writes a phantom definition (JSON).
    Phantom(PhantomArgs),
    /// Simulates one acquisition and FBP reconstruction.
    Scan(ScanArgs),
    /// Simulates independent noisy reconstructions of one phantom.
    Ensemble(EnsembleArgs),
    /// Trains CNN3 on a manifest of LDCT/NDCT pairs.
    Train(TrainArgs),
    /// Applies a denoiser to a directory of images.
    Denoise(DenoiseArgs),
    /// Global fidelity metrics between two images (JSON on stdout).
    Metrics(MetricsArgs),
    /// Bench tests: MTF, NPS, HU profiles, difference images, full suite.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Greedy stage-wise hyperparameter tuning.
    Tune(TuneArgs),
    /// Compares two run directories file by file, ignoring manifests.
    Diff(DiffArgs),
    /// Renders plots and a Markdown summary for a bench or tune run.
    Report(ReportArgs),
    /// Re-executes the invocation recorded in a run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Scan(_) => "scan",
            Command::Ensemble(_) => "ensemble",
            Command::Train(_) => "train",
            Command::Denoise(_) => "denoise",
            Command::Metrics(_) => "metrics",
            Command::Bench(b) => match b {
                BenchCommand::Mtf(_) => "bench mtf",
                BenchCommand::Nps(_) => "bench nps",
                BenchCommand::Hu(_) => "bench hu",
                BenchCommand::Diff(_) => "bench diff",
                BenchCommand::Suite(_) => "bench suite",
            },
            Command::Tune(_) => "tune",
            Command::Diff(_) => "diff",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }

    /// Redirects the command's output location.
    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Phantom(a) => a.out = out,
            Command::Scan(a) => a.out = out,
            Command::Ensemble(a) => a.out = out,
            Command::Train(a) => a.out = out,
            Command::Denoise(a) => a.out = out,
            Command::Metrics(a) => a.out = Some(out),
            Command::Bench(b) => match b {
                BenchCommand::Mtf(a) => a.out = out,
                BenchCommand::Nps(a) => a.out = out,
                BenchCommand::Hu(a) => a.out = out,
                BenchCommand::Diff(a) => a.out = out,
                BenchCommand::Suite(a) => a.out = out,
            },
            Command::Tune(a) => a.out = out,
            Command::Report(a) => a.out = Some(out),
            Command::Diff(_) | Command::Replay(_) => {}
        }
    }
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
pub enum BenchCommand {
    /// Contrast-dependent MTF from the disk inserts.
    Mtf(BenchMtfArgs),
    /// Noise power spectrum of an ensemble.
    Nps(BenchNpsArgs),
    /// HU line profile and accuracy through an insert or the body.
    Hu(BenchHuArgs),
    /// Absolute difference images, rendered with a [0, 122] HU window.
    Diff(BenchDiffArgs),
    /// Simulated quarter-dose bench suite for one denoiser.
    Suite(BenchSuiteArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Contrast,
    Water,
    Random,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PhantomArgs {
    #[arg(value_enum)]
    pub kind: PhantomKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Required for `random`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Four insert levels (HU) for `contrast`, e.g. 990,340,120,-35.
    #[arg(long, value_delimiter = ',', num_args = 4, allow_hyphen_values = true)]
    pub levels: Option<Vec<f64>>,
    /// Nominal body radius (mm) for `random`.
    #[arg(long, default_value_t = 100.0)]
    pub radius: f64,
    /// Number of inserts for `random`.
    #[arg(long, default_value_t = 6)]
    pub inserts: usize,
}

/// Canvas and scanner geometry; unset values fall back to `--geometry`
/// (a ScanSetup JSON file) and then to the defaults.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct GeometryArgs {
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Image width and height in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Pixel spacing (mm).
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub supersample: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub detectors: Option<usize>,
    #[arg(long)]
    pub detector_spacing: Option<f64>,
    /// Unattenuated photons per ray at full dose.
    #[arg(long)]
    pub i0: Option<f64>,
    /// sharp or smooth.
    #[arg(long)]
    pub kernel: Option<Kernel>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ScanArgs {
    #[arg(long)]
    pub phantom: PathBuf,
    /// Dose fraction of the reconstruction written as `recon`.
    #[arg(long, default_value_t = 0.25)]
    pub dose: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also writes a second acquisition `nd` at this dose plus `pairs.json`.
    #[arg(long)]
    pub nd_dose: Option<f64>,
    /// Also writes the rasterized ground truth.
    #[arg(long)]
    pub save_truth: bool,
    /// Also writes the noisy sinogram.
    #[arg(long)]
    pub save_sinogram: bool,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub phantom: PathBuf,
    /// Number of realizations.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0.25)]
    pub dose: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// JSON list of {"ld": path, "nd": path} (paths relative to the file).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mse")]
    pub loss: LossKind,
    #[arg(long, default_value_t = 1e-7)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.84)]
    pub alpha: f64,
    #[arg(long, default_value_t = 55)]
    pub patch: usize,
    /// Defaults to the patch size.
    #[arg(long)]
    pub stride: Option<usize>,
    /// unity or normF.
    #[arg(long, default_value = "unity")]
    pub norm: NormMode,
    #[arg(long, default_value_t = -1024.0, allow_hyphen_values = true)]
    pub norm_lo: f64,
    #[arg(long, default_value_t = 3072.0)]
    pub norm_hi: f64,
    #[arg(long)]
    pub augment_scale: bool,
    #[arg(long)]
    pub augment_rotate: bool,
    #[arg(long)]
    pub augment_dose: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub minibatch: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct DenoiserArgs {
    /// CNN3 weights written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Gaussian blur with this sigma (pixels).
    #[arg(long)]
    pub gaussian: Option<f64>,
    /// TV denoising with this lambda (HU).
    #[arg(long)]
    pub tv: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Directory of externally denoised images matched by file name.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Pass-through (FBP baseline).
    #[arg(long)]
    pub identity: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DenoiseArgs {
    /// Input image or directory of images.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub denoiser: DenoiserArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 2000.0)]
    pub data_range: f64,
    /// MS-SSIM scales (default: as many as fit, up to 5).
    #[arg(long)]
    pub scales: Option<usize>,
    /// Also writes the JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchMtfArgs {
    /// Image, or directory of images whose mean is measured.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub phantom: PathBuf,
    /// Only this insert (default: all).
    #[arg(long)]
    pub insert: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchNpsArgs {
    /// Directory of noise realizations.
    #[arg(long)]
    pub images: PathBuf,
    /// Square ROI side (pixels), centered unless --x0/--y0 are given.
    #[arg(long, default_value_t = 128)]
    pub roi: usize,
    #[arg(long)]
    pub x0: Option<usize>,
    #[arg(long)]
    pub y0: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchHuArgs {
    /// Image, or directory of images whose mean is measured.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub phantom: PathBuf,
    /// Insert index; profiles the body when absent.
    #[arg(long)]
    pub insert: Option<usize>,
    #[arg(long, default_value = "horizontal")]
    pub axis: ctbench::bench::Axis,
    /// Averages parallel lines within this half-width (mm).
    #[arg(long, default_value_t = 0.0)]
    pub band: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchDiffArgs {
    /// Image or directory.
    #[arg(long)]
    pub a: PathBuf,
    /// Image or directory (matched to --a by file name).
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub window_lo: f64,
    #[arg(long, default_value_t = 122.0)]
    pub window_hi: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchSuiteArgs {
    #[command(flatten)]
    pub denoiser: DenoiserArgs,
    /// BenchSuiteConfig JSON; flags below override it.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long)]
    pub dose: Option<f64>,
    #[arg(long)]
    pub n_mtf: Option<usize>,
    #[arg(long)]
    pub n_nps: Option<usize>,
    #[arg(long)]
    pub roi: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TuneArgs {
    /// global or bench.
    #[arg(long)]
    pub paradigm: Paradigm,
    /// JSON list of stages (default: patch size, learning rate, minibatch, loss).
    #[arg(long)]
    pub stages: Option<PathBuf>,
    /// Training pairs: a list of {ld, nd}, or {"train": [...], "tuning": [...]}.
    #[arg(long)]
    pub data: PathBuf,
    /// Separate tuning-set manifest.
    #[arg(long)]
    pub tuning: Option<PathBuf>,
    /// Base TuneConfig JSON.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Epochs per candidate during the search.
    #[arg(long, default_value_t = ctbench::harness::SHORT_SCHEDULE_EPOCHS)]
    pub short_epochs: usize,
    /// BenchSuiteConfig JSON for the bench paradigm.
    #[arg(long)]
    pub suite: Option<PathBuf>,
    /// Composite weights: resolution,texture,hu.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = 25.0)]
    pub hu_scale: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DiffArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Defaults to `<run>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output location (default: the recorded one).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

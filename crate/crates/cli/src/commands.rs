//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ctbench::bench::{
    abs_diff, band_profile, body_profile, hu_accuracy, mean_image, mtf_from_disk, nps_estimate, write_mtf_csv,
    write_mtf_summary, write_nps2d, write_nps2d_png, write_nps_csv, write_profile_csv, MtfCurve,
};
use ctbench::denoise::{
    apply_denoiser, cnn3_train, make_patch_set, read_weights, write_weights, Augment, Denoiser, LossConfig,
    Normalization, Optimizer, PreprocessConfig, TrainConfig, TrainedModel,
};
use ctbench::harness::{
    default_stages, evaluate_candidate, greedy_tune, objective_global, run_bench_suite, suite_data, train_model,
    write_tune_outputs, BenchContext, BenchReport, BenchSuiteConfig, CompositeWeights, ExperimentStage, Paradigm,
    TuneConfig, TuneContext,
};
use ctbench::image::{read_image, window_to_display};
use ctbench::metrics::{max_scales, ms_ssim, psnr, psnr_json, rmse, ssim, SsimConfig};
use ctbench::phantom::{self, PhantomSpec};
use ctbench::scanner::{add_poisson_noise, ensemble_from_sinogram, write_sinogram, ScanSetup};
use ctbench::{DisplayWindow, Error, Image, Roi};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::report;
use crate::run::{absolute, io_err, CliError, CliResult, Run, RunManifest};

/// Seed offset of the second (`nd`) acquisition written by `scan --nd-dose`.
pub const ND_SEED_OFFSET: u64 = 0x4e44_0000;

pub struct Globals {
    pub deterministic: bool,
}

/// Prints to stdout, ignoring a closed pipe.
fn say(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn abs_opt(p: &mut Option<PathBuf>) -> CliResult<()> {
    if let Some(x) = p {
        *x = absolute(x)?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(Error::Sidecar { path: path.into(), msg: e.to_string() }))
}

/// Image files (`*.f32` with an image sidecar) in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<(String, Image)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|n| n.strip_suffix(".f32").map(str::to_owned))
        .collect();
    names.sort();
    let images: Vec<(String, Image)> =
        names.into_iter().map(|n| read_image(dir.join(&n)).map(|img| (n, img))).collect::<Result<_, _>>()?;
    if images.is_empty() {
        return Err(CliError::Data(format!("no images found in {}", dir.display())));
    }
    Ok(images)
}

/// One image, or the mean of all images in a directory.
fn image_or_mean(path: &Path) -> CliResult<Image> {
    if path.is_dir() {
        let imgs: Vec<Image> = list_images(path)?.into_iter().map(|(_, i)| i).collect();
        Ok(mean_image(&imgs)?)
    } else {
        Ok(read_image(path)?)
    }
}

fn named_inputs(path: &Path) -> CliResult<Vec<(String, Image)>> {
    if path.is_dir() {
        list_images(path)
    } else {
        let name = ctbench::image::raster_paths(path)
            .0
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_owned();
        Ok(vec![(name, read_image(path)?)])
    }
}

impl GeometryArgs {
    fn absolutize(&mut self) -> CliResult<()> {
        abs_opt(&mut self.geometry)
    }

    pub fn resolve(&self) -> CliResult<ScanSetup> {
        let base: ScanSetup = match &self.geometry {
            Some(p) => read_json(p)?,
            None => ScanSetup::default(),
        };
        self.apply_to(base)
    }

    /// Applies the individual flags on top of `s`.
    pub fn apply_to(&self, mut s: ScanSetup) -> CliResult<ScanSetup> {
        if let Some(v) = self.size {
            s.width = v;
            s.height = v;
        }
        if let Some(v) = self.spacing {
            s.spacing_mm = v;
        }
        if let Some(v) = self.supersample {
            s.supersample = v;
        }
        if let Some(v) = self.views {
            s.geometry.n_views = v;
        }
        if let Some(v) = self.detectors {
            s.geometry.n_detectors = v;
        }
        if let Some(v) = self.detector_spacing {
            s.geometry.detector_spacing_mm = v;
        }
        if let Some(v) = self.i0 {
            s.geometry.i0 = v;
        }
        if let Some(k) = self.kernel {
            s.geometry.kernel = k;
        }
        s.geometry.validate()?;
        if s.width == 0 || s.height == 0 || !(s.spacing_mm > 0.0) || s.supersample == 0 {
            return Err(usage("image size, spacing and supersample must be positive"));
        }
        Ok(s)
    }
}

impl DenoiserArgs {
    fn absolutize(&mut self) -> CliResult<()> {
        abs_opt(&mut self.model)?;
        abs_opt(&mut self.external)
    }

    fn build(&self, run: &mut Run) -> CliResult<Denoiser> {
        let chosen = [self.model.is_some(), self.gaussian.is_some(), self.tv.is_some(), self.external.is_some(), self.identity]
            .iter()
            .filter(|b| **b)
            .count();
        if chosen != 1 {
            return Err(usage("choose exactly one of --model, --gaussian, --tv, --external, --identity"));
        }
        if let Some(p) = &self.model {
            let (payload, sidecar) = ctbench::image::raster_paths(p);
            run.input(&payload);
            run.input(&sidecar);
            return Ok(Denoiser::Cnn3(read_weights(p)?));
        }
        if let Some(s) = self.gaussian {
            if !(s >= 0.0) {
                return Err(usage(format!("--gaussian must be >= 0, got {s}")));
            }
            return Ok(Denoiser::Gaussian { sigma_px: s });
        }
        if let Some(l) = self.tv {
            return Ok(Denoiser::Tv { lambda: l, iterations: self.iterations });
        }
        if let Some(d) = &self.external {
            run.input(d);
            return Ok(Denoiser::External { dir: d.clone() });
        }
        Ok(Denoiser::Identity)
    }
}

pub fn execute(cmd: Command, g: &Globals) -> CliResult<()> {
    match cmd {
        Command::Phantom(a) => phantom_cmd(a, g),
        Command::Scan(a) => scan_cmd(a, g),
        Command::Ensemble(a) => ensemble_cmd(a, g),
        Command::Train(a) => train_cmd(a, g),
        Command::Denoise(a) => denoise_cmd(a, g),
        Command::Metrics(a) => metrics_cmd(a, g),
        Command::Bench(b) => match b {
            BenchCommand::Mtf(a) => bench_mtf(a, g),
            BenchCommand::Nps(a) => bench_nps(a, g),
            BenchCommand::Hu(a) => bench_hu(a, g),
            BenchCommand::Diff(a) => bench_diff(a, g),
            BenchCommand::Suite(a) => bench_suite(a, g),
        },
        Command::Tune(a) => tune_cmd(a, g),
        Command::Diff(a) => diff_cmd(a),
        Command::Report(a) => report::report_cmd(a, g),
        Command::Replay(a) => replay_cmd(a),
    }
}

fn phantom_cmd(mut a: PhantomArgs, g: &Globals) -> CliResult<()> {
    a.out = absolute(&a.out)?;
    let spec = match a.kind {
        PhantomKind::Contrast => match &a.levels {
            Some(l) => phantom::contrast_phantom_with_levels(&[l[0], l[1], l[2], l[3]]),
            None => phantom::make_contrast_phantom(),
        },
        PhantomKind::Water => phantom::make_water_cylinder(),
        PhantomKind::Random => {
            let seed = a.seed.ok_or_else(|| usage("the random phantom requires --seed"))?;
            phantom::make_random_phantom(seed, a.radius, a.inserts)
        }
    };
    spec.validate()?;
    let mut run = Run::for_file(&a.out)?;
    if let Some(s) = a.seed {
        run.seed("phantom", s);
    }
    spec.save(&a.out)?;
    run.record(a.out.file_name().map(PathBuf::from).unwrap_or_default());
    run.resolve("phantom", &spec)?;
    run.finish(&Command::Phantom(a), g.deterministic)?;
    Ok(())
}

fn load_phantom(path: &Path, run: &mut Run) -> CliResult<PhantomSpec> {
    run.input(path);
    Ok(PhantomSpec::load(path)?)
}

fn check_dose(d: f64) -> CliResult<()> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("dose fraction must lie in (0, 1], got {d}")))
    }
}

fn scan_cmd(mut a: ScanArgs, g: &Globals) -> CliResult<()> {
    a.phantom = absolute(&a.phantom)?;
    a.out = absolute(&a.out)?;
    a.geometry.absolutize()?;
    check_dose(a.dose)?;
    if let Some(d) = a.nd_dose {
        check_dose(d)?;
    }
    let mut run = Run::in_dir(&a.out)?;
    let spec = load_phantom(&a.phantom, &mut run)?;
    if let Some(p) = &a.geometry.geometry {
        run.input(p);
    }
    let setup = a.geometry.resolve()?;
    run.resolve("setup", &setup)?;
    run.seed("noise", a.seed);
    let truth = setup.ground_truth(&spec)?;
    let clean = ctbench::scanner::forward_project(
        &ctbench::scanner::hu_to_mu(&truth, setup.geometry.mu_water),
        &setup.geometry,
    )?;
    let noisy = add_poisson_noise(&clean, &setup.geometry, a.dose, a.seed)?;
    run.image("recon", &setup.reconstruct(&noisy)?)?;
    if a.save_sinogram {
        write_sinogram(run.path("sinogram"), &noisy)?;
        run.record_raster("sinogram");
    }
    if a.save_truth {
        run.image("truth", &truth)?;
    }
    if let Some(nd_dose) = a.nd_dose {
        let seed = a.seed.wrapping_add(ND_SEED_OFFSET);
        run.seed("nd_noise", seed);
        run.image("nd", &setup.noisy_recon(&clean, nd_dose, seed)?)?;
        run.json("pairs.json", &vec![PairEntry { ld: "recon.f32".into(), nd: "nd.f32".into() }])?;
    }
    run.finish(&Command::Scan(a), g.deterministic)?;
    Ok(())
}

fn ensemble_cmd(mut a: EnsembleArgs, g: &Globals) -> CliResult<()> {
    a.phantom = absolute(&a.phantom)?;
    a.out = absolute(&a.out)?;
    a.geometry.absolutize()?;
    check_dose(a.dose)?;
    let mut run = Run::in_dir(&a.out)?;
    let spec = load_phantom(&a.phantom, &mut run)?;
    if let Some(p) = &a.geometry.geometry {
        run.input(p);
    }
    let setup = a.geometry.resolve()?;
    run.resolve("setup", &setup)?;
    run.seed("first_realization", a.seed);
    let clean = setup.noiseless_sinogram(&spec)?;
    let images = ensemble_from_sinogram(&clean, &setup, a.n, a.dose, a.seed)?;
    for (i, img) in images.iter().enumerate() {
        run.image(&format!("real_{i:03}"), img)?;
    }
    run.finish(&Command::Ensemble(a), g.deterministic)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub ld: PathBuf,
    pub nd: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum DataManifest {
    List(Vec<PairEntry>),
    Split { train: Vec<PairEntry>, tuning: Vec<PairEntry> },
}

type Pairs = Vec<(Image, Image)>;

fn load_entries(base: &Path, entries: &[PairEntry], run: &mut Run) -> CliResult<Pairs> {
    entries
        .iter()
        .map(|e| {
            let (ld, nd) = (base.join(&e.ld), base.join(&e.nd));
            for p in [&ld, &nd] {
                for q in <[PathBuf; 2]>::from(ctbench::image::raster_paths(p)) {
                    run.input(&q);
                }
            }
            let (ld, nd) = (read_image(&ld)?, read_image(&nd)?);
            if !ld.same_shape(&nd) {
                return Err(CliError::Core(Error::Dimension(format!("pair {} / {} differ in shape", e.ld.display(), e.nd.display()))));
            }
            Ok((ld, nd))
        })
        .collect()
}

/// Reads a data manifest; returns the training pairs and the tuning pairs
/// when the manifest defines them.
fn load_data(path: &Path, run: &mut Run) -> CliResult<(Pairs, Option<Pairs>)> {
    run.input(path);
    let base = path.parent().unwrap_or(Path::new("."));
    match read_json::<DataManifest>(path)? {
        DataManifest::List(e) => Ok((load_entries(base, &e, run)?, None)),
        DataManifest::Split { train, tuning } => {
            Ok((load_entries(base, &train, run)?, Some(load_entries(base, &tuning, run)?)))
        }
    }
}

impl TrainArgs {
    fn config(&self) -> CliResult<TuneConfig> {
        let normalization = Normalization::new(self.norm, self.norm_lo, self.norm_hi)?;
        let preprocess = PreprocessConfig {
            normalization,
            patch_size: self.patch,
            patch_stride: self.stride.unwrap_or(self.patch),
            augment: Augment {
                scale: self.augment_scale,
                rotate_flip: self.augment_rotate,
                dose_blend: self.augment_dose,
                ..Augment::default()
            },
        };
        preprocess.validate()?;
        let loss = LossConfig { kind: self.loss, lambda: self.lambda, beta: self.beta, alpha: self.alpha, ..LossConfig::new(self.loss) };
        loss.validate()?;
        let train = TrainConfig {
            learning_rate: self.lr,
            minibatch: self.minibatch,
            epochs: self.epochs,
            seed: self.seed,
            optimizer: Optimizer::parse(&self.optimizer)?,
            max_steps: self.max_steps,
        };
        train.validate()?;
        Ok(TuneConfig { preprocess, loss, train })
    }
}

fn train_cmd(mut a: TrainArgs, g: &Globals) -> CliResult<()> {
    a.data = absolute(&a.data)?;
    a.out = absolute(&a.out)?;
    a.stride = Some(a.stride.unwrap_or(a.patch));
    let cfg = a.config()?;
    let mut run = Run::in_dir(&a.out)?;
    let (pairs, _) = load_data(&a.data, &mut run)?;
    run.resolve("config", &cfg)?;
    run.seed("train", a.seed);
    run.seed("patches", a.seed);
    let patches = make_patch_set(&pairs, &cfg.preprocess, a.seed)?;
    let result = cnn3_train(&patches, &cfg.effective_loss(), &cfg.train)?;
    let model = TrainedModel { weights: result.weights, normalization: patches.normalization };
    write_weights(run.path("cnn3.w"), &model, Some(serde_json::to_value(&cfg)?))?;
    run.record_raster("cnn3.w");
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in result.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    run.text("loss.csv", &csv)?;
    let mut steps = String::from("step,loss\n");
    for (i, l) in result.step_losses.iter().enumerate() {
        steps.push_str(&format!("{},{l}\n", i + 1));
    }
    run.text("steps.csv", &steps)?;
    run.resolve("patches", &patches.len())?;
    run.finish(&Command::Train(a), g.deterministic)?;
    Ok(())
}

fn denoise_cmd(mut a: DenoiseArgs, g: &Globals) -> CliResult<()> {
    a.input = absolute(&a.input)?;
    a.out = absolute(&a.out)?;
    a.denoiser.absolutize()?;
    let mut run = Run::in_dir(&a.out)?;
    let denoiser = a.denoiser.build(&mut run)?;
    run.input(&a.input);
    run.resolve("denoiser", &denoiser.label())?;
    let inputs = named_inputs(&a.input)?;
    let outputs = apply_denoiser(&denoiser, &inputs)?;
    for ((name, _), img) in inputs.iter().zip(&outputs) {
        run.image(name, img)?;
    }
    run.finish(&Command::Denoise(a), g.deterministic)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsOut {
    pub rmse: f64,
    pub psnr: serde_json::Value,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub ms_ssim_scales: usize,
}

fn metrics_cmd(mut a: MetricsArgs, g: &Globals) -> CliResult<()> {
    a.a = absolute(&a.a)?;
    a.b = absolute(&a.b)?;
    abs_opt(&mut a.out)?;
    let (x, y) = (read_image(&a.a)?, read_image(&a.b)?);
    let cfg = SsimConfig::default().with_data_range(a.data_range);
    let scales = a.scales.unwrap_or_else(|| max_scales(x.width(), x.height(), cfg.window_size));
    let out = MetricsOut {
        rmse: rmse(&x, &y)?,
        psnr: psnr_json(psnr(&x, &y, a.data_range)?),
        ssim: ssim(&x, &y, &cfg)?,
        ms_ssim: ms_ssim(&x, &y, &cfg, scales)?,
        ms_ssim_scales: scales,
    };
    let text = serde_json::to_string_pretty(&out)?;
    if let Some(path) = a.out.clone() {
        let mut run = Run::for_file(&path)?;
        run.input(&a.a);
        run.input(&a.b);
        std::fs::write(&path, text.clone() + "\n").map_err(|e| io_err(&path, e))?;
        run.record(path.file_name().map(PathBuf::from).unwrap_or_default());
        run.finish(&Command::Metrics(a), g.deterministic)?;
    }
    say(&text);
    Ok(())
}

fn contrast_name(hu: f64) -> String {
    format!("{hu}")
}

fn write_mtf_outputs(run: &mut Run, prefix: &str, curves: &[MtfCurve]) -> CliResult<()> {
    for c in curves {
        let rel = format!("{prefix}mtf_{}.csv", contrast_name(c.contrast_hu));
        write_mtf_csv(run.path(&rel), c)?;
        run.record(rel);
    }
    let rel = format!("{prefix}mtf50.json");
    write_mtf_summary(run.path(&rel), curves)?;
    run.record(rel);
    Ok(())
}

fn bench_mtf(mut a: BenchMtfArgs, g: &Globals) -> CliResult<()> {
    a.image = absolute(&a.image)?;
    a.phantom = absolute(&a.phantom)?;
    a.out = absolute(&a.out)?;
    let mut run = Run::in_dir(&a.out)?;
    let spec = load_phantom(&a.phantom, &mut run)?;
    run.input(&a.image);
    let img = image_or_mean(&a.image)?;
    let indices: Vec<usize> = match a.insert {
        Some(i) if i >= spec.inserts.len() => {
            return Err(usage(format!("insert {i} out of range ({} inserts)", spec.inserts.len())))
        }
        Some(i) => vec![i],
        None => (0..spec.inserts.len()).collect(),
    };
    let curves: Vec<MtfCurve> =
        indices.iter().map(|&i| mtf_from_disk(&img, &spec.inserts[i], spec.body_hu)).collect::<Result<_, _>>()?;
    write_mtf_outputs(&mut run, "", &curves)?;
    run.finish(&Command::Bench(BenchCommand::Mtf(a)), g.deterministic)?;
    Ok(())
}

fn bench_nps(mut a: BenchNpsArgs, g: &Globals) -> CliResult<()> {
    a.images = absolute(&a.images)?;
    a.out = absolute(&a.out)?;
    let mut run = Run::in_dir(&a.out)?;
    run.input(&a.images);
    let imgs: Vec<Image> = list_images(&a.images)?.into_iter().map(|(_, i)| i).collect();
    let roi = match (a.x0, a.y0) {
        (Some(x0), Some(y0)) => Roi::new(x0, y0, a.roi, a.roi),
        (None, None) => Roi::centered(imgs[0].width(), imgs[0].height(), a.roi)?,
        _ => return Err(usage("--x0 and --y0 must be given together")),
    };
    run.resolve("roi", &roi)?;
    let nps = nps_estimate(&imgs, roi)?;
    write_nps_csv(run.path("nps.csv"), &nps)?;
    run.record("nps.csv");
    write_nps2d(run.path("nps2d"), &nps)?;
    run.record_raster("nps2d");
    write_nps2d_png(run.path("nps2d.png"), &nps)?;
    run.record("nps2d.png");
    run.finish(&Command::Bench(BenchCommand::Nps(a)), g.deterministic)?;
    Ok(())
}

fn bench_hu(mut a: BenchHuArgs, g: &Globals) -> CliResult<()> {
    a.image = absolute(&a.image)?;
    a.phantom = absolute(&a.phantom)?;
    a.out = absolute(&a.out)?;
    let mut run = Run::in_dir(&a.out)?;
    let spec = load_phantom(&a.phantom, &mut run)?;
    run.input(&a.image);
    let img = image_or_mean(&a.image)?;
    let profile = match a.insert {
        Some(i) => band_profile(&img, &spec, i, a.axis, a.band)?,
        None if a.band == 0.0 => body_profile(&img, &spec, a.axis)?,
        None => return Err(usage("--band applies to insert profiles only")),
    };
    let acc = hu_accuracy(&profile)?;
    write_profile_csv(run.path("profile.csv"), &profile)?;
    run.record("profile.csv");
    run.json("hu.json", &acc)?;
    run.finish(&Command::Bench(BenchCommand::Hu(a)), g.deterministic)?;
    Ok(())
}

fn diff_window(lo: f64, hi: f64) -> CliResult<DisplayWindow> {
    DisplayWindow::from_range(lo, hi).map_err(CliError::from)
}

fn bench_diff(mut a: BenchDiffArgs, g: &Globals) -> CliResult<()> {
    a.a = absolute(&a.a)?;
    a.b = absolute(&a.b)?;
    a.out = absolute(&a.out)?;
    let win = diff_window(a.window_lo, a.window_hi)?;
    let mut run = Run::in_dir(&a.out)?;
    run.input(&a.a);
    run.input(&a.b);
    let xs = named_inputs(&a.a)?;
    let single_b = !a.b.is_dir();
    for (name, x) in &xs {
        let y = if single_b { read_image(&a.b)? } else { read_image(a.b.join(name))? };
        let d = abs_diff(x, &y)?;
        let rel = format!("diff_{name}");
        run.image(&rel, &d)?;
        run.gray_png(&format!("{rel}.png"), d.width(), d.height(), &window_to_display(&d, win))?;
    }
    run.finish(&Command::Bench(BenchCommand::Diff(a)), g.deterministic)?;
    Ok(())
}

impl BenchSuiteArgs {
    fn config(&self) -> CliResult<BenchSuiteConfig> {
        let mut cfg: BenchSuiteConfig = match &self.suite {
            Some(p) => read_json(p)?,
            None => BenchSuiteConfig::default(),
        };
        cfg.setup = match &self.geometry.geometry {
            Some(_) => self.geometry.resolve()?,
            None => self.geometry.apply_to(cfg.setup)?,
        };
        if let Some(v) = self.dose {
            cfg.dose_fraction = v;
        }
        if let Some(v) = self.n_mtf {
            cfg.n_mtf = v;
        }
        if let Some(v) = self.n_nps {
            cfg.n_nps = v;
        }
        if let Some(v) = self.roi {
            cfg.nps_roi = v;
        }
        cfg.seed = self.seed;
        check_dose(cfg.dose_fraction)?;
        Ok(cfg)
    }
}

fn write_report_files(run: &mut Run, prefix: &str, r: &BenchReport) -> CliResult<()> {
    write_mtf_outputs(run, prefix, &r.mtf)?;
    let rel = format!("{prefix}nps.csv");
    write_nps_csv(run.path(&rel), &r.nps)?;
    run.record(rel);
    let rel = format!("{prefix}nps2d");
    write_nps2d(run.path(&rel), &r.nps)?;
    run.record_raster(&rel);
    for (p, h) in r.profiles.iter().zip(&r.hu) {
        let rel = format!("{prefix}profile_{}.csv", contrast_name(h.contrast_hu));
        write_profile_csv(run.path(&rel), p)?;
        run.record(rel);
    }
    run.json(&format!("{prefix}hu.json"), &r.hu)?;
    Ok(())
}

fn bench_suite(mut a: BenchSuiteArgs, g: &Globals) -> CliResult<()> {
    a.out = absolute(&a.out)?;
    abs_opt(&mut a.suite)?;
    a.denoiser.absolutize()?;
    a.geometry.absolutize()?;
    let mut run = Run::in_dir(&a.out)?;
    let denoiser = a.denoiser.build(&mut run)?;
    if let Some(p) = &a.suite {
        run.input(p);
    }
    let cfg = a.config()?;
    run.resolve("suite", &cfg)?;
    run.seed("contrast_first_realization", cfg.seed);
    run.seed("water_first_realization", cfg.seed + 1_000_000);
    let report = run_bench_suite(&denoiser, &cfg)?;
    let baseline = if denoiser == Denoiser::Identity { report.clone() } else { run_bench_suite(&Denoiser::Identity, &cfg)? };
    run.json("report.json", &report)?;
    run.json("baseline.json", &baseline)?;
    write_report_files(&mut run, "", &report)?;
    write_report_files(&mut run, "baseline/", &baseline)?;
    let data = suite_data(&cfg)?;
    let named: Vec<(String, Image)> =
        data.contrast.iter().enumerate().map(|(i, img)| (format!("contrast_{i:03}"), img.clone())).collect();
    let denoised_mean = mean_image(&apply_denoiser(&denoiser, &named)?)?;
    let fbp_mean = mean_image(&data.contrast)?;
    let truth = cfg.setup.ground_truth(&data.contrast_spec)?;
    run.image("denoised_mean", &denoised_mean)?;
    run.image("fbp_mean", &fbp_mean)?;
    run.image("truth", &truth)?;
    let diff = abs_diff(&denoised_mean, &truth)?;
    run.image("diff_truth", &diff)?;
    run.gray_png("diff_truth.png", diff.width(), diff.height(), &window_to_display(&diff, diff_window(0.0, 122.0)?))?;
    run.finish(&Command::Bench(BenchCommand::Suite(a)), g.deterministic)?;
    Ok(())
}

fn split_tuning(pairs: Pairs) -> CliResult<(Pairs, Pairs)> {
    if pairs.len() < 2 {
        return Err(CliError::Data("tuning needs at least 2 image pairs (training and tuning)".into()));
    }
    let n_tune = pairs.len().div_ceil(5);
    let mut train = pairs;
    let tuning = train.split_off(train.len() - n_tune);
    Ok((train, tuning))
}

#[derive(Debug, Clone, Serialize)]
struct WinnerSummary {
    config: TuneConfig,
    epochs: usize,
    psnr: serde_json::Value,
    ssim: f64,
    ldct_psnr: serde_json::Value,
    ldct_ssim: f64,
    bench: Option<BenchReport>,
}

fn tune_cmd(mut a: TuneArgs, g: &Globals) -> CliResult<()> {
    a.data = absolute(&a.data)?;
    a.out = absolute(&a.out)?;
    abs_opt(&mut a.stages)?;
    abs_opt(&mut a.tuning)?;
    abs_opt(&mut a.base)?;
    abs_opt(&mut a.suite)?;
    let mut run = Run::in_dir(&a.out)?;
    let mut base: TuneConfig = match &a.base {
        Some(p) => {
            run.input(p);
            read_json(p)?
        }
        None => TuneConfig::default(),
    };
    base.train.seed = a.seed;
    let stages: Vec<ExperimentStage> = match &a.stages {
        Some(p) => {
            run.input(p);
            read_json(p)?
        }
        None => default_stages(),
    };
    ctbench::harness::validate_stages(&stages)?;
    let (train_pairs, tuning_pairs) = {
        let (train, tuning) = load_data(&a.data, &mut run)?;
        match (tuning, &a.tuning) {
            (_, Some(p)) => (train, load_data(p, &mut run)?.0),
            (Some(t), None) => (train, t),
            (None, None) => split_tuning(train)?,
        }
    };
    let weights = match &a.weights {
        Some(w) => CompositeWeights { resolution: w[0], texture: w[1], hu: w[2], hu_scale: a.hu_scale },
        None => CompositeWeights { hu_scale: a.hu_scale, ..CompositeWeights::default() },
    };
    let bench = match a.paradigm {
        Paradigm::Global => None,
        Paradigm::Bench => {
            let mut cfg: BenchSuiteConfig = match &a.suite {
                Some(p) => {
                    run.input(p);
                    read_json(p)?
                }
                None => BenchSuiteConfig::default(),
            };
            if a.suite.is_none() {
                cfg.seed = a.seed;
            }
            run.resolve("suite", &cfg)?;
            run.resolve("composite_weights", &weights)?;
            Some(BenchContext::new(cfg, &tuning_pairs, weights)?)
        }
    };
    run.resolve("base", &base)?;
    run.resolve("stages", &stages)?;
    run.resolve("train_pairs", &train_pairs.len())?;
    run.resolve("tuning_pairs", &tuning_pairs.len())?;
    run.seed("train", a.seed);
    run.seed("patches", a.seed);
    let ldct = objective_global(&tuning_pairs)?;
    let ctx = TuneContext {
        train_pairs,
        tuning_pairs,
        paradigm: a.paradigm,
        short_epochs: a.short_epochs,
        patch_seed: a.seed,
        bench,
        weights_dir: Some(run.path("weights")),
    };
    let result = greedy_tune(&base, &stages, |cfg, id| evaluate_candidate(&ctx, cfg, id))?;
    write_tune_outputs(&a.out, &stages, &result)?;
    run.record("stages.json");
    run.record("winner.json");
    run.record("tune_result.json");
    for (i, t) in result.stages.iter().enumerate() {
        let dir = ctbench::harness::stage_dir_name(i, &t.name);
        run.record(format!("{dir}/table.csv"));
        for (c, row) in t.rows.iter().enumerate() {
            if row.error.is_none() {
                run.record_raster(&format!("weights/stage{}_cand{}.w", i + 1, c + 1));
            }
        }
    }
    if let Some(b) = &ctx.bench {
        run.json("baseline.json", &b.baseline)?;
    }
    let winner = result.winner.clone();
    let model = train_model(&ctx, &winner, winner.train.epochs)?;
    write_weights(run.path("winner.w"), &model, Some(serde_json::to_value(&winner)?))?;
    run.record_raster("winner.w");
    let denoiser = Denoiser::Cnn3(model);
    let outputs: Pairs = ctx
        .tuning_pairs
        .iter()
        .map(|(ld, nd)| Ok((denoiser.apply_one("", ld)?, nd.clone())))
        .collect::<Result<_, Error>>()?;
    let scores = objective_global(&outputs)?;
    let bench_report = match &ctx.bench {
        Some(b) => Some(ctbench::harness::objective_bench(
            run_bench_suite(&denoiser, &b.suite)?,
            &b.baseline,
            scores,
            b.ldct_psnr,
            &b.weights,
        )?),
        None => None,
    };
    run.json(
        "winner_summary.json",
        &WinnerSummary {
            config: winner.clone(),
            epochs: winner.train.epochs,
            psnr: psnr_json(scores.psnr),
            ssim: scores.ssim,
            ldct_psnr: psnr_json(ldct.psnr),
            ldct_ssim: ldct.ssim,
            bench: bench_report,
        },
    )?;
    run.finish(&Command::Tune(a), g.deterministic)?;
    Ok(())
}

fn is_manifest(rel: &Path) -> bool {
    rel.file_name().and_then(|n| n.to_str()).is_some_and(|n| n == crate::run::MANIFEST_NAME || n.ends_with(".manifest.json"))
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for e in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let e = e.map_err(|e| io_err(dir, e))?;
        let p = e.path();
        if p.is_dir() {
            walk(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("walk stays under root").to_path_buf();
            if !is_manifest(&rel) {
                out.push(rel);
            }
        }
    }
    Ok(())
}

fn diff_cmd(a: DiffArgs) -> CliResult<()> {
    let mut fa = Vec::new();
    let mut fb = Vec::new();
    walk(&a.a, &a.a, &mut fa)?;
    walk(&a.b, &a.b, &mut fb)?;
    fa.sort();
    fb.sort();
    let mut differences = Vec::new();
    let all: std::collections::BTreeSet<&PathBuf> = fa.iter().chain(&fb).collect();
    for rel in all {
        let (pa, pb) = (a.a.join(rel), a.b.join(rel));
        let line = match (pa.exists(), pb.exists()) {
            (true, false) => format!("only in {}: {}", a.a.display(), rel.display()),
            (false, true) => format!("only in {}: {}", a.b.display(), rel.display()),
            _ => {
                let x = std::fs::read(&pa).map_err(|e| io_err(&pa, e))?;
                let y = std::fs::read(&pb).map_err(|e| io_err(&pb, e))?;
                if x == y {
                    continue;
                }
                format!("differs: {}", rel.display())
            }
        };
        say(&line);
        differences.push(line);
    }
    if differences.is_empty() {
        say(&format!("identical: {} files", fa.len()));
        Ok(())
    } else {
        Err(CliError::Data(format!("{} difference(s) between {} and {}", differences.len(), a.a.display(), a.b.display())))
    }
}

fn replay_cmd(a: ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let mut cmd = manifest.invocation;
    if let Command::Replay(_) = cmd {
        return Err(CliError::Data("a manifest cannot record a replay".into()));
    }
    if let Some(out) = a.out {
        cmd.set_out(absolute(&out)?);
    }
    execute(cmd, &Globals { deterministic: manifest.deterministic })
}

/// Per-contrast metric lookup shared with the report renderer.
pub fn mtf50_map(r: &BenchReport) -> BTreeMap<String, f64> {
    r.mtf.iter().map(|c| (contrast_name(c.contrast_hu), c.mtf50)).collect()
}

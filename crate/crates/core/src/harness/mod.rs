//! Greedy stage-wise hyperparameter tuning, scored either on global
//! fidelity (PSNR, SSIM tie-break) or on a bench-test composite with a PSNR
//! floor.

pub mod suite;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use suite::{
    run_bench_suite, simulation_count, suite_data, BenchReport, BenchSuiteConfig, InsertHu, Subscores, SuiteData,
    CACHE_ENV,
};

use crate::denoise::{
    cnn3_train, make_patch_set, write_weights, Denoiser, LossConfig, LossKind, NormMode, Normalization, Optimizer,
    PreprocessConfig, TrainConfig, TrainedModel,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{psnr, ssim, SsimConfig, DEFAULT_DATA_RANGE_HU};

/// Epochs per candidate while tuning; the winner is retrained in full.
pub const SHORT_SCHEDULE_EPOCHS: usize = 5;
/// PSNR differences below this (dB) count as ties for the global objective.
pub const PSNR_TIE_DB: f64 = 0.01;

/// Everything a CNN3 training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub preprocess: PreprocessConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self { preprocess: PreprocessConfig::default(), loss: LossConfig::default(), train: TrainConfig::default() }
    }
}

impl TuneConfig {
    /// Loss settings with the MS-SSIM range tied to the normalization.
    pub fn effective_loss(&self) -> LossConfig {
        LossConfig { data_range: self.preprocess.normalization.model_range(), ..self.loss }
    }
}

/// One change to a [`TuneConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", content = "value", rename_all = "snake_case")]
pub enum ConfigDelta {
    /// Patch side; also sets the stride to the same value (non-overlapping
    /// tiling at every size).
    PatchSize(usize),
    PatchStride(usize),
    Normalization(NormMode),
    LearningRate(f64),
    Minibatch(usize),
    Epochs(usize),
    Optimizer(Optimizer),
    Loss(LossKind),
    Lambda(f64),
    Beta(f64),
    Alpha(f64),
}

impl ConfigDelta {
    pub fn field(&self) -> &'static str {
        match self {
            ConfigDelta::PatchSize(_) => "patch_size",
            ConfigDelta::PatchStride(_) => "patch_stride",
            ConfigDelta::Normalization(_) => "normalization",
            ConfigDelta::LearningRate(_) => "learning_rate",
            ConfigDelta::Minibatch(_) => "minibatch",
            ConfigDelta::Epochs(_) => "epochs",
            ConfigDelta::Optimizer(_) => "optimizer",
            ConfigDelta::Loss(_) => "loss",
            ConfigDelta::Lambda(_) => "lambda",
            ConfigDelta::Beta(_) => "beta",
            ConfigDelta::Alpha(_) => "alpha",
        }
    }

    pub fn label(&self) -> String {
        let value = match self {
            ConfigDelta::PatchSize(v) | ConfigDelta::PatchStride(v) | ConfigDelta::Minibatch(v) | ConfigDelta::Epochs(v) => {
                v.to_string()
            }
            ConfigDelta::LearningRate(v) | ConfigDelta::Lambda(v) | ConfigDelta::Beta(v) | ConfigDelta::Alpha(v) => {
                format!("{v:e}")
            }
            ConfigDelta::Normalization(m) => m.to_string(),
            ConfigDelta::Optimizer(Optimizer::Adam { .. }) => "adam".into(),
            ConfigDelta::Optimizer(Optimizer::SgdMomentum { .. }) => "sgd".into(),
            ConfigDelta::Loss(k) => k.to_string(),
        };
        format!("{}={value}", self.field())
    }

    pub fn apply(&self, cfg: &TuneConfig) -> TuneConfig {
        let mut c = cfg.clone();
        match *self {
            ConfigDelta::PatchSize(v) => {
                c.preprocess.patch_size = v;
                c.preprocess.patch_stride = v;
            }
            ConfigDelta::PatchStride(v) => c.preprocess.patch_stride = v,
            ConfigDelta::Normalization(m) => {
                let n = c.preprocess.normalization;
                c.preprocess.normalization = Normalization { mode: m, ..n };
            }
            ConfigDelta::LearningRate(v) => c.train.learning_rate = v,
            ConfigDelta::Minibatch(v) => c.train.minibatch = v,
            ConfigDelta::Epochs(v) => c.train.epochs = v,
            ConfigDelta::Optimizer(o) => c.train.optimizer = o,
            ConfigDelta::Loss(k) => c.loss.kind = k,
            ConfigDelta::Lambda(v) => c.loss.lambda = v,
            ConfigDelta::Beta(v) => c.loss.beta = v,
            ConfigDelta::Alpha(v) => c.loss.alpha = v,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStage {
    pub name: String,
    pub candidates: Vec<ConfigDelta>,
}

impl ExperimentStage {
    pub fn new(name: impl Into<String>, candidates: Vec<ConfigDelta>) -> Self {
        Self { name: name.into(), candidates }
    }

    fn fields(&self) -> BTreeSet<&'static str> {
        self.candidates.iter().map(ConfigDelta::field).collect()
    }
}

/// The stage sequence patch size → learning rate → minibatch → loss.
pub fn default_stages() -> Vec<ExperimentStage> {
    vec![
        ExperimentStage::new("patch size", [32, 55, 64, 96].map(ConfigDelta::PatchSize).to_vec()),
        ExperimentStage::new("learning rate", [1e-1, 1e-2, 1e-3, 1e-4].map(ConfigDelta::LearningRate).to_vec()),
        ExperimentStage::new("minibatch", [64, 128, 256, 512].map(ConfigDelta::Minibatch).to_vec()),
        ExperimentStage::new("loss", LossKind::ALL.map(ConfigDelta::Loss).to_vec()),
    ]
}

pub fn validate_stages(stages: &[ExperimentStage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::InvalidArgument("at least one tuning stage is required".into()));
    }
    let mut seen: BTreeSet<&'static str> = BTreeSet::new();
    for s in stages {
        if s.candidates.len() < 2 {
            return Err(Error::InvalidArgument(format!("stage '{}' needs at least 2 candidates", s.name)));
        }
        let fields = s.fields();
        if let Some(f) = fields.iter().find(|f| seen.contains(*f)) {
            return Err(Error::InvalidArgument(format!("stage '{}' changes '{f}', already tuned by an earlier stage", s.name)));
        }
        seen.extend(fields);
    }
    Ok(())
}

/// Ordering key of a candidate: higher `primary` wins; candidates within
/// `tie` of the best primary are separated by `secondary`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub primary: f64,
    pub secondary: f64,
    pub tie: f64,
}

impl Score {
    pub fn new(primary: f64) -> Self {
        Self { primary, secondary: 0.0, tie: 0.0 }
    }
}

/// Index of the winning score; NaN primaries never win.
pub fn select_winner(scores: &[Option<Score>]) -> Option<usize> {
    let best = scores.iter().flatten().map(|s| s.primary).filter(|p| !p.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    let mut winner: Option<(usize, Score)> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = s else { continue };
        if s.primary.is_nan() {
            continue;
        }
        let in_tie = s.primary == best || s.primary >= best - s.tie;
        if !in_tie {
            continue;
        }
        match winner {
            Some((_, w)) if !(s.secondary > w.secondary) => {}
            _ => winner = Some((i, *s)),
        }
    }
    winner.map(|(i, _)| i)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: Option<Score>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub composite: Option<f64>,
    pub subscores: Option<Subscores>,
}

impl Evaluation {
    pub fn scored(score: Score) -> Self {
        Self { score: Some(score), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub label: String,
    pub delta: ConfigDelta,
    /// `None` on success, otherwise the failure message.
    pub error: Option<String>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTable {
    pub name: String,
    pub rows: Vec<CandidateRow>,
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub winner: TuneConfig,
    pub stages: Vec<StageTable>,
    pub evaluations: usize,
}

/// Identifies the candidate being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateId {
    pub stage: usize,
    pub index: usize,
}

/// Greedy stage-wise search: every candidate of stage k is evaluated with
/// the winners of stages < k applied, and the best is carried forward.
/// Candidates of one stage run concurrently; failures are recorded and
/// excluded.
pub fn greedy_tune<F>(base: &TuneConfig, stages: &[ExperimentStage], objective: F) -> Result<TuneResult>
where
    F: Fn(&TuneConfig, CandidateId) -> Result<Evaluation> + Sync,
{
    validate_stages(stages)?;
    let mut current = base.clone();
    let mut tables = Vec::with_capacity(stages.len());
    let mut evaluations = 0;
    for (si, stage) in stages.iter().enumerate() {
        let rows: Vec<CandidateRow> = stage
            .candidates
            .par_iter()
            .enumerate()
            .map(|(ci, delta)| {
                let cfg = delta.apply(&current);
                let (error, evaluation) = match objective(&cfg, CandidateId { stage: si, index: ci }) {
                    Ok(e) if e.score.is_some_and(|s| !s.primary.is_nan()) => (None, e),
                    Ok(e) => (Some("objective produced no usable score".to_string()), e),
                    Err(err) => (Some(err.to_string()), Evaluation::default()),
                };
                CandidateRow { label: delta.label(), delta: delta.clone(), error, evaluation }
            })
            .collect();
        evaluations += rows.len();
        let scores: Vec<Option<Score>> =
            rows.iter().map(|r| if r.error.is_none() { r.evaluation.score } else { None }).collect();
        let winner = select_winner(&scores).ok_or_else(|| {
            Error::Numerical(format!("every candidate of stage '{}' failed", stage.name))
        })?;
        current = stage.candidates[winner].apply(&current);
        tables.push(StageTable { name: stage.name.clone(), rows, winner });
    }
    Ok(TuneResult { winner: current, stages: tables, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalScores {
    pub psnr: f64,
    pub ssim: f64,
}

impl GlobalScores {
    pub fn score(&self) -> Score {
        Score { primary: self.psnr, secondary: self.ssim, tie: PSNR_TIE_DB }
    }
}

/// Mean PSNR and SSIM (HU data range 2000) of `(output, reference)` pairs.
pub fn objective_global(pairs: &[(Image, Image)]) -> Result<GlobalScores> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("tuning set is empty".into()));
    }
    let cfg = SsimConfig::default();
    let (mut p, mut s) = (0.0, 0.0);
    for (out, reference) in pairs {
        p += psnr(out, reference, DEFAULT_DATA_RANGE_HU)?;
        s += ssim(out, reference, &cfg)?;
    }
    let n = pairs.len() as f64;
    Ok(GlobalScores { psnr: p / n, ssim: s / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub resolution: f64,
    pub texture: f64,
    pub hu: f64,
    /// Mean plateau MAD (HU) at which the HU subscore reaches 0.
    pub hu_scale: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self { resolution: 1.0 / 3.0, texture: 1.0 / 3.0, hu: 1.0 / 3.0, hu_scale: 25.0 }
    }
}

/// Relative L2 distance between unit-area radial NPS curves (DC excluded),
/// capped at 1.
pub fn nps_shape_distance(a: &crate::bench::NpsResult, b: &crate::bench::NpsResult) -> Result<f64> {
    let curve = |n: &crate::bench::NpsResult| -> Vec<f64> { n.radial_curve().map(|(_, v)| v).collect() };
    let (ca, cb) = (curve(a), curve(b));
    if ca.len() != cb.len() || ca.is_empty() {
        return Err(Error::Dimension("nps curves have different binning".into()));
    }
    let unit = |c: &[f64]| -> Vec<f64> {
        let s: f64 = c.iter().sum();
        if s > 0.0 {
            c.iter().map(|v| v / s).collect()
        } else {
            vec![0.0; c.len()]
        }
    };
    let (ua, ub) = (unit(&ca), unit(&cb));
    let diff: f64 = ua.iter().zip(&ub).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = ub.iter().map(|y| y * y).sum::<f64>().sqrt();
    Ok(if norm > 0.0 { (diff / norm).min(1.0) } else { 1.0 })
}

/// Scores `report` against the FBP `baseline`. Candidates whose tuning-set
/// PSNR falls below the LDCT input's PSNR score exactly 0.
pub fn objective_bench(
    mut report: BenchReport,
    baseline: &BenchReport,
    global: GlobalScores,
    ldct_psnr: f64,
    weights: &CompositeWeights,
) -> Result<BenchReport> {
    if baseline.mtf.len() != report.mtf.len() || baseline.mtf.is_empty() {
        return Err(Error::InvalidArgument("bench baseline is missing or incomplete".into()));
    }
    let resolution = report
        .mtf
        .iter()
        .zip(&baseline.mtf)
        .map(|(m, b)| if b.mtf50 > 0.0 { (m.mtf50 / b.mtf50).min(1.0) } else { 0.0 })
        .sum::<f64>()
        / report.mtf.len() as f64;
    let distance = nps_shape_distance(&report.nps, &baseline.nps)?;
    let texture = (1.0 - distance).clamp(0.0, 1.0);
    let hu = (1.0 - report.mean_plateau_mad() / weights.hu_scale).clamp(0.0, 1.0);
    let total = weights.resolution + weights.texture + weights.hu;
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("composite weights must sum to a positive value".into()));
    }
    let composite = if global.psnr < ldct_psnr {
        0.0
    } else {
        ((weights.resolution * resolution + weights.texture * texture + weights.hu * hu) / total).clamp(0.0, 1.0)
    };
    report.nps_distance = Some(distance);
    report.psnr = Some(global.psnr);
    report.ssim = Some(global.ssim);
    report.subscores = Some(Subscores { resolution: resolution.clamp(0.0, 1.0), texture, hu });
    report.composite_score = Some(composite);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Global,
    Bench,
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Paradigm::Global),
            "bench" => Ok(Paradigm::Bench),
            _ => Err(Error::InvalidArgument(format!("unknown paradigm {s:?} (expected global or bench)"))),
        }
    }
}

/// Data and settings for evaluating trained candidates.
pub struct TuneContext {
    pub train_pairs: Vec<(Image, Image)>,
    /// `(ld, nd)` pairs scored by the global metrics.
    pub tuning_pairs: Vec<(Image, Image)>,
    pub paradigm: Paradigm,
    pub short_epochs: usize,
    pub patch_seed: u64,
    pub bench: Option<BenchContext>,
    /// Where candidate weights are kept, if anywhere.
    pub weights_dir: Option<PathBuf>,
}

pub struct BenchContext {
    pub suite: BenchSuiteConfig,
    pub baseline: BenchReport,
    pub ldct_psnr: f64,
    pub weights: CompositeWeights,
}

impl BenchContext {
    /// Runs the FBP (identity) baseline and the LDCT PSNR floor once.
    pub fn new(suite: BenchSuiteConfig, tuning_pairs: &[(Image, Image)], weights: CompositeWeights) -> Result<Self> {
        let baseline = run_bench_suite(&Denoiser::Identity, &suite)?;
        let ldct_psnr = objective_global(tuning_pairs)?.psnr;
        Ok(Self { suite, baseline, ldct_psnr, weights })
    }
}

/// Trains CNN3 for `cfg`, with `epochs` overriding the schedule length.
pub fn train_model(ctx: &TuneContext, cfg: &TuneConfig, epochs: usize) -> Result<TrainedModel> {
    let patches = make_patch_set(&ctx.train_pairs, &cfg.preprocess, ctx.patch_seed)?;
    let train = TrainConfig { epochs, ..cfg.train.clone() };
    let result = cnn3_train(&patches, &cfg.effective_loss(), &train)?;
    Ok(TrainedModel { weights: result.weights, normalization: patches.normalization })
}

/// Trains `cfg` on the short schedule and scores it under the context's
/// paradigm.
pub fn evaluate_candidate(ctx: &TuneContext, cfg: &TuneConfig, id: CandidateId) -> Result<Evaluation> {
    let model = train_model(ctx, cfg, ctx.short_epochs)?;
    if let Some(dir) = &ctx.weights_dir {
        let record = serde_json::to_value(cfg)?;
        write_weights(dir.join(format!("stage{}_cand{}.w", id.stage + 1, id.index + 1)), &model, Some(record))?;
    }
    let denoiser = Denoiser::Cnn3(model);
    let outputs: Vec<(Image, Image)> = ctx
        .tuning_pairs
        .iter()
        .map(|(ld, nd)| Ok((denoiser.apply_one("", ld)?, nd.clone())))
        .collect::<Result<_>>()?;
    let global = objective_global(&outputs)?;
    match ctx.paradigm {
        Paradigm::Global => Ok(Evaluation {
            score: Some(global.score()),
            psnr: Some(global.psnr),
            ssim: Some(global.ssim),
            ..Default::default()
        }),
        Paradigm::Bench => {
            let bench = ctx
                .bench
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("bench paradigm needs a bench context".into()))?;
            let report = run_bench_suite(&denoiser, &bench.suite)?;
            let scored = objective_bench(report, &bench.baseline, global, bench.ldct_psnr, &bench.weights)?;
            let composite = scored.composite_score.unwrap_or(0.0);
            Ok(Evaluation {
                score: Some(Score { primary: composite, secondary: global.psnr, tie: 0.0 }),
                psnr: Some(global.psnr),
                ssim: Some(global.ssim),
                composite: Some(composite),
                subscores: scored.subscores,
            })
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV of one stage: candidate, status, psnr, ssim, composite, subscores.
pub fn stage_table_csv(table: &StageTable) -> String {
    let mut s = String::from("candidate,status,psnr,ssim,composite,resolution,texture,hu,winner\n");
    for (i, r) in table.rows.iter().enumerate() {
        let e = &r.evaluation;
        let status = match &r.error {
            None => "ok".to_string(),
            Some(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            status,
            opt(e.psnr),
            opt(e.ssim),
            opt(e.composite),
            opt(e.subscores.map(|x| x.resolution)),
            opt(e.subscores.map(|x| x.texture)),
            opt(e.subscores.map(|x| x.hu)),
            i == table.winner
        );
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Stage directory name, e.g. `stage1_patch_size`.
pub fn stage_dir_name(index: usize, name: &str) -> String {
    let slug: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    format!("stage{}_{slug}", index + 1)
}

/// Writes `stages.json`, one `table.csv` per stage directory and
/// `winner.json`.
pub fn write_tune_outputs(dir: impl AsRef<Path>, stages: &[ExperimentStage], result: &TuneResult) -> Result<()> {
    let dir = dir.as_ref();
    write_file(&dir.join("stages.json"), &serde_json::to_string_pretty(stages)?)?;
    for (i, t) in result.stages.iter().enumerate() {
        write_file(&dir.join(stage_dir_name(i, &t.name)).join("table.csv"), &stage_table_csv(t))?;
    }
    write_file(&dir.join("winner.json"), &serde_json::to_string_pretty(&result.winner)?)?;
    write_file(&dir.join("tune_result.json"), &serde_json::to_string_pretty(result)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn argmax_of_single_stage() {
        let stage = ExperimentStage::new("lr", [1e-1, 1e-2, 1e-3].map(ConfigDelta::LearningRate).to_vec());
        let scores = [0.3, 0.9, 0.5];
        let r = greedy_tune(&TuneConfig::default(), &[stage], |cfg, _| {
            let i = [1e-1, 1e-2, 1e-3].iter().position(|&v| v == cfg.train.learning_rate).unwrap();
            Ok(Evaluation::scored(Score::new(scores[i])))
        })
        .unwrap();
        assert_eq!(r.stages[0].winner, 1);
        assert_eq!(r.winner.train.learning_rate, 1e-2);
    }

    #[test]
    fn greedy_counts_evaluations_and_forwards_winners() {
        let stages = vec![
            ExperimentStage::new("patch", [32, 55, 64].map(ConfigDelta::PatchSize).to_vec()),
            ExperimentStage::new("lr", [1e-1, 1e-2, 1e-3].map(ConfigDelta::LearningRate).to_vec()),
        ];
        let calls = AtomicUsize::new(0);
        let r = greedy_tune(&TuneConfig::default(), &stages, |cfg, id| {
            calls.fetch_add(1, Ordering::SeqCst);
            if id.stage == 1 {
                // stage 2 sees stage 1's winner
                assert_eq!(cfg.preprocess.patch_size, 55);
            }
            let v = -((cfg.preprocess.patch_size as f64 - 55.0).abs()) - (cfg.train.learning_rate.log10() + 3.0).abs();
            Ok(Evaluation::scored(Score::new(v)))
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 6);
        assert_eq!(r.evaluations, 6);
        assert_eq!((r.winner.preprocess.patch_size, r.winner.train.learning_rate), (55, 1e-3));
    }

    #[test]
    fn failures_are_recorded_and_excluded() {
        let stage = ExperimentStage::new("mb", [64, 128, 256].map(ConfigDelta::Minibatch).to_vec());
        let r = greedy_tune(&TuneConfig::default(), &[stage.clone()], |cfg, _| {
            if cfg.train.minibatch == 128 {
                Err(Error::Divergence { epoch: 2, loss: f64::NAN })
            } else {
                Ok(Evaluation::scored(Score::new(if cfg.train.minibatch == 64 { 1.0 } else { 2.0 })))
            }
        })
        .unwrap();
        assert!(r.stages[0].rows[1].error.as_ref().unwrap().contains("epoch 2"));
        assert_eq!(r.stages[0].winner, 2);
        assert!(greedy_tune(&TuneConfig::default(), &[stage], |_, _| Err(Error::Numerical("x".into()))).is_err());
    }

    #[test]
    fn stage_validation() {
        assert!(validate_stages(&[]).is_err());
        assert!(validate_stages(&[ExperimentStage::new("one", vec![ConfigDelta::Epochs(1)])]).is_err());
        let a = ExperimentStage::new("a", [1e-1, 1e-2].map(ConfigDelta::LearningRate).to_vec());
        assert!(validate_stages(&[a.clone(), a]).is_err());
        validate_stages(&default_stages()).unwrap();
        assert_eq!(default_stages().iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), [
            "patch size",
            "learning rate",
            "minibatch",
            "loss"
        ]);
    }

    #[test]
    fn global_ties_break_on_ssim_and_infinity_wins() {
        let s = |p: f64, q: f64| Some(GlobalScores { psnr: p, ssim: q }.score());
        assert_eq!(select_winner(&[s(30.0, 0.80), s(30.005, 0.70), s(29.0, 0.99)]), Some(0));
        assert_eq!(select_winner(&[s(30.0, 0.8), s(30.0, 0.9)]), Some(1));
        assert_eq!(select_winner(&[s(40.0, 0.99), s(f64::INFINITY, 0.1)]), Some(1));
        assert_eq!(select_winner(&[None, None]), None);
    }

    #[test]
    fn winner_invariant_under_monotone_transform() {
        let raw = [0.2, 1.7, -0.4, 1.69, 0.0];
        let a: Vec<_> = raw.iter().map(|&v| Some(Score::new(v))).collect();
        let b: Vec<_> = raw.iter().map(|&v| Some(Score::new((3.0 * v).exp() + 7.0))).collect();
        assert_eq!(select_winner(&a), select_winner(&b));
    }

    #[test]
    fn deltas_serialize_by_field() {
        let d = ConfigDelta::Loss(LossKind::MsSsimL1);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"field":"loss","value":"msssiml1"}"#);
        assert_eq!(serde_json::from_str::<ConfigDelta>(&json).unwrap(), d);
        assert_eq!(ConfigDelta::LearningRate(1e-3).label(), "learning_rate=1e-3");
        let c = ConfigDelta::Normalization(NormMode::NormF).apply(&TuneConfig::default());
        assert_eq!(c.effective_loss().data_range, Normalization::norm_f().model_range());
        let p = ConfigDelta::PatchSize(32).apply(&TuneConfig::default());
        assert_eq!((p.preprocess.patch_size, p.preprocess.patch_stride), (32, 32));
    }
}

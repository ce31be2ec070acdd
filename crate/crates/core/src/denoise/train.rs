//! Minibatch training of CNN3.
//!
//! Gradients are computed over fixed-size sample chunks (in parallel) and
//! summed in chunk order, so results do not depend on the worker count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cnn3::{backward, forward_trace, Cnn3Weights};
use super::loss::{loss_and_grad, LossConfig, LossKind};
use super::preprocess::PatchSet;
use crate::error::{Error, Result};

pub const LEARNING_RATES: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
pub const MINIBATCHES: [usize; 4] = [64, 128, 256, 512];
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd_momentum() -> Self {
        Optimizer::SgdMomentum { momentum: 0.9 }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::adam()),
            "sgd" | "sgd_momentum" => Ok(Self::sgd_momentum()),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer '{name}' (expected adam or sgd)"))),
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: Optimizer,
    /// Stops after this many optimizer steps in total, if set.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, minibatch: 128, epochs: 20, seed: 0, optimizer: Optimizer::default(), max_steps: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.minibatch == 0 {
            return Err(Error::InvalidArgument("minibatch must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub weights: Cnn3Weights<f32>,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of every minibatch, evaluated before its update.
    pub step_losses: Vec<f64>,
}

/// Loss and summed gradient over the samples at `idx`.
fn batch_gradient(
    weights: &Cnn3Weights<f32>,
    patches: &PatchSet,
    idx: &[usize],
    loss: &LossConfig,
) -> Result<(f64, Cnn3Weights<f32>)> {
    let size = patches.size;
    let m = idx.len();
    // Per-sample terms only; weight decay is added once per batch below.
    let data_cfg = match loss.kind {
        LossKind::MseWd => LossConfig { kind: LossKind::Mse, ..*loss },
        _ => *loss,
    };
    let partials: Vec<Result<(f64, Cnn3Weights<f32>)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = Cnn3Weights::<f32>::zeros();
            let mut value = 0.0;
            for &i in chunk {
                let pair = &patches.pairs[i];
                let trace = forward_trace(weights, &pair.input, size, size)?;
                let pred: Vec<f64> = trace.output.iter().map(|&v| v as f64).collect();
                let target: Vec<f64> = pair.target.iter().map(|&v| v as f64).collect();
                let lg = loss_and_grad::<f32>(&data_cfg, &pred, &target, size, size, None)?;
                value += lg.value / m as f64;
                let d_out: Vec<f32> = lg.grad_pred.iter().map(|&g| (g / m as f64) as f32).collect();
                backward(weights, &trace, &d_out, &mut grad, false);
            }
            Ok((value, grad))
        })
        .collect();
    let mut value = 0.0;
    let mut grad = Cnn3Weights::<f32>::zeros();
    for part in partials {
        let (v, g) = part?;
        value += v;
        grad.axpy(1.0, &g);
    }
    if loss.kind == LossKind::MseWd {
        value += 0.5 * loss.beta * weights.sq_norm();
        grad.axpy(loss.beta as f32, weights);
    }
    Ok((value, grad))
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, opt: &Optimizer, lr: f64, params: &mut [f32], grad: &[f32]) {
        self.t += 1;
        match *opt {
            Optimizer::SgdMomentum { momentum } => {
                for ((p, &g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = momentum * *m + g as f64;
                    *p -= (lr * *m) as f32;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    let g = g as f64;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= (lr * (*m / c1) / ((*v / c2).sqrt() + eps)) as f32;
                }
            }
        }
    }
}

/// Trains CNN3 from a He-initialized start.
pub fn cnn3_train(patches: &PatchSet, loss: &LossConfig, cfg: &TrainConfig) -> Result<TrainResult> {
    cnn3_train_from(Cnn3Weights::he_init(cfg.seed), patches, loss, cfg)
}

/// Trains CNN3 starting from `init`.
pub fn cnn3_train_from(
    init: Cnn3Weights<f32>,
    patches: &PatchSet,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    loss.validate()?;
    if patches.is_empty() {
        return Err(Error::InvalidArgument("training needs a non-empty patch set".into()));
    }
    let mut weights = init;
    let mut params = weights.to_flat();
    let mut state = OptimizerState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for batch in order.chunks(cfg.minibatch) {
            if cfg.max_steps.is_some_and(|s| step_losses.len() >= s) {
                if count > 0 {
                    epoch_losses.push(sum / count as f64);
                }
                break 'epochs;
            }
            let (value, grad) = batch_gradient(&weights, patches, batch, loss)?;
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            state.step(&cfg.optimizer, cfg.learning_rate, &mut params, &grad.to_flat());
            weights = Cnn3Weights::from_flat(&params)?;
            if !weights.is_finite() {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            step_losses.push(value);
            sum += value;
            count += 1;
        }
        epoch_losses.push(sum / count as f64);
    }
    Ok(TrainResult { weights, epoch_losses, step_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::preprocess::{Normalization, PatchPair};
    use rand::Rng;

    fn identity_task(n: usize, size: usize, seed: u64) -> PatchSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = (0..n)
            .map(|_| {
                let v: Vec<f32> = (0..size * size).map(|_| rng.random::<f32>()).collect();
                PatchPair { input: v.clone(), target: v }
            })
            .collect();
        PatchSet { size, normalization: Normalization::unity(), pairs }
    }

    #[test]
    fn identity_task_loss_drops_tenfold() {
        let patches = identity_task(16, 12, 1);
        let cfg = TrainConfig { learning_rate: 1e-3, minibatch: 4, epochs: 50, seed: 3, ..TrainConfig::default() };
        let r = cnn3_train(&patches, &LossConfig::new(LossKind::Mse), &cfg).unwrap();
        assert_eq!(r.step_losses.len(), 200);
        let (first, last) = (r.step_losses[0], *r.epoch_losses.last().unwrap());
        assert!(last < 0.1 * first, "initial {first} final {last}");
    }

    #[test]
    fn config_validation() {
        let patches = identity_task(2, 5, 2);
        let loss = LossConfig::default();
        for cfg in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { minibatch: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ] {
            assert!(cnn3_train(&patches, &loss, &cfg).is_err());
        }
        let empty = PatchSet { pairs: vec![], ..patches };
        assert!(cnn3_train(&empty, &loss, &TrainConfig::default()).is_err());
    }

    #[test]
    fn training_is_deterministic_and_thread_independent() {
        let patches = identity_task(10, 9, 4);
        let cfg = TrainConfig { minibatch: 3, epochs: 2, seed: 9, ..TrainConfig::default() };
        let loss = LossConfig::new(LossKind::MsSsimL1);
        let a = cnn3_train(&patches, &loss, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| cnn3_train(&patches, &loss, &cfg).unwrap());
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.step_losses, b.step_losses);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let mut patches = identity_task(4, 6, 5);
        for p in &mut patches.pairs {
            p.target.iter_mut().for_each(|v| *v *= 1e30);
        }
        let cfg = TrainConfig {
            learning_rate: 1e-1,
            minibatch: 2,
            epochs: 3,
            seed: 1,
            optimizer: Optimizer::sgd_momentum(),
            ..TrainConfig::default()
        };
        match cnn3_train(&patches, &LossConfig::default(), &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn max_steps_and_sgd() {
        let patches = identity_task(8, 6, 6);
        let cfg = TrainConfig {
            minibatch: 2,
            epochs: 10,
            max_steps: Some(5),
            optimizer: Optimizer::sgd_momentum(),
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let r = cnn3_train(&patches, &LossConfig::default(), &cfg).unwrap();
        assert_eq!(r.step_losses.len(), 5);
        assert_eq!(r.epoch_losses.len(), 2);
        assert!(Optimizer::parse("rmsprop").is_err());
    }
}

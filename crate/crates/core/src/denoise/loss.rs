//! Training losses with analytic gradients.
//!
//! Every data term is averaged over the batch and over pixels, so values are
//! comparable across patch sizes. Priors use the same per-pixel averaging.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cnn3::{Cnn3Weights, Scalar};
use crate::error::{Error, Result};
use crate::metrics::{max_scales, ms_ssim_impl, Plane, SsimConfig};

pub const DEFAULT_LAMBDA: f64 = 1e-7;
pub const DEFAULT_BETA: f64 = 1e-4;
pub const DEFAULT_ALPHA: f64 = 0.84;
pub const TV_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean squared error.
    Mse,
    /// MSE plus an L1 prior on the prediction.
    MseL1,
    /// Mean absolute error.
    Mae,
    /// MSE plus a smoothed total-variation prior on the prediction.
    MseTv,
    /// MSE plus weight decay.
    MseWd,
    /// α(1 − MS-SSIM) + (1 − α)·MAE.
    MsSsimL1,
}

impl LossKind {
    pub const ALL: [LossKind; 6] =
        [LossKind::Mse, LossKind::MseL1, LossKind::Mae, LossKind::MseTv, LossKind::MseWd, LossKind::MsSsimL1];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::MseL1 => "msel1",
            LossKind::Mae => "mae",
            LossKind::MseTv => "msetv",
            LossKind::MseWd => "msewd",
            LossKind::MsSsimL1 => "msssiml1",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown loss '{s}' (expected one of mse, msel1, mae, msetv, msewd, msssiml1)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Model-domain data range for the MS-SSIM constants.
    pub data_range: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, lambda: DEFAULT_LAMBDA, beta: DEFAULT_BETA, alpha: DEFAULT_ALPHA, data_range: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda and beta must be non-negative (lambda {}, beta {})",
                self.lambda, self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.data_range > 0.0) {
            return Err(Error::InvalidArgument("loss data range must be positive".into()));
        }
        Ok(())
    }

    /// SSIM settings used by the MS-SSIM term on `w`×`h` patches: the window
    /// shrinks to the largest odd size that fits.
    pub fn ssim_config(&self, w: usize, h: usize) -> Result<(SsimConfig, usize)> {
        let base = SsimConfig::default().with_data_range(self.data_range);
        let mut window = base.window_size.min(w).min(h);
        if window % 2 == 0 {
            window -= 1;
        }
        if window < 3 {
            return Err(Error::InvalidArgument(format!("{w}x{h} patch is too small for ms-ssim")));
        }
        let cfg = SsimConfig { window_size: window, ..base };
        Ok((cfg, max_scales(w, h, window)))
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::new(LossKind::Mse)
    }
}

#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub value: f64,
    /// d value / d pred, same layout as `pred`.
    pub grad_pred: Vec<f64>,
    /// Weight-decay contribution; present only for [`LossKind::MseWd`].
    pub grad_weights: Option<Cnn3Weights<T>>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sum over pixels of sqrt(gx² + gy² + ε) with forward differences (zero past
/// the last row/column); adds `scale` times its gradient into `grad`.
fn tv_sum(p: &[f64], w: usize, h: usize, scale: f64, grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let gx = if x + 1 < w { p[i + 1] - p[i] } else { 0.0 };
            let gy = if y + 1 < h { p[i + w] - p[i] } else { 0.0 };
            let s = (gx * gx + gy * gy + TV_EPSILON).sqrt();
            total += s;
            if x + 1 < w {
                grad[i + 1] += scale * gx / s;
                grad[i] -= scale * gx / s;
            }
            if y + 1 < h {
                grad[i + w] += scale * gy / s;
                grad[i] -= scale * gy / s;
            }
        }
    }
    total
}

/// Loss value and gradients for a batch of `w`×`h` predictions stored back
/// to back. `weights` is required for weight decay and ignored otherwise.
pub fn loss_and_grad<T: Scalar>(
    cfg: &LossConfig,
    pred: &[f64],
    target: &[f64],
    w: usize,
    h: usize,
    weights: Option<&Cnn3Weights<T>>,
) -> Result<LossGrad<T>> {
    cfg.validate()?;
    let n_px = w * h;
    if n_px == 0 || pred.is_empty() || pred.len() % n_px != 0 {
        return Err(Error::Dimension(format!("batch of {} values is not a multiple of {w}x{h}", pred.len())));
    }
    if pred.len() != target.len() {
        return Err(Error::DataLength { expected: pred.len(), found: target.len() });
    }
    let m = pred.len() / n_px;
    let norm = 1.0 / (m * n_px) as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut value = 0.0;

    let mse = |value: &mut f64, grad: &mut [f64]| {
        for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
            let d = p - t;
            *value += d * d * norm;
            *g += 2.0 * d * norm;
        }
    };
    let mae = |value: &mut f64, grad: &mut [f64], scale: f64| {
        for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
            let d = p - t;
            *value += scale * d.abs() * norm;
            *g += scale * sign(d) * norm;
        }
    };

    let mut grad_weights = None;
    match cfg.kind {
        LossKind::Mse => mse(&mut value, &mut grad),
        LossKind::Mae => mae(&mut value, &mut grad, 1.0),
        LossKind::MseL1 => {
            mse(&mut value, &mut grad);
            let c = 0.5 * cfg.lambda * norm;
            for (g, &p) in grad.iter_mut().zip(pred) {
                value += c * p.abs();
                *g += c * sign(p);
            }
        }
        LossKind::MseTv => {
            mse(&mut value, &mut grad);
            let c = 0.5 * cfg.lambda * norm;
            for (p, g) in pred.chunks(n_px).zip(grad.chunks_mut(n_px)) {
                value += c * tv_sum(p, w, h, c, g);
            }
        }
        LossKind::MseWd => {
            mse(&mut value, &mut grad);
            let weights = weights.ok_or_else(|| {
                Error::InvalidArgument("weight-decay loss needs the network weights".into())
            })?;
            value += 0.5 * cfg.beta * weights.sq_norm();
            let mut gw = weights.clone();
            for v in gw.params_mut() {
                *v = T::from_f64(cfg.beta * v.to_f64());
            }
            grad_weights = Some(gw);
        }
        LossKind::MsSsimL1 => {
            mae(&mut value, &mut grad, 1.0 - cfg.alpha);
            let (scfg, scales) = cfg.ssim_config(w, h)?;
            let per_sample = cfg.alpha / m as f64;
            for ((p, t), g) in pred.chunks(n_px).zip(target.chunks(n_px)).zip(grad.chunks_mut(n_px)) {
                let (v, dg) =
                    ms_ssim_impl(&Plane::new(w, h, p.to_vec()), &Plane::new(w, h, t.to_vec()), &scfg, scales, true)?;
                value += per_sample * (1.0 - v);
                for (gi, d) in g.iter_mut().zip(&dg.expect("gradient requested").v) {
                    *gi -= per_sample * d;
                }
            }
        }
    }
    Ok(LossGrad { value, grad_pred: grad, grad_weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(m: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m * n).map(|_| rng.random::<f64>()).collect()
    }

    fn value(cfg: &LossConfig, p: &[f64], t: &[f64], w: usize, h: usize) -> f64 {
        loss_and_grad::<f64>(cfg, p, t, w, h, Some(&Cnn3Weights::zeros())).unwrap().value
    }

    #[test]
    fn names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("huber".parse::<LossKind>().is_err());
    }

    #[test]
    fn perfect_prediction_mse_is_zero() {
        let p = batch(3, 64, 1);
        let r = loss_and_grad::<f64>(&LossConfig::new(LossKind::Mse), &p, &p, 8, 8, None).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.grad_pred.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn weight_decay_only_term_at_perfect_prediction() {
        let weights = Cnn3Weights::<f64>::he_init(2);
        let cfg = LossConfig { beta: 0.01, ..LossConfig::new(LossKind::MseWd) };
        let p = batch(2, 64, 3);
        let r = loss_and_grad(&cfg, &p, &p, 8, 8, Some(&weights)).unwrap();
        assert!((r.value - 0.005 * weights.sq_norm()).abs() < 1e-12);
        let gw = r.grad_weights.unwrap();
        for (g, t) in gw.params().zip(weights.params()) {
            assert!((g - 0.01 * t).abs() < 1e-15);
        }
        assert!(loss_and_grad::<f64>(&cfg, &p, &p, 8, 8, None).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let p = batch(1, 64, 4);
        for cfg in [
            LossConfig { lambda: -1.0, ..LossConfig::new(LossKind::MseL1) },
            LossConfig { beta: -1.0, ..LossConfig::new(LossKind::MseWd) },
            LossConfig { alpha: 1.5, ..LossConfig::new(LossKind::MsSsimL1) },
        ] {
            assert!(loss_and_grad::<f64>(&cfg, &p, &p, 8, 8, None).is_err());
        }
        assert!(loss_and_grad::<f64>(&LossConfig::default(), &p, &p[..60], 8, 8, None).is_err());
    }

    #[test]
    fn mae_sign_of_zero_is_zero() {
        let p = vec![0.5; 64];
        let r = loss_and_grad::<f64>(&LossConfig::new(LossKind::Mae), &p, &p, 8, 8, None).unwrap();
        assert!(r.grad_pred.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn value_invariant_under_batch_permutation() {
        let (p, t) = (batch(4, 64, 5), batch(4, 64, 6));
        let perm = [2usize, 0, 3, 1];
        let shuffle = |v: &[f64]| perm.iter().flat_map(|&i| v[i * 64..(i + 1) * 64].to_vec()).collect::<Vec<_>>();
        for kind in LossKind::ALL {
            let cfg = LossConfig { lambda: 0.3, ..LossConfig::new(kind) };
            let a = value(&cfg, &p, &t, 8, 8);
            let b = value(&cfg, &shuffle(&p), &shuffle(&t), 8, 8);
            assert!((a - b).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let (p, t) = (batch(3, 64, 7), batch(3, 64, 8));
        for kind in LossKind::ALL {
            let cfg = LossConfig { lambda: 0.3, ..LossConfig::new(kind) };
            let full = loss_and_grad::<f64>(&cfg, &p, &t, 8, 8, Some(&Cnn3Weights::zeros())).unwrap();
            for s in 0..3 {
                let r = s * 64..(s + 1) * 64;
                let one = loss_and_grad::<f64>(&cfg, &p[r.clone()], &t[r.clone()], 8, 8, Some(&Cnn3Weights::zeros()))
                    .unwrap();
                for (a, b) in full.grad_pred[r].iter().zip(&one.grad_pred) {
                    assert!((a - b / 3.0).abs() < 1e-12, "{kind}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (w, h, m) = (8, 8, 3);
        let (p, t) = (batch(m, w * h, 9), batch(m, w * h, 10));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in LossKind::ALL {
            // Priors weighted heavily enough that their gradients matter.
            let cfg = LossConfig { lambda: 0.5, beta: 0.1, ..LossConfig::new(kind) };
            let r = loss_and_grad::<f64>(&cfg, &p, &t, w, h, Some(&Cnn3Weights::zeros())).unwrap();
            for _ in 0..20 {
                let i = rng.random_range(0..p.len());
                let step = 1e-4;
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp[i] += step;
                pm[i] -= step;
                let fd = (value(&cfg, &pp, &t, w, h) - value(&cfg, &pm, &t, w, h)) / (2.0 * step);
                let err = (fd - r.grad_pred[i]).abs() / fd.abs().max(r.grad_pred[i].abs()).max(1e-6);
                assert!(err < 1e-3, "{kind} pixel {i}: fd {fd} analytic {}", r.grad_pred[i]);
            }
        }
    }

    #[test]
    fn ms_ssim_window_shrinks_for_small_patches() {
        let cfg = LossConfig::new(LossKind::MsSsimL1);
        assert_eq!(cfg.ssim_config(8, 8).unwrap().0.window_size, 7);
        assert_eq!(cfg.ssim_config(55, 55).unwrap(), (SsimConfig { data_range: 1.0, ..SsimConfig::default() }, 3));
        assert!(cfg.ssim_config(2, 2).is_err());
    }
}

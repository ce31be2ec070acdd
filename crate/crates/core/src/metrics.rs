//! Global fidelity metrics: RMSE, PSNR, SSIM and MS-SSIM.
//!
//! SSIM statistics use a normalized Gaussian window evaluated at "valid"
//! positions only (window fully inside the image). The same machinery
//! provides analytic gradients of SSIM / MS-SSIM with respect to the first
//! image, used by the MS-SSIM + L1 training loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Default HU data range for PSNR/SSIM comparisons.
pub const DEFAULT_DATA_RANGE_HU: f64 = 2000.0;

/// Per-scale exponents, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: DEFAULT_DATA_RANGE_HU,
        }
    }
}

impl SsimConfig {
    pub fn with_data_range(self, data_range: f64) -> Self {
        Self { data_range, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "ssim window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.data_range > 0.0) {
            return Err(Error::InvalidArgument(
                "ssim sigma, k1, k2 and data range must be positive".into(),
            ));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as isize;
        let g: Vec<f64> = (-r..=r)
            .map(|i| (-(i * i) as f64 / (2.0 * self.window_sigma * self.window_sigma)).exp())
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok((sum / a.data().len() as f64).sqrt())
}

/// PSNR in dB; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    let e = rmse(a, b)?;
    Ok(psnr_from_rmse(e, data_range))
}

pub fn psnr_from_rmse(rmse: f64, data_range: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (data_range / rmse).log10()
    }
}

/// Formats a PSNR value for reports; infinity is written as `"inf"`.
pub fn psnr_json(value: f64) -> serde_json::Value {
    if value.is_infinite() && value > 0.0 {
        serde_json::Value::String("inf".into())
    } else {
        serde_json::json!(value)
    }
}

pub fn ssim(a: &Image, b: &Image, cfg: &SsimConfig) -> Result<f64> {
    a.check_same_shape(b)?;
    let plane = |img: &Image| Plane::from_image(img);
    ssim_plane(&plane(a), &plane(b), cfg)
}

pub fn ms_ssim(a: &Image, b: &Image, cfg: &SsimConfig, n_scales: usize) -> Result<f64> {
    a.check_same_shape(b)?;
    let (v, _) = ms_ssim_impl(&Plane::from_image(a), &Plane::from_image(b), cfg, n_scales, false)?;
    Ok(v)
}

/// Largest number of dyadic scales for which every level is at least one
/// window wide (capped at five).
pub fn max_scales(width: usize, height: usize, window: usize) -> usize {
    let (mut w, mut h, mut n) = (width, height, 0);
    while n < MS_SSIM_WEIGHTS.len() && w >= window && h >= window {
        n += 1;
        w /= 2;
        h /= 2;
    }
    n
}

/// Exponents for `n` scales: the standard five, truncated and renormalized to
/// sum to one when fewer scales are used.
pub fn scale_exponents(n: usize) -> Vec<f64> {
    if n >= MS_SSIM_WEIGHTS.len() {
        return MS_SSIM_WEIGHTS.to_vec();
    }
    let w = &MS_SSIM_WEIGHTS[..n];
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

// ---------------------------------------------------------------------------
// f64 planes and the windowed statistics behind SSIM.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub w: usize,
    pub h: usize,
    pub v: Vec<f64>,
}

impl Plane {
    pub fn new(w: usize, h: usize, v: Vec<f64>) -> Self {
        debug_assert_eq!(v.len(), w * h);
        Self { w, h, v }
    }

    pub fn from_image(img: &Image) -> Self {
        Self::new(
            img.width(),
            img.height(),
            img.data().iter().map(|&x| x as f64).collect(),
        )
    }

    /// 2×2 mean pooling; an odd trailing row/column is dropped.
    pub fn pool(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                v.push(0.25 * (self.v[i] + self.v[i + 1] + self.v[i + self.w] + self.v[i + self.w + 1]));
            }
        }
        Plane::new(w, h, v)
    }

    /// Adjoint of [`Plane::pool`] onto a `w`×`h` parent.
    pub fn pool_adjoint(&self, w: usize, h: usize) -> Plane {
        let mut v = vec![0.0; w * h];
        for y in 0..self.h {
            for x in 0..self.w {
                let g = 0.25 * self.v[y * self.w + x];
                let i = 2 * y * w + 2 * x;
                v[i] += g;
                v[i + 1] += g;
                v[i + w] += g;
                v[i + w + 1] += g;
            }
        }
        Plane::new(w, h, v)
    }
}

/// Separable valid-mode filtering.
fn filter_valid(p: &Plane, g: &[f64]) -> Plane {
    let k = g.len();
    let ow = p.w + 1 - k;
    let oh = p.h + 1 - k;
    let mut tmp = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.v[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (t, &gk) in g.iter().enumerate() {
            let src = &tmp[(y + t) * ow..(y + t + 1) * ow];
            for (o, &s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += gk * s;
            }
        }
    }
    Plane::new(ow, oh, out)
}

/// Adjoint of [`filter_valid`]: scatters a valid-size map back to `w`×`h`.
fn filter_valid_adjoint(q: &Plane, g: &[f64], w: usize, h: usize) -> Plane {
    let k = g.len();
    let mut tmp = vec![0.0; q.w * h];
    for y in 0..q.h {
        for (t, &gk) in g.iter().enumerate() {
            let dst = &mut tmp[(y + t) * q.w..(y + t + 1) * q.w];
            for (d, &s) in dst.iter_mut().zip(&q.v[y * q.w..(y + 1) * q.w]) {
                *d += gk * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..q.w {
            let s = tmp[y * q.w + x];
            for (t, &gk) in g.iter().enumerate().take(k) {
                out[y * w + x + t] += gk * s;
            }
        }
    }
    Plane::new(w, h, out)
}

/// Windowed SSIM statistics of one image pair at one scale.
struct LocalStats {
    mx: Plane,
    my: Plane,
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sxy: Vec<f64>,
}

fn local_stats(x: &Plane, y: &Plane, g: &[f64]) -> LocalStats {
    let prod = |a: &Plane, b: &Plane| Plane::new(a.w, a.h, a.v.iter().zip(&b.v).map(|(p, q)| p * q).collect());
    let mx = filter_valid(x, g);
    let my = filter_valid(y, g);
    let exx = filter_valid(&prod(x, x), g);
    let eyy = filter_valid(&prod(y, y), g);
    let exy = filter_valid(&prod(x, y), g);
    let n = mx.v.len();
    let mut sxx = Vec::with_capacity(n);
    let mut syy = Vec::with_capacity(n);
    let mut sxy = Vec::with_capacity(n);
    for i in 0..n {
        sxx.push(exx.v[i] - mx.v[i] * mx.v[i]);
        syy.push(eyy.v[i] - my.v[i] * my.v[i]);
        sxy.push(exy.v[i] - mx.v[i] * my.v[i]);
    }
    LocalStats { mx, my, sxx, syy, sxy }
}

/// Which per-scale quantity is averaged.
#[derive(Clone, Copy, PartialEq)]
enum ScaleTerm {
    /// contrast · structure only
    Cs,
    /// luminance · contrast · structure
    Full,
}

/// Mean of the chosen SSIM term over valid positions, plus its gradient with
/// respect to `x` when requested.
fn scale_term(
    x: &Plane,
    y: &Plane,
    cfg: &SsimConfig,
    term: ScaleTerm,
    want_grad: bool,
) -> (f64, Option<Plane>) {
    let g = cfg.kernel();
    let st = local_stats(x, y, &g);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = st.mx.v.len();
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let (mut a, mut b, mut c) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (mx, my) = (st.mx.v[i], st.my.v[i]);
        let num_cs = 2.0 * st.sxy[i] + c2;
        let den_cs = st.sxx[i] + st.syy[i] + c2;
        let cs = num_cs / den_cs;
        let (l, dl_dmx) = match term {
            ScaleTerm::Cs => (1.0, 0.0),
            ScaleTerm::Full => {
                let num_l = 2.0 * mx * my + c1;
                let den_l = mx * mx + my * my + c1;
                (num_l / den_l, 2.0 * my / den_l - num_l * 2.0 * mx / (den_l * den_l))
            }
        };
        total += l * cs;
        if want_grad {
            let df_dmx = cs * dl_dmx;
            let df_dsxx = -l * num_cs / (den_cs * den_cs);
            let df_dsxy = l * 2.0 / den_cs;
            a[i] = inv_n * (df_dmx - 2.0 * mx * df_dsxx - my * df_dsxy);
            b[i] = inv_n * df_dsxx;
            c[i] = inv_n * df_dsxy;
        }
    }
    let value = total * inv_n;
    if !want_grad {
        return (value, None);
    }
    let (vw, vh) = (st.mx.w, st.mx.h);
    let ga = filter_valid_adjoint(&Plane::new(vw, vh, a), &g, x.w, x.h);
    let gb = filter_valid_adjoint(&Plane::new(vw, vh, b), &g, x.w, x.h);
    let gc = filter_valid_adjoint(&Plane::new(vw, vh, c), &g, x.w, x.h);
    let grad = (0..x.v.len())
        .map(|i| ga.v[i] + 2.0 * x.v[i] * gb.v[i] + y.v[i] * gc.v[i])
        .collect();
    (value, Some(Plane::new(x.w, x.h, grad)))
}

pub(crate) fn ssim_plane(x: &Plane, y: &Plane, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    if x.w < cfg.window_size || x.h < cfg.window_size {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is smaller than the {}-pixel ssim window",
            x.w, x.h, cfg.window_size
        )));
    }
    Ok(scale_term(x, y, cfg, ScaleTerm::Full, false).0)
}

/// MS-SSIM and, optionally, its gradient with respect to `x`.
pub(crate) fn ms_ssim_impl(
    x: &Plane,
    y: &Plane,
    cfg: &SsimConfig,
    n_scales: usize,
    want_grad: bool,
) -> Result<(f64, Option<Plane>)> {
    cfg.validate()?;
    if n_scales == 0 {
        return Err(Error::InvalidArgument("ms-ssim needs at least one scale".into()));
    }
    let feasible = max_scales(x.w, x.h, cfg.window_size);
    if n_scales > feasible {
        return Err(Error::InvalidArgument(format!(
            "{}x{} image supports only {feasible} ms-ssim scales with window {}, {n_scales} requested",
            x.w, x.h, cfg.window_size
        )));
    }
    let exps = scale_exponents(n_scales);
    let mut xs = vec![x.clone()];
    let mut ys = vec![y.clone()];
    for _ in 1..n_scales {
        let nx = xs.last().unwrap().pool();
        let ny = ys.last().unwrap().pool();
        xs.push(nx);
        ys.push(ny);
    }
    let mut values = Vec::with_capacity(n_scales);
    let mut grads = Vec::with_capacity(n_scales);
    for s in 0..n_scales {
        let term = if s + 1 == n_scales { ScaleTerm::Full } else { ScaleTerm::Cs };
        let (v, g) = scale_term(&xs[s], &ys[s], cfg, term, want_grad);
        values.push(v);
        grads.push(g);
    }
    let product: f64 = values
        .iter()
        .zip(&exps)
        .map(|(&v, &e)| v.max(0.0).powf(e))
        .product();
    if !want_grad {
        return Ok((product, None));
    }
    // Accumulate from the coarsest level back to full resolution.
    let mut acc: Option<Plane> = None;
    for s in (0..n_scales).rev() {
        let mut level = match acc.take() {
            Some(coarse) => coarse.pool_adjoint(xs[s].w, xs[s].h),
            None => Plane::new(xs[s].w, xs[s].h, vec![0.0; xs[s].w * xs[s].h]),
        };
        if values[s] > 0.0 && product > 0.0 {
            let dv = exps[s] * product / values[s];
            if let Some(g) = &grads[s] {
                for (l, gv) in level.v.iter_mut().zip(&g.v) {
                    *l += dv * gv;
                }
            }
        }
        acc = Some(level);
    }
    Ok((product, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise_image(w: usize, h: usize, sigma: f64, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, 1.0, |_, _| (sigma * rng.sample::<f64, _>(StandardNormal)) as f32).unwrap()
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 1.0, |x, y| {
            (100.0 * ((x as f64) * 0.3).sin() + 50.0 * ((y as f64) * 0.17).cos() + (x * y % 7) as f64 * 10.0)
                as f32
        })
        .unwrap()
    }

    #[test]
    fn rmse_examples() {
        let a = Image::new(2, 1, 1.0, vec![0.0, 0.0]).unwrap();
        let b = Image::new(2, 1, 1.0, vec![3.0, 4.0]).unwrap();
        assert!((rmse(&a, &b).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let img = textured(16, 16);
        let shifted = img.map(|v| v + 7.0).unwrap();
        assert!((rmse(&img, &shifted).unwrap() - 7.0).abs() < 1e-4);
        let other = Image::filled(3, 1, 1.0, 0.0).unwrap();
        assert!(matches!(rmse(&a, &other), Err(Error::Dimension(_))));
    }

    #[test]
    fn psnr_examples() {
        let a = textured(8, 8);
        assert_eq!(psnr(&a, &a, 2000.0).unwrap(), f64::INFINITY);
        assert!((psnr_from_rmse(20.0, 2000.0) - 40.0).abs() < 1e-12);
        let gain = psnr_from_rmse(5.0, 2000.0) - psnr_from_rmse(10.0, 2000.0);
        assert!((gain - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((gain - 6.0206).abs() < 1e-4);
        assert_eq!(psnr_json(f64::INFINITY), serde_json::json!("inf"));
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = textured(32, 32);
        let cfg = SsimConfig::default();
        assert_eq!(ssim(&a, &a, &cfg).unwrap(), 1.0);
        let inv = a.map(|v| 500.0 - v).unwrap();
        assert!(ssim(&a, &inv, &cfg).unwrap() < 1.0);
        let small = Image::filled(8, 8, 1.0, 0.0).unwrap();
        assert!(ssim(&small, &small, &cfg).is_err());
        let bad = SsimConfig { window_size: 4, ..cfg };
        assert!(ssim(&a, &a, &bad).is_err());
    }

    #[test]
    fn ssim_of_independent_noise_is_near_zero() {
        let cfg = SsimConfig::default();
        for seed in 0..3 {
            let a = noise_image(256, 256, cfg.data_range / 4.0, 2 * seed);
            let b = noise_image(256, 256, cfg.data_range / 4.0, 2 * seed + 1);
            let v = ssim(&a, &b, &cfg).unwrap();
            assert!(v.abs() < 0.05, "seed {seed}: {v}");
        }
    }

    #[test]
    fn ssim_symmetry_and_offset_behaviour() {
        let a = textured(40, 40);
        let b = a.map(|v| v * 0.9 + 3.0).unwrap();
        let cfg = SsimConfig::default();
        let base = ssim(&a, &b, &cfg).unwrap();
        assert_eq!(base, ssim(&b, &a, &cfg).unwrap());
        // The contrast-structure term ignores a common offset; luminance does not.
        let (pa, pb) = (Plane::from_image(&a), Plane::from_image(&b));
        let shift = |p: &Plane| Plane::new(p.w, p.h, p.v.iter().map(|v| v + 64.0).collect());
        let cs = scale_term(&pa, &pb, &cfg, ScaleTerm::Cs, false).0;
        let cs_shifted = scale_term(&shift(&pa), &shift(&pb), &cfg, ScaleTerm::Cs, false).0;
        assert!((cs - cs_shifted).abs() < 1e-9, "{cs} vs {cs_shifted}");
        // Equal images stay at exactly one under any common offset.
        assert_eq!(ssim_plane(&shift(&pa), &shift(&pa), &cfg).unwrap(), 1.0);
    }

    #[test]
    fn ms_ssim_basics() {
        let a = textured(192, 192);
        let b = a.map(|v| v * 0.8 + 10.0).unwrap();
        let cfg = SsimConfig::default();
        assert_eq!(ms_ssim(&a, &a, &cfg, 5).unwrap(), 1.0);
        let ab = ms_ssim(&a, &b, &cfg, 5).unwrap();
        assert_eq!(ab, ms_ssim(&b, &a, &cfg, 5).unwrap());
        assert!((0.0..=1.0).contains(&ab));
        // one scale is plain SSIM
        assert_eq!(ms_ssim(&a, &b, &cfg, 1).unwrap(), ssim(&a, &b, &cfg).unwrap());
        assert!(ms_ssim(&a, &b, &cfg, 6).is_err());
        let small = textured(64, 64);
        assert!(ms_ssim(&small, &small, &cfg, 5).is_err());
    }

    #[test]
    fn scale_bookkeeping() {
        assert_eq!(max_scales(176, 176, 11), 5);
        assert_eq!(max_scales(55, 55, 11), 3);
        assert_eq!(max_scales(8, 8, 3), 2);
        assert_eq!(scale_exponents(1), vec![1.0]);
        assert_eq!(scale_exponents(5), MS_SSIM_WEIGHTS.to_vec());
        assert!((scale_exponents(3).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Plane::new(7, 5, (0..35).map(|_| rng.random::<f64>()).collect());
        let q = Plane::new(3, 2, (0..6).map(|_| rng.random::<f64>()).collect());
        let lhs: f64 = p.pool().v.iter().zip(&q.v).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.v.iter().zip(&q.pool_adjoint(7, 5).v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn filter_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = SsimConfig::default().kernel();
        let p = Plane::new(20, 15, (0..300).map(|_| rng.random::<f64>()).collect());
        let f = filter_valid(&p, &g);
        let q = Plane::new(f.w, f.h, (0..f.v.len()).map(|_| rng.random::<f64>()).collect());
        let lhs: f64 = f.v.iter().zip(&q.v).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.v.iter().zip(&filter_valid_adjoint(&q, &g, 20, 15).v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn ms_ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = SsimConfig { window_size: 3, window_sigma: 1.0, data_range: 1.0, ..SsimConfig::default() };
        let (w, h) = (16, 12);
        let y: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
        let x: Vec<f64> = y.iter().map(|v| v + 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let xp = Plane::new(w, h, x.clone());
        let yp = Plane::new(w, h, y);
        for scales in 1..=3 {
            let (_, grad) = ms_ssim_impl(&xp, &yp, &cfg, scales, true).unwrap();
            let grad = grad.unwrap();
            let step = 1e-5;
            for idx in [0, 17, 50, 101, w * h - 1] {
                let mut plus = xp.clone();
                plus.v[idx] += step;
                let mut minus = xp.clone();
                minus.v[idx] -= step;
                let fd = (ms_ssim_impl(&plus, &yp, &cfg, scales, false).unwrap().0
                    - ms_ssim_impl(&minus, &yp, &cfg, scales, false).unwrap().0)
                    / (2.0 * step);
                let err = (fd - grad.v[idx]).abs() / fd.abs().max(1e-6);
                assert!(err < 1e-4, "scales {scales} idx {idx}: fd {fd} analytic {}", grad.v[idx]);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn psnr_strictly_decreasing(r1 in 1e-3f64..1e4, r2 in 1e-3f64..1e4) {
            proptest::prop_assume!(r1 < r2);
            proptest::prop_assert!(psnr_from_rmse(r1, 2000.0) > psnr_from_rmse(r2, 2000.0));
        }

        #[test]
        fn metrics_invariant_under_joint_rotation(seed in 0u64..1000) {
            let a = noise_image(24, 20, 100.0, seed);
            let b = noise_image(24, 20, 100.0, seed + 1000).map(|v| v * 0.3).unwrap();
            let b = b.with_data(a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).unwrap();
            let cfg = SsimConfig { window_size: 7, ..SsimConfig::default() };
            let (ra, rb) = (a.rotate90(), b.rotate90());
            proptest::prop_assert!((rmse(&a, &b).unwrap() - rmse(&ra, &rb).unwrap()).abs() < 1e-9);
            let s = ssim(&a, &b, &cfg).unwrap();
            let sr = ssim(&ra, &rb, &cfg).unwrap();
            proptest::prop_assert!((s - sr).abs() < 1e-9, "{} vs {}", s, sr);
        }
    }
}

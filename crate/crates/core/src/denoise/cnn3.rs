//! Three-layer convolutional denoiser: conv3×3(1→64) → ReLU →
//! conv3×3(64→64) → ReLU → conv3×3(64→1), zero padding, direct mapping.
//!
//! Convolutions run as im2col + GEMM over channel-last activations. Kernels
//! are stored `[ky][kx][c_in][c_out]`, i.e. a `(9·c_in) × c_out` matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 64;
const K: usize = 3;
/// Pixels per im2col block; bounds memory for whole-slice inference.
const BLOCK_PX: usize = 8192;

/// Floating-point element usable by the network.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::AddAssign
    + std::ops::Mul<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha·a·b + beta·c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn zero() -> Self {
                0.0
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let last = |r: usize, c: usize, rs: isize, cs: isize| -> usize {
                    (r.saturating_sub(1) as isize * rs + c.saturating_sub(1) as isize * cs) as usize
                };
                assert!(k == 0 || last(m, k, rsa, csa) < a.len());
                assert!(k == 0 || last(k, n, rsb, csb) < b.len());
                assert!(last(m, n, rsc, csc) < c.len());
                // SAFETY: the asserts above bound every strided access.
                unsafe {
                    $gemm(
                        m, k, n, alpha, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
                        c.as_mut_ptr(), rsc, csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// One 3×3 convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub c_in: usize,
    pub c_out: usize,
    /// `[ky][kx][c_in][c_out]`
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { c_in, c_out, kernel: vec![T::zero(); K * K * c_in * c_out], bias: vec![T::zero(); c_out] }
    }

    #[inline]
    pub fn index(&self, ky: usize, kx: usize, ci: usize, co: usize) -> usize {
        ((ky * K + kx) * self.c_in + ci) * self.c_out + co
    }

    fn rows(&self) -> usize {
        K * K * self.c_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cnn3Weights<T> {
    pub layers: [ConvLayer<T>; 3],
}

impl<T: Scalar> Cnn3Weights<T> {
    pub fn zeros() -> Self {
        Self {
            layers: [
                ConvLayer::zeros(1, CHANNELS),
                ConvLayer::zeros(CHANNELS, CHANNELS),
                ConvLayer::zeros(CHANNELS, 1),
            ],
        }
    }

    /// He (fan-in) normal initialization, zero biases.
    pub fn he_init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros();
        for layer in &mut w.layers {
            let std = (2.0 / layer.rows() as f64).sqrt();
            for v in &mut layer.kernel {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::from_f64(std * z);
            }
        }
        w
    }

    /// Center-tap construction that passes non-negative inputs through
    /// unchanged on channel 0.
    pub fn identity() -> Self {
        let mut w = Self::zeros();
        for layer in &mut w.layers {
            let i = layer.index(1, 1, 0, 0);
            layer.kernel[i] = T::from_f64(1.0);
        }
        w
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + l.bias.len()).sum()
    }

    /// All parameters in declared order: kernel then bias, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.kernel.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.kernel.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.params().copied().collect()
    }

    pub fn from_flat(values: &[T]) -> Result<Self> {
        let mut w = Self::zeros();
        if values.len() != w.num_params() {
            return Err(Error::DataLength { expected: w.num_params(), found: values.len() });
        }
        for (p, &v) in w.params_mut().zip(values) {
            *p = v;
        }
        Ok(w)
    }

    pub fn sq_norm(&self) -> f64 {
        self.params().map(|v| v.to_f64() * v.to_f64()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.to_f64().is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Cnn3Weights<U> {
        let cast_layer = |l: &ConvLayer<T>| ConvLayer {
            c_in: l.c_in,
            c_out: l.c_out,
            kernel: l.kernel.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            bias: l.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        };
        Cnn3Weights { layers: [cast_layer(&self.layers[0]), cast_layer(&self.layers[1]), cast_layer(&self.layers[2])] }
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, &b) in self.params_mut().zip(other.params()) {
            *a += alpha * b;
        }
    }
}

/// Fills im2col rows for pixels `p0..p1` of a `w`×`h` channel-last input.
fn im2col<T: Scalar>(input: &[T], w: usize, h: usize, c: usize, p0: usize, p1: usize, cols: &mut [T]) {
    let row_len = K * K * c;
    for (r, p) in (p0..p1).enumerate() {
        let (y, x) = (p / w, p % w);
        let dst = &mut cols[r * row_len..(r + 1) * row_len];
        for ky in 0..K {
            let yy = y as isize + ky as isize - 1;
            for kx in 0..K {
                let xx = x as isize + kx as isize - 1;
                let seg = &mut dst[(ky * K + kx) * c..(ky * K + kx + 1) * c];
                if yy < 0 || yy >= h as isize || xx < 0 || xx >= w as isize {
                    seg.fill(T::zero());
                } else {
                    let src = (yy as usize * w + xx as usize) * c;
                    seg.copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
}

/// Scatter-adds im2col rows for pixels `p0..p1` back onto a channel-last grid.
fn col2im<T: Scalar>(cols: &[T], w: usize, h: usize, c: usize, p0: usize, p1: usize, out: &mut [T]) {
    let row_len = K * K * c;
    for (r, p) in (p0..p1).enumerate() {
        let (y, x) = (p / w, p % w);
        let src = &cols[r * row_len..(r + 1) * row_len];
        for ky in 0..K {
            let yy = y as isize + ky as isize - 1;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            for kx in 0..K {
                let xx = x as isize + kx as isize - 1;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                let dst = (yy as usize * w + xx as usize) * c;
                for (o, &v) in out[dst..dst + c].iter_mut().zip(&src[(ky * K + kx) * c..(ky * K + kx + 1) * c]) {
                    *o += v;
                }
            }
        }
    }
}

/// Pre-activation output of a layer.
fn conv_forward<T: Scalar>(layer: &ConvLayer<T>, input: &[T], w: usize, h: usize) -> Vec<T> {
    let n = w * h;
    let rows = layer.rows();
    let mut out = vec![T::zero(); n * layer.c_out];
    for p in 0..n {
        out[p * layer.c_out..(p + 1) * layer.c_out].copy_from_slice(&layer.bias);
    }
    let mut cols = vec![T::zero(); BLOCK_PX.min(n) * rows];
    let mut p0 = 0;
    while p0 < n {
        let p1 = (p0 + BLOCK_PX).min(n);
        let m = p1 - p0;
        im2col(input, w, h, layer.c_in, p0, p1, &mut cols);
        T::gemm(
            m,
            rows,
            layer.c_out,
            T::from_f64(1.0),
            &cols,
            rows as isize,
            1,
            &layer.kernel,
            layer.c_out as isize,
            1,
            T::from_f64(1.0),
            &mut out[p0 * layer.c_out..p1 * layer.c_out],
            layer.c_out as isize,
            1,
        );
        p0 = p1;
    }
    out
}

/// Accumulates kernel/bias gradients into `grad` and, if requested, returns
/// the gradient with respect to the layer input.
fn conv_backward<T: Scalar>(
    layer: &ConvLayer<T>,
    input: &[T],
    d_out: &[T],
    w: usize,
    h: usize,
    grad: &mut ConvLayer<T>,
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let n = w * h;
    let rows = layer.rows();
    let co = layer.c_out;
    for p in 0..n {
        for (b, &d) in grad.bias.iter_mut().zip(&d_out[p * co..(p + 1) * co]) {
            *b += d;
        }
    }
    let mut d_in = want_input_grad.then(|| vec![T::zero(); n * layer.c_in]);
    let block = BLOCK_PX.min(n);
    let mut cols = vec![T::zero(); block * rows];
    let mut d_cols = if want_input_grad { vec![T::zero(); block * rows] } else { Vec::new() };
    let mut p0 = 0;
    while p0 < n {
        let p1 = (p0 + BLOCK_PX).min(n);
        let m = p1 - p0;
        im2col(input, w, h, layer.c_in, p0, p1, &mut cols);
        let d_block = &d_out[p0 * co..p1 * co];
        // dK += colsᵀ · dOut
        T::gemm(
            rows,
            m,
            co,
            T::from_f64(1.0),
            &cols,
            1,
            rows as isize,
            d_block,
            co as isize,
            1,
            T::from_f64(1.0),
            &mut grad.kernel,
            co as isize,
            1,
        );
        if let Some(d_in) = d_in.as_mut() {
            // dCols = dOut · Kᵀ
            T::gemm(
                m,
                co,
                rows,
                T::from_f64(1.0),
                d_block,
                co as isize,
                1,
                &layer.kernel,
                1,
                co as isize,
                T::zero(),
                &mut d_cols[..m * rows],
                rows as isize,
                1,
            );
            col2im(&d_cols[..m * rows], w, h, layer.c_in, p0, p1, d_in);
        }
        p0 = p1;
    }
    d_in
}

fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Activations retained for backpropagation.
pub struct ForwardTrace<T> {
    pub w: usize,
    pub h: usize,
    input: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    pub output: Vec<T>,
}

fn check_input(w: usize, h: usize, len: usize) -> Result<()> {
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!("cnn3 input must be at least 3x3, got {w}x{h}")));
    }
    if len != w * h {
        return Err(Error::DataLength { expected: w * h, found: len });
    }
    Ok(())
}

pub fn forward_trace<T: Scalar>(weights: &Cnn3Weights<T>, x: &[T], w: usize, h: usize) -> Result<ForwardTrace<T>> {
    check_input(w, h, x.len())?;
    let [l1, l2, l3] = &weights.layers;
    let mut a1 = conv_forward(l1, x, w, h);
    relu_in_place(&mut a1);
    let mut a2 = conv_forward(l2, &a1, w, h);
    relu_in_place(&mut a2);
    let output = conv_forward(l3, &a2, w, h);
    Ok(ForwardTrace { w, h, input: x.to_vec(), a1, a2, output })
}

/// Network output for a single-channel `w`×`h` model-domain image.
pub fn cnn3_forward<T: Scalar>(weights: &Cnn3Weights<T>, x: &[T], w: usize, h: usize) -> Result<Vec<T>> {
    Ok(forward_trace(weights, x, w, h)?.output)
}

/// Backpropagates `d_output` through a recorded forward pass, accumulating
/// weight gradients into `grad`. Returns the input gradient when requested.
pub fn backward<T: Scalar>(
    weights: &Cnn3Weights<T>,
    trace: &ForwardTrace<T>,
    d_output: &[T],
    grad: &mut Cnn3Weights<T>,
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let (w, h) = (trace.w, trace.h);
    let [l1, l2, l3] = &weights.layers;
    let [g1, g2, g3] = &mut grad.layers;
    let mut d_a2 = conv_backward(l3, &trace.a2, d_output, w, h, g3, true).expect("input grad");
    for (d, &a) in d_a2.iter_mut().zip(&trace.a2) {
        if !(a > T::zero()) {
            *d = T::zero();
        }
    }
    let mut d_a1 = conv_backward(l2, &trace.a1, &d_a2, w, h, g2, true).expect("input grad");
    for (d, &a) in d_a1.iter_mut().zip(&trace.a1) {
        if !(a > T::zero()) {
            *d = T::zero();
        }
    }
    conv_backward(l1, &trace.input, &d_a1, w, h, g1, want_input_grad)
}

//! Dense row-major tensors and the primitives every other module builds on.
//!
//! Feature maps are `C×H×W`, convolution kernels `C_out×C_in×K×K`, and
//! 1×1 projection weights `C_out×C_in`. Flat offset of `(c, i, j)` in a
//! 3-D tensor is `c·H·W + i·W + j`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

/// Floating-point element type. Implemented for `f32` (models, kernels) and
/// `f64` (oracles, gradient checks).
pub trait Real:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Panics on an empty or zero-sized shape.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "invalid shape {shape:?}"
        );
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn3(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    data.push(f(ci, i, j));
                }
            }
        }
        Tensor {
            shape: vec![c, h, w],
            data,
        }
    }

    /// Uniform samples in `[lo, hi)`. Values are drawn in `f64` and rounded,
    /// so `f32` and `f64` tensors built from the same seed agree up to rounding.
    pub fn uniform(shape: impl Into<Vec<usize>>, lo: f64, hi: f64, rng: &mut SeededRng) -> Self {
        let mut t = Self::zeros(shape);
        for v in t.data.iter_mut() {
            *v = T::of(rng.uniform(lo, hi));
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::shape(format!(
                "expected rank 2, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::shape(format!(
                "expected rank 3, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(Error::shape(format!(
                "expected rank 4, got {:?}",
                self.shape
            ))),
        }
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> T {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, i: usize, j: usize, v: T) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + i) * w + j] = v;
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> T {
        self.data[i * self.shape[1] + j]
    }

    /// Channel plane `c` of a 3-D tensor.
    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2];
        &self.data[c * n..(c + 1) * n]
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Max-norm relative error `max|a − b| / max|b|`, comparing in `f64`.
/// Returns the absolute error when `b` is identically zero.
pub fn max_rel_err<A: Real, B: Real>(a: &Tensor<A>, b: &Tensor<B>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_rel_err on mismatched shapes");
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        num = num.max((x.as_f64() - y.as_f64()).abs());
        den = den.max(y.as_f64().abs());
    }
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Deterministic generator: ChaCha8 keyed by a 64-bit seed.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream derived from this generator's seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream.wrapping_add(1));
        SeededRng {
            seed: self.seed,
            inner: r,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn range(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        self.inner.random_range(lo..=hi_inclusive)
    }

    pub fn shuffle<X>(&mut self, xs: &mut [X]) {
        xs.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n` in ascending order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx = rand::seq::index::sample(&mut self.inner, n, k.min(n)).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Stride-1 2-D convolution with zero padding.
///
/// `x` is `C_in×H×W`, `w` is `C_out×C_in×K_h×K_w`. With `padding = (K−1)/2`
/// and odd `K` the output keeps the input's spatial size. Each output element
/// accumulates over `(c, k_i, k_j)` in that order.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, padding: usize) -> Result<Tensor<T>> {
    let (ci, h, wd) = x.dims3()?;
    let (co, wci, kh, kw) = w.dims4()?;
    if wci != ci {
        return Err(Error::shape(format!(
            "conv2d: input has {ci} channels, kernel expects {wci}"
        )));
    }
    if kh > h + 2 * padding || kw > wd + 2 * padding {
        return Err(Error::shape(format!(
            "conv2d: kernel {kh}×{kw} larger than padded input {}×{}",
            h + 2 * padding,
            wd + 2 * padding
        )));
    }
    let oh = h + 2 * padding - kh + 1;
    let ow = wd + 2 * padding - kw + 1;
    let mut out = Tensor::zeros([co, oh, ow]);
    let xd = x.data();
    let wdata = w.data();
    par::for_each_chunk(out.data_mut(), oh * ow, |o, plane| {
        for c in 0..ci {
            let xin = &xd[c * h * wd..(c + 1) * h * wd];
            for ki in 0..kh {
                for kj in 0..kw {
                    let wv = wdata[((o * ci + c) * kh + ki) * kw + kj];
                    // Output columns whose tap lands inside the input row.
                    let j0 = padding.saturating_sub(kj);
                    let j1 = (wd + padding).saturating_sub(kj).min(ow);
                    if j0 >= j1 {
                        continue;
                    }
                    for i in 0..oh {
                        let ii = i + ki;
                        if ii < padding || ii - padding >= h {
                            continue;
                        }
                        let src = &xin[(ii - padding) * wd + j0 + kj - padding..];
                        let dst = &mut plane[i * ow + j0..i * ow + j1];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Per-pixel linear map `out[o,i,j] = Σ_c W[o,c]·X[c,i,j]`. No bias.
pub fn conv1x1<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let (ci, h, wd) = x.dims3()?;
    let (co, wci) = w.dims2()?;
    if wci != ci {
        return Err(Error::shape(format!(
            "conv1x1: input has {ci} channels, weight expects {wci}"
        )));
    }
    let n = h * wd;
    let mut out = Tensor::zeros([co, h, wd]);
    let xd = x.data();
    let wdata = w.data();
    par::for_each_chunk(out.data_mut(), n, |o, plane| {
        for c in 0..ci {
            let wv = wdata[o * ci + c];
            for (d, &s) in plane.iter_mut().zip(&xd[c * n..(c + 1) * n]) {
                *d += wv * s;
            }
        }
    });
    Ok(out)
}

/// Softmax over the entries whose mask value is `0`; entries masked with
/// `−inf` get exactly zero weight. Stabilised by the largest unmasked logit.
pub fn softmax_masked<T: Real>(logits: &[T], mask: &[T]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(Error::shape(format!(
            "softmax_masked: {} logits vs {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    let live = |m: T| m == T::zero();
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| live(m))
        .map(|(&l, _)| l)
        .fold(None, |acc: Option<T>, l| Some(acc.map_or(l, |a| a.max(l))));
    let Some(max) = max else {
        return Err(Error::EmptyWindow { row: 0, col: 0 });
    };
    let mut out: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if live(m) { (l - max).exp() } else { T::zero() })
        .collect();
    let total: T = out.iter().copied().sum();
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(out)
}

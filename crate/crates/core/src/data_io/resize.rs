//! Separable cubic convolution with the Keys kernel (`a = -0.5`) and clamped
//! borders. No low-pass prefilter is applied when shrinking.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const KEYS_A: f64 = -0.5;

/// The Keys cubic convolution kernel.
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

type Taps = Vec<[(usize, f64); 4]>;

fn axis_taps(n_in: usize, n_out: usize, src: impl Fn(usize) -> f64) -> Taps {
    let last = n_in as isize - 1;
    (0..n_out)
        .map(|d| {
            let s = src(d);
            let base = s.floor();
            let t = s - base;
            let mut taps = [(0usize, 0.0); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let off = k as f64 - 1.0;
                let idx = (base as isize + k as isize - 1).clamp(0, last) as usize;
                *tap = (idx, keys_kernel(t - off));
            }
            taps
        })
        .collect()
}

fn apply<T: Real>(x: &Tensor<T>, rows: &Taps, cols: &Taps) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (rows.len(), cols.len());
    let mut tmp = vec![0.0f64; h * ow];
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let src = x.channel(ch);
        for i in 0..h {
            let row = &src[i * w..(i + 1) * w];
            for (j, taps) in cols.iter().enumerate() {
                tmp[i * ow + j] = taps.iter().map(|&(k, wt)| wt * row[k].as_f64()).sum();
            }
        }
        for taps in rows {
            for j in 0..ow {
                let v: f64 = taps.iter().map(|&(k, wt)| wt * tmp[k * ow + j]).sum();
                out.push(T::of(v));
            }
        }
    }
    Tensor::new([c, oh, ow], out)
}

/// Resamples a `C×H×W` tensor to `out_h×out_w` with pixel-centre alignment:
/// output index `d` samples source coordinate `(d + 0.5)·in/out − 0.5`.
pub fn bicubic_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (_, h, w) = x.dims3()?;
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!(
            "cannot resize {h}x{w} to {out_h}x{out_w}"
        )));
    }
    let centre = |n_in: usize, n_out: usize| {
        let r = n_in as f64 / n_out as f64;
        move |d: usize| (d as f64 + 0.5) * r - 0.5
    };
    let rows = axis_taps(h, out_h, centre(h, out_h));
    let cols = axis_taps(w, out_w, centre(w, out_w));
    apply(x, &rows, &cols)
}

/// Upsamples by `factor` treating input `(i, j)` as the sample at output
/// `(factor·i, factor·j)`, the geometry of grid-sampled depth.
pub fn bicubic_upsample_anchored<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (_, h, w) = x.dims3()?;
    if factor == 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!("cannot upsample {h}x{w} by {factor}")));
    }
    let f = factor as f64;
    let rows = axis_taps(h, h * factor, |d| d as f64 / f);
    let cols = axis_taps(w, w * factor, |d| d as f64 / f);
    apply(x, &rows, &cols)
}

//! Channel-parallel convolution, resampling, and their adjoints.
//!
//! All buffers are `C×H×W`. Each worker owns one output channel plane and
//! accumulates in a fixed loop order, so results do not depend on threads.

use crate::error::{Error, Result};
use crate::par;
use crate::reference::DeconvParams;
use crate::tensor::{Real, Tensor};

/// Output elements per im2col band; keeps a band of columns cache resident.
const BAND: usize = 1024;
/// Output channels sharing one pass over the column buffer.
const PLANES: usize = 4;

#[derive(Clone, Copy)]
struct ConvGeom {
    ci: usize,
    h: usize,
    wd: usize,
    kh: usize,
    kw: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn taps(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn band_rows(&self) -> usize {
        (BAND / self.ow.max(1)).max(1)
    }

    /// Output columns `j0..j1` whose tap `kj` lands inside an input row.
    fn cols(&self, kj: usize) -> (usize, usize) {
        let j0 = self.padding.saturating_sub(kj);
        let j1 = (self.wd + self.padding).saturating_sub(kj).min(self.ow);
        (j0, j1.max(j0))
    }

    /// Input row read by output row `i` through tap `ki`.
    fn src_row(&self, i: usize, ki: usize) -> Option<usize> {
        let ii = i + ki;
        (ii >= self.padding && ii - self.padding < self.h).then(|| ii - self.padding)
    }
}

/// Fills `cols` (`taps × rows·ow`) with the input samples seen by output rows
/// `r0..r0 + rows`, zero where a tap falls in the padding.
fn im2col_band<T: Real>(x: &[T], g: &ConvGeom, r0: usize, rows: usize, cols: &mut [T]) {
    let n = rows * g.ow;
    let (h, wd) = (g.h, g.wd);
    par::for_each_chunk(cols, g.kh * g.kw * n, |c, block| {
        let xin = &x[c * h * wd..(c + 1) * h * wd];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut block[(ki * g.kw + kj) * n..(ki * g.kw + kj + 1) * n];
                let (j0, j1) = g.cols(kj);
                for r in 0..rows {
                    let row = &mut dst[r * g.ow..(r + 1) * g.ow];
                    match g.src_row(r0 + r, ki) {
                        Some(a) if j0 < j1 => {
                            row[..j0].fill(T::zero());
                            row[j1..].fill(T::zero());
                            let base = a * wd + j0 + kj - g.padding;
                            row[j0..j1].copy_from_slice(&xin[base..base + (j1 - j0)]);
                        }
                        _ => row.fill(T::zero()),
                    }
                }
            }
        }
    });
}

fn conv_geom<T: Real>(x: &Tensor<T>, w: &Tensor<T>, padding: usize) -> Result<(ConvGeom, usize)> {
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
    let geom = ConvGeom {
        ci,
        h,
        wd,
        kh,
        kw,
        padding,
        oh: h + 2 * padding - kh + 1,
        ow: wd + 2 * padding - kw + 1,
    };
    Ok((geom, co))
}

/// [`conv2d`](crate::tensor::conv2d) as a banded im2col product. Each output
/// element accumulates over `(c, k_i, k_j)` in the same order.
pub fn conv2d_fast<T: Real>(x: &Tensor<T>, w: &Tensor<T>, padding: usize) -> Result<Tensor<T>> {
    let (g, co) = conv_geom(x, w, padding)?;
    let (q_len, plane) = (g.taps(), g.oh * g.ow);
    let wdata = w.data();
    let mut out = Tensor::zeros([co, g.oh, g.ow]);
    let rows_per = g.band_rows();
    let mut cols = vec![T::zero(); q_len * rows_per * g.ow];
    for r0 in (0..g.oh).step_by(rows_per) {
        let rows = rows_per.min(g.oh - r0);
        let n = rows * g.ow;
        let cols = &mut cols[..q_len * n];
        im2col_band(x.data(), &g, r0, rows, cols);
        let cols = &*cols;
        par::for_each_chunk(out.data_mut(), PLANES * plane, |blk, planes| {
            let np = planes.len() / plane;
            for q in 0..q_len {
                let src = &cols[q * n..(q + 1) * n];
                for p in 0..np {
                    let wv = wdata[(blk * PLANES + p) * q_len + q];
                    let at = p * plane + r0 * g.ow;
                    super::window::axpy(wv, src, &mut planes[at..at + n]);
                }
            }
        });
    }
    Ok(out)
}

/// Gradients of `conv2d(x, w, padding)` given the upstream `dy`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    padding: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (g, co) = conv_geom(x, w, padding)?;
    if dy.shape() != [co, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv2d_backward: x {:?}, w {:?}, dy {:?}, padding {padding}",
            x.shape(),
            w.shape(),
            dy.shape()
        )));
    }
    let (q_len, plane, kk) = (g.taps(), g.oh * g.ow, g.kh * g.kw);
    let (wdata, dyd) = (w.data(), dy.data());
    let mut dx = Tensor::zeros([g.ci, g.h, g.wd]);
    let mut dw = Tensor::zeros([co, g.ci, g.kh, g.kw]);
    let rows_per = g.band_rows();
    let mut cols = vec![T::zero(); q_len * rows_per * g.ow];
    let mut dcols = vec![T::zero(); q_len * rows_per * g.ow];
    for r0 in (0..g.oh).step_by(rows_per) {
        let rows = rows_per.min(g.oh - r0);
        let n = rows * g.ow;
        let band = |o: usize| &dyd[o * plane + r0 * g.ow..o * plane + r0 * g.ow + n];
        let cols = &mut cols[..q_len * n];
        im2col_band(x.data(), &g, r0, rows, cols);
        let cols = &*cols;
        par::for_each_chunk(dw.data_mut(), q_len, |o, wo| {
            let gy = band(o);
            for (q, v) in wo.iter_mut().enumerate() {
                *v += super::window::dot(gy, &cols[q * n..(q + 1) * n]);
            }
        });

        let dcols = &mut dcols[..q_len * n];
        par::for_each_chunk(dcols, kk * n, |c, block| {
            block.fill(T::zero());
            for o in 0..co {
                let gy = band(o);
                for t in 0..kk {
                    let wv = wdata[o * q_len + c * kk + t];
                    super::window::axpy(wv, gy, &mut block[t * n..(t + 1) * n]);
                }
            }
        });
        let dcols = &*dcols;
        par::for_each_chunk(dx.data_mut(), g.h * g.wd, |c, dplane| {
            for ki in 0..g.kh {
                for kj in 0..g.kw {
                    let (j0, j1) = g.cols(kj);
                    if j0 == j1 {
                        continue;
                    }
                    let src = &dcols[(c * kk + ki * g.kw + kj) * n..][..n];
                    for r in 0..rows {
                        if let Some(a) = g.src_row(r0 + r, ki) {
                            let base = a * g.wd + j0 + kj - g.padding;
                            let dst = &mut dplane[base..base + (j1 - j0)];
                            for (d, &v) in dst.iter_mut().zip(&src[r * g.ow + j0..r * g.ow + j1]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        });
    }
    Ok((dx, dw))
}

/// Gradients of `conv1x1(x, w)`.
pub fn conv1x1_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (ci, h, wd) = x.dims3()?;
    let (co, wci) = w.dims2()?;
    let (dco, dh, dw_) = dy.dims3()?;
    if wci != ci || dco != co || dh != h || dw_ != wd {
        return Err(Error::shape(format!(
            "conv1x1_backward: x {:?}, w {:?}, dy {:?}",
            x.shape(),
            w.shape(),
            dy.shape()
        )));
    }
    let n = h * wd;
    let (xd, wdata, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = Tensor::zeros([ci, h, wd]);
    par::for_each_chunk(dx.data_mut(), n, |c, plane| {
        for o in 0..co {
            let wv = wdata[o * ci + c];
            for (d, &s) in plane.iter_mut().zip(&dyd[o * n..(o + 1) * n]) {
                *d += wv * s;
            }
        }
    });
    let mut dw = Tensor::zeros([co, ci]);
    par::for_each_chunk(dw.data_mut(), ci, |o, row| {
        let g = &dyd[o * n..(o + 1) * n];
        for (c, v) in row.iter_mut().enumerate() {
            *v = super::window::dot(g, &xd[c * n..(c + 1) * n]);
        }
    });
    Ok((dx, dw))
}

/// Where kernel tap `(ki, kj)` lands: output phase `(pi, pj)` of the
/// `S×S` sub-grids, shifted by `(di, dj)` on the input grid. Taps are listed
/// in kernel order, index `ki·K + kj`.
#[derive(Clone, Copy)]
struct DeconvTap {
    phase: usize,
    di: isize,
    dj: isize,
}

fn deconv_taps(k: usize, s: usize) -> Vec<DeconvTap> {
    let r = ((k - 1) / 2) as isize;
    let si = s as isize;
    let mut taps = Vec::with_capacity(k * k);
    for ki in 0..k {
        for kj in 0..k {
            let (oi, oj) = (r - ki as isize, r - kj as isize);
            let (pi, pj) = (oi.rem_euclid(si) as usize, oj.rem_euclid(si) as usize);
            taps.push(DeconvTap {
                phase: pi * s + pj,
                di: oi.div_euclid(si),
                dj: oj.div_euclid(si),
            });
        }
    }
    taps
}

/// Indices `t < n` with `t + d` also in `0..n`.
fn overlap(n: usize, d: isize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    lo.min(hi)..hi
}

fn shifted(t: usize, d: isize) -> usize {
    (t as isize + d) as usize
}

/// Fills `cols` (`ci·K² × rows·W`) with `x[c, A − di, B − dj]` for phase rows
/// `A ∈ r0..r0 + rows`, zero outside the input.
fn shift_cols_band<T: Real>(
    x: &[T],
    (h, wd): (usize, usize),
    taps: &[DeconvTap],
    r0: usize,
    rows: usize,
    cols: &mut [T],
) {
    let n = rows * wd;
    par::for_each_chunk(cols, taps.len() * n, |c, block| {
        let xin = &x[c * h * wd..(c + 1) * h * wd];
        for (t, tap) in taps.iter().enumerate() {
            let dst = &mut block[t * n..(t + 1) * n];
            let span = overlap(wd, -tap.dj);
            for r in 0..rows {
                let row = &mut dst[r * wd..(r + 1) * wd];
                let a = (r0 + r) as isize - tap.di;
                if a < 0 || a >= h as isize || span.is_empty() {
                    row.fill(T::zero());
                    continue;
                }
                row[..span.start].fill(T::zero());
                row[span.end..].fill(T::zero());
                let src = &xin[a as usize * wd..(a as usize + 1) * wd];
                row[span.clone()].copy_from_slice(
                    &src[shifted(span.start, -tap.dj)..shifted(span.end, -tap.dj)],
                );
            }
        }
    });
}

fn deconv_shapes<T: Real>(
    x: &Tensor<T>,
    p: &DeconvParams<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    p.validate()?;
    let (ci, h, wd) = x.dims3()?;
    let (co, wci, k, _) = p.w.dims4()?;
    if wci != ci {
        return Err(Error::shape(format!(
            "transposed_conv2d: input has {ci} channels, kernel expects {wci}"
        )));
    }
    Ok((ci, co, h, wd, k))
}

/// Phase-decomposed transposed convolution: each tap adds a shifted copy of
/// the input to one `H×W` phase plane, and the planes are interleaved at the
/// end. Matches `conv2d(zero_upsample(x, S), w, (K−1)/2)`.
pub fn transposed_conv2d_fast<T: Real>(x: &Tensor<T>, p: &DeconvParams<T>) -> Result<Tensor<T>> {
    let (ci, co, h, wd, k) = deconv_shapes(x, p)?;
    let s = p.stride;
    let (n_all, taps) = (h * wd, deconv_taps(k, s));
    let (kk, q_len) = (k * k, ci * k * k);
    let wdata = p.w.data();
    let mut phases = vec![T::zero(); co * s * s * n_all];
    let rows_per = (BAND / wd).max(1);
    let mut cols = vec![T::zero(); q_len * rows_per * wd];
    for r0 in (0..h).step_by(rows_per) {
        let rows = rows_per.min(h - r0);
        let n = rows * wd;
        let cols = &mut cols[..q_len * n];
        shift_cols_band(x.data(), (h, wd), &taps, r0, rows, cols);
        let cols = &*cols;
        par::for_each_chunk(&mut phases, PLANES * s * s * n_all, |blk, planes| {
            let np = planes.len() / (s * s * n_all);
            for q in 0..q_len {
                let src = &cols[q * n..(q + 1) * n];
                let at = taps[q % kk].phase * n_all + r0 * wd;
                for pl in 0..np {
                    let wv = wdata[(blk * PLANES + pl) * q_len + q];
                    let base = pl * s * s * n_all + at;
                    super::window::axpy(wv, src, &mut planes[base..base + n]);
                }
            }
        });
    }
    let mut out = Tensor::zeros([co, h * s, wd * s]);
    let phases = &phases;
    par::for_each_chunk(out.data_mut(), s * s * n_all, |o, plane| {
        interleave(
            &phases[o * s * s * n_all..(o + 1) * s * s * n_all],
            plane,
            s,
            h,
            wd,
        );
    });
    Ok(out)
}

fn interleave<T: Real>(phases: &[T], plane: &mut [T], s: usize, h: usize, wd: usize) {
    let ow = wd * s;
    for pi in 0..s {
        for pj in 0..s {
            let src = &phases[(pi * s + pj) * h * wd..(pi * s + pj + 1) * h * wd];
            for a in 0..h {
                let row = &mut plane[(a * s + pi) * ow..(a * s + pi + 1) * ow];
                for (b, &v) in src[a * wd..(a + 1) * wd].iter().enumerate() {
                    row[b * s + pj] = v;
                }
            }
        }
    }
}

fn deinterleave<T: Real>(plane: &[T], phases: &mut [T], s: usize, h: usize, wd: usize) {
    let ow = wd * s;
    for pi in 0..s {
        for pj in 0..s {
            let dst = &mut phases[(pi * s + pj) * h * wd..(pi * s + pj + 1) * h * wd];
            for a in 0..h {
                let row = &plane[(a * s + pi) * ow..(a * s + pi + 1) * ow];
                for (b, v) in dst[a * wd..(a + 1) * wd].iter_mut().enumerate() {
                    *v = row[b * s + pj];
                }
            }
        }
    }
}

/// Gradients of [`transposed_conv2d_fast`].
pub fn transposed_conv2d_backward<T: Real>(
    x: &Tensor<T>,
    p: &DeconvParams<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (ci, co, h, wd, k) = deconv_shapes(x, p)?;
    let s = p.stride;
    let (oh, ow) = (h * s, wd * s);
    if dy.shape() != [co, oh, ow] {
        return Err(Error::shape(format!(
            "transposed_conv2d_backward: x {:?}, w {:?}, dy {:?}",
            x.shape(),
            p.w.shape(),
            dy.shape()
        )));
    }
    let (n_all, taps) = (h * wd, deconv_taps(k, s));
    let (kk, q_len) = (k * k, ci * k * k);
    let wdata = p.w.data();
    let mut gp = vec![T::zero(); co * oh * ow];
    par::for_each_chunk(&mut gp, oh * ow, |o, phases| {
        deinterleave(&dy.data()[o * oh * ow..(o + 1) * oh * ow], phases, s, h, wd);
    });
    let gp = &gp;

    let mut dx = Tensor::zeros([ci, h, wd]);
    let mut dw = Tensor::zeros([co, ci, k, k]);
    let rows_per = (BAND / wd).max(1);
    let mut cols = vec![T::zero(); q_len * rows_per * wd];
    let mut dcols = vec![T::zero(); q_len * rows_per * wd];
    for r0 in (0..h).step_by(rows_per) {
        let rows = rows_per.min(h - r0);
        let n = rows * wd;
        let band = |o: usize, t: usize| {
            let at = o * oh * ow + taps[t].phase * n_all + r0 * wd;
            &gp[at..at + n]
        };
        let cols = &mut cols[..q_len * n];
        shift_cols_band(x.data(), (h, wd), &taps, r0, rows, cols);
        let cols = &*cols;
        par::for_each_chunk(dw.data_mut(), q_len, |o, wo| {
            for (q, v) in wo.iter_mut().enumerate() {
                *v += super::window::dot(band(o, q % kk), &cols[q * n..(q + 1) * n]);
            }
        });

        let dcols = &mut dcols[..q_len * n];
        par::for_each_chunk(dcols, kk * n, |c, block| {
            block.fill(T::zero());
            for o in 0..co {
                for t in 0..kk {
                    let wv = wdata[o * q_len + c * kk + t];
                    super::window::axpy(wv, band(o, t), &mut block[t * n..(t + 1) * n]);
                }
            }
        });
        let dcols = &*dcols;
        par::for_each_chunk(dx.data_mut(), n_all, |c, dplane| {
            for (t, tap) in taps.iter().enumerate() {
                let span = overlap(wd, -tap.dj);
                if span.is_empty() {
                    continue;
                }
                let src = &dcols[(c * kk + t) * n..(c * kk + t + 1) * n];
                for r in 0..rows {
                    let a = (r0 + r) as isize - tap.di;
                    if a < 0 || a >= h as isize {
                        continue;
                    }
                    let base = a as usize * wd;
                    let dst = &mut dplane
                        [base + shifted(span.start, -tap.dj)..base + shifted(span.end, -tap.dj)];
                    for (d, &v) in dst
                        .iter_mut()
                        .zip(&src[r * wd + span.start..r * wd + span.end])
                    {
                        *d += v;
                    }
                }
            }
        });
    }
    Ok((dx, dw))
}

/// Samples `x[c, S·i, S·j]`; the adjoint of zero-upsampling.
pub fn subsample<T: Real>(x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if stride == 0 || h % stride != 0 || w % stride != 0 {
        return Err(Error::shape(format!(
            "subsample: {h}×{w} not divisible by stride {stride}"
        )));
    }
    let (lh, lw) = (h / stride, w / stride);
    let xd = x.data();
    let mut out = Tensor::zeros([c, lh, lw]);
    par::for_each_chunk(out.data_mut(), lh * lw, |ci, plane| {
        for a in 0..lh {
            for b in 0..lw {
                plane[a * lw + b] = xd[(ci * h + a * stride) * w + b * stride];
            }
        }
    });
    Ok(out)
}

/// Channel-parallel bilinear upscaling with the same sampling convention
/// and per-element arithmetic as the reference.
pub fn bilinear_upsample_fast<T: Real>(x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    if stride == 0 {
        return Err(Error::param("bilinear_upsample: stride must be at least 1"));
    }
    if stride == 1 {
        return Ok(x.clone());
    }
    let (c, h, w) = x.dims3()?;
    let (oh, ow) = (h * stride, w * stride);
    let xd = x.data();
    let mut out = Tensor::zeros([c, oh, ow]);
    par::for_each_chunk(out.data_mut(), oh * ow, |ci, plane| {
        let src = &xd[ci * h * w..(ci + 1) * h * w];
        for i in 0..oh {
            let (i0, ti) = bilinear_tap(i, stride);
            for j in 0..ow {
                let (j0, tj) = bilinear_tap(j, stride);
                let [(a0, wa0), (a1, wa1)] = [(i0, T::one() - ti), (next_index(i0, h), ti)];
                let [(b0, wb0), (b1, wb1)] = [(j0, T::one() - tj), (next_index(j0, w), tj)];
                plane[i * ow + j] = wa0 * wb0 * src[a0 * w + b0]
                    + wa0 * wb1 * src[a0 * w + b1]
                    + wa1 * wb0 * src[a1 * w + b0]
                    + wa1 * wb1 * src[a1 * w + b1];
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`bilinear_upsample_fast`]: maps an `S·H×S·W` gradient back
/// onto the `H×W` input.
pub fn bilinear_upsample_backward<T: Real>(
    dy: &Tensor<T>,
    stride: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let (c, oh, ow) = dy.dims3()?;
    if stride == 0 || oh != h * stride || ow != w * stride {
        return Err(Error::shape(format!(
            "bilinear backward: gradient {oh}×{ow} vs input {h}×{w} at stride {stride}"
        )));
    }
    if stride == 1 {
        return Ok(dy.clone());
    }
    let g = dy.data();
    let mut dx = Tensor::zeros([c, h, w]);
    par::for_each_chunk(dx.data_mut(), h * w, |ci, plane| {
        let src = &g[ci * oh * ow..(ci + 1) * oh * ow];
        for i in 0..oh {
            let (i0, ti) = bilinear_tap(i, stride);
            let i1 = next_index(i0, h);
            for j in 0..ow {
                let (j0, tj) = bilinear_tap(j, stride);
                let j1 = next_index(j0, w);
                let v = src[i * ow + j];
                let (wa0, wb0) = (T::one() - ti, T::one() - tj);
                plane[i0 * w + j0] += wa0 * wb0 * v;
                plane[i0 * w + j1] += wa0 * tj * v;
                plane[i1 * w + j0] += ti * wb0 * v;
                plane[i1 * w + j1] += ti * tj * v;
            }
        }
    });
    Ok(dx)
}

#[inline]
fn bilinear_tap<T: Real>(i: usize, stride: usize) -> (usize, T) {
    (
        i / stride,
        T::of((i % stride) as f64) / T::of(stride as f64),
    )
}

#[inline]
fn next_index(i0: usize, n: usize) -> usize {
    (i0 + 1).min(n - 1)
}

/// `2×2`-style average pooling by an integer factor.
pub fn avg_pool<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!(
            "avg_pool: {h}×{w} not divisible by {factor}"
        )));
    }
    let (lh, lw) = (h / factor, w / factor);
    let norm = T::one() / T::of((factor * factor) as f64);
    let xd = x.data();
    let mut out = Tensor::zeros([c, lh, lw]);
    par::for_each_chunk(out.data_mut(), lh * lw, |ci, plane| {
        for a in 0..lh {
            for b in 0..lw {
                let mut acc = T::zero();
                for di in 0..factor {
                    for dj in 0..factor {
                        acc += xd[(ci * h + a * factor + di) * w + b * factor + dj];
                    }
                }
                plane[a * lw + b] = acc * norm;
            }
        }
    });
    Ok(out)
}

/// Adjoint of [`avg_pool`].
pub fn avg_pool_backward<T: Real>(dy: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, lh, lw) = dy.dims3()?;
    if factor == 0 {
        return Err(Error::param("avg_pool: factor must be at least 1"));
    }
    let (h, w) = (lh * factor, lw * factor);
    let norm = T::one() / T::of((factor * factor) as f64);
    let g = dy.data();
    Ok(Tensor::from_fn3(c, h, w, |ci, i, j| {
        g[(ci * lh + i / factor) * lw + j / factor] * norm
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{bilinear_upsample, transposed_conv2d, zero_upsample};
    use crate::tensor::{conv2d, SeededRng};

    fn inner(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn deconv_fast_matches_reference() {
        let mut rng = SeededRng::new(40);
        for (s, k) in [(1, 3), (2, 3), (2, 5), (3, 5), (4, 7), (2, 1)] {
            let x = Tensor::<f64>::uniform([3, 5, 4], -1.0, 1.0, &mut rng);
            let p = DeconvParams::<f64>::init(3, 2, k, s, &mut rng).unwrap();
            let a = transposed_conv2d(&x, &p).unwrap();
            let b = transposed_conv2d_fast(&x, &p).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12, "S={s} K={k}");
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        let mut rng = SeededRng::new(41);
        let x = Tensor::<f64>::uniform([3, 6, 5], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::uniform([4, 3, 3, 3], -1.0, 1.0, &mut rng);
        let dy = Tensor::<f64>::uniform([4, 6, 5], -1.0, 1.0, &mut rng);
        let (dx, dw) = conv2d_backward(&x, &w, 1, &dy).unwrap();
        // ⟨dy, conv(x)⟩ is linear in x and in w.
        let y = conv2d(&x, &w, 1).unwrap();
        assert!((inner(&dy, &y) - inner(&dx, &x)).abs() < 1e-10);
        assert!((inner(&dy, &y) - inner(&dw, &w)).abs() < 1e-10);
    }

    #[test]
    fn deconv_backward_is_adjoint() {
        let mut rng = SeededRng::new(42);
        for (s, k) in [(2, 3), (3, 5), (1, 3)] {
            let x = Tensor::<f64>::uniform([2, 4, 3], -1.0, 1.0, &mut rng);
            let p = DeconvParams::<f64>::init(2, 3, k, s, &mut rng).unwrap();
            let y = transposed_conv2d_fast(&x, &p).unwrap();
            let dy = Tensor::<f64>::uniform(y.shape().to_vec(), -1.0, 1.0, &mut rng);
            let (dx, dw) = transposed_conv2d_backward(&x, &p, &dy).unwrap();
            assert!((inner(&dy, &y) - inner(&dx, &x)).abs() < 1e-10);
            assert!((inner(&dy, &y) - inner(&dw, &p.w)).abs() < 1e-10);
        }
    }

    #[test]
    fn conv1x1_backward_is_adjoint() {
        let mut rng = SeededRng::new(43);
        let x = Tensor::<f64>::uniform([3, 4, 4], -1.0, 1.0, &mut rng);
        let w = Tensor::<f64>::uniform([5, 3], -1.0, 1.0, &mut rng);
        let dy = Tensor::<f64>::uniform([5, 4, 4], -1.0, 1.0, &mut rng);
        let y = crate::tensor::conv1x1(&x, &w).unwrap();
        let (dx, dw) = conv1x1_backward(&x, &w, &dy).unwrap();
        assert!((inner(&dy, &y) - inner(&dx, &x)).abs() < 1e-10);
        assert!((inner(&dy, &y) - inner(&dw, &w)).abs() < 1e-10);
    }

    #[test]
    fn bilinear_fast_and_adjoint() {
        let mut rng = SeededRng::new(44);
        for s in 1..5 {
            let x = Tensor::<f64>::uniform([2, 3, 5], -1.0, 1.0, &mut rng);
            let y = bilinear_upsample_fast(&x, s).unwrap();
            assert_eq!(y, bilinear_upsample(&x, s).unwrap());
            let dy = Tensor::<f64>::uniform(y.shape().to_vec(), -1.0, 1.0, &mut rng);
            let dx = bilinear_upsample_backward(&dy, s, 3, 5).unwrap();
            assert!((inner(&dy, &y) - inner(&dx, &x)).abs() < 1e-10);
        }
    }

    #[test]
    fn subsample_and_pool_adjoints() {
        let mut rng = SeededRng::new(45);
        let x = Tensor::<f64>::uniform([2, 3, 4], -1.0, 1.0, &mut rng);
        let up = zero_upsample(&x, 3).unwrap();
        assert_eq!(subsample(&up, 3).unwrap(), x);
        let big = Tensor::<f64>::uniform([2, 9, 12], -1.0, 1.0, &mut rng);
        assert!((inner(&subsample(&big, 3).unwrap(), &x) - inner(&big, &up)).abs() < 1e-12);

        let pooled = avg_pool(&big, 3).unwrap();
        assert!(
            (pooled.at3(1, 0, 0)
                - (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| big.at3(1, i, j))
                    .sum::<f64>()
                    / 9.0)
                .abs()
                < 1e-14
        );
        let back = avg_pool_backward(&x, 3).unwrap();
        assert!((inner(&pooled, &x) - inner(&big, &back)).abs() < 1e-12);
        assert!(avg_pool(&big, 2).is_err());
    }
}

use super::ops::{bilinear_upsample_counted, make_mask, zero_upsample};
use super::params::{AttnUpsampleParams, Mask};
use super::MacCounter;
use crate::error::{Error, Result};
use crate::tensor::{softmax_masked, Real, Tensor};

/// `softmax(QKᵀ/√F_K)·V` with the softmax taken row-wise.
/// `q`, `k` are `N×F_K`, `v` is `N×F_V`.
pub fn scaled_dot_attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, fk) = q.dims2()?;
    let (nk, fk2) = k.dims2()?;
    let (nv, fv) = v.dims2()?;
    if nk != n || nv != n || fk2 != fk {
        return Err(Error::shape(format!(
            "scaled_dot_attention: Q {:?}, K {:?}, V {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = T::one() / T::of(fk as f64).sqrt();
    let open = vec![T::zero(); n];
    let mut out = Tensor::zeros([n, fv]);
    for row in 0..n {
        let logits: Vec<T> = (0..n)
            .map(|col| (0..fk).map(|f| q.at2(row, f) * k.at2(col, f)).sum::<T>() * scale)
            .collect();
        let a = softmax_masked(&logits, &open)?;
        for f in 0..fv {
            let z: T = (0..n).map(|col| a[col] * v.at2(col, f)).sum();
            out.data_mut()[row * fv + f] = z;
        }
    }
    Ok(out)
}

/// `qᵀ(k + (pos_x[dx] || pos_y[dy]))`, divided by `√F` when
/// `p.scale_logits` is set. `dx` is the row offset, `dy` the column offset.
pub fn relative_logit<T: Real>(
    q: &[T],
    k: &[T],
    dx: isize,
    dy: isize,
    p: &AttnUpsampleParams<T>,
) -> Result<T> {
    let f = q.len();
    if k.len() != f || f != p.c_out() {
        return Err(Error::shape(format!(
            "relative_logit: |q|={f}, |k|={}, C_out={}",
            k.len(),
            p.c_out()
        )));
    }
    let r = p.radius() as isize;
    if dx.abs() > r || dy.abs() > r {
        return Err(Error::param(format!(
            "relative offset ({dx}, {dy}) outside the {}×{} window",
            p.kernel, p.kernel
        )));
    }
    let half = f / 2;
    let (rx, ry) = ((dx + r) as usize, (dy + r) as usize);
    let mut acc = T::zero();
    for c in 0..f {
        let pos = if c < half {
            p.pos_x.at2(rx, c)
        } else {
            p.pos_y.at2(ry, c - half)
        };
        acc += q[c] * (k[c] + pos);
    }
    if p.scale_logits {
        acc /= T::of(f as f64).sqrt();
    }
    Ok(acc)
}

/// Local attention over `K×K` windows at the input resolution, no masking.
pub fn attention_conv<T: Real>(x: &Tensor<T>, p: &AttnUpsampleParams<T>) -> Result<Tensor<T>> {
    p.validate()?;
    let mut counter = MacCounter::default();
    let q = project(x, &p.w_q, &mut counter)?;
    let k = project(x, &p.w_k, &mut counter)?;
    let v = project(x, &p.w_v, &mut counter)?;
    windowed(&q, &k, &v, None, p, &mut counter)
}

/// Masked attention upsampling: queries bilinearly upscaled, keys and values
/// zero-upsampled, every inserted-zero position masked with `−inf`.
pub fn attention_upsample<T: Real>(x: &Tensor<T>, p: &AttnUpsampleParams<T>) -> Result<Tensor<T>> {
    attention_upsample_counted(x, p, &mut MacCounter::default())
}

pub fn attention_upsample_counted<T: Real>(
    x: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
    counter: &mut MacCounter,
) -> Result<Tensor<T>> {
    let (q_up, k_up, v_up, mask) = upsample_maps(x, p, counter)?;
    windowed(&q_up, &k_up, &v_up, Some(&mask), p, counter)
}

/// In-image neighbours of output `(i, j)` with their attention coefficients;
/// masked neighbours are listed with a coefficient of exactly zero.
pub fn attention_upsample_support<T: Real>(
    x: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
    i: usize,
    j: usize,
) -> Result<Vec<((usize, usize), T)>> {
    let mut counter = MacCounter::default();
    let (q_up, k_up, _, mask) = upsample_maps(x, p, &mut counter)?;
    let (_, oh, ow) = q_up.dims3()?;
    if i >= oh || j >= ow {
        return Err(Error::shape(format!(
            "position ({i}, {j}) outside {oh}×{ow} output"
        )));
    }
    let w = window(&q_up, &k_up, Some(&mask), p, i, j, &mut counter)?;
    Ok(w.into_iter().map(|(a, b, c)| ((a, b), c)).collect())
}

/// Joint variant: queries and keys from the high-resolution guide, values
/// from the zero-upsampled low-resolution target.
pub fn attention_joint_upsample<T: Real>(
    x_lr: &Tensor<T>,
    x_hr: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
) -> Result<Tensor<T>> {
    attention_joint_upsample_counted(x_lr, x_hr, p, &mut MacCounter::default())
}

pub fn attention_joint_upsample_counted<T: Real>(
    x_lr: &Tensor<T>,
    x_hr: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
    counter: &mut MacCounter,
) -> Result<Tensor<T>> {
    p.validate()?;
    let (_, h, w) = x_lr.dims3()?;
    let (_, gh, gw) = x_hr.dims3()?;
    let s = p.stride;
    if gh != h * s || gw != w * s {
        return Err(Error::shape(format!(
            "guide is {gh}×{gw}, expected {}×{} for a {h}×{w} target at stride {s}",
            h * s,
            w * s
        )));
    }
    let q_up = project(x_hr, &p.w_q, counter)?;
    let k_up = project(x_hr, &p.w_k, counter)?;
    let v_up = zero_upsample(&project(x_lr, &p.w_v, counter)?, s)?;
    let mask = make_mask(h, w, s)?;
    windowed(&q_up, &k_up, &v_up, Some(&mask), p, counter)
}

type UpsampleMaps<T> = (Tensor<T>, Tensor<T>, Tensor<T>, Mask<T>);

fn upsample_maps<T: Real>(
    x: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
    counter: &mut MacCounter,
) -> Result<UpsampleMaps<T>> {
    p.validate()?;
    let (_, h, w) = x.dims3()?;
    let s = p.stride;
    let q = project(x, &p.w_q, counter)?;
    let k = project(x, &p.w_k, counter)?;
    let v = project(x, &p.w_v, counter)?;
    let q_up = bilinear_upsample_counted(&q, s, counter)?;
    let k_up = zero_upsample(&k, s)?;
    let v_up = zero_upsample(&v, s)?;
    let mask = make_mask(h, w, s)?;
    Ok((q_up, k_up, v_up, mask))
}

/// 1×1 projection written as a per-output-element loop.
fn project<T: Real>(x: &Tensor<T>, w: &Tensor<T>, counter: &mut MacCounter) -> Result<Tensor<T>> {
    let (c_in, h, wd) = x.dims3()?;
    let (c_out, wc) = w.dims2()?;
    if wc != c_in {
        return Err(Error::shape(format!(
            "projection: input has {c_in} channels, weight {:?}",
            w.shape()
        )));
    }
    counter.add(c_out * h * wd * c_in);
    Ok(Tensor::from_fn3(c_out, h, wd, |o, i, j| {
        let mut acc = T::zero();
        for c in 0..c_in {
            acc += w.at2(o, c) * x.at3(c, i, j);
        }
        acc
    }))
}

fn column<T: Real>(t: &Tensor<T>, i: usize, j: usize) -> Vec<T> {
    (0..t.shape()[0]).map(|c| t.at3(c, i, j)).collect()
}

/// Softmax-normalised coefficients over the in-image part of the window
/// around `(i, j)`.
fn window<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    mask: Option<&Mask<T>>,
    p: &AttnUpsampleParams<T>,
    i: usize,
    j: usize,
    counter: &mut MacCounter,
) -> Result<Vec<(usize, usize, T)>> {
    let (c, h, w) = q.dims3()?;
    let r = p.radius() as isize;
    let qv = column(q, i, j);
    let mut cells = Vec::new();
    let mut logits = Vec::new();
    let mut masks = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            let (a, b) = (i as isize + dx, j as isize + dy);
            if a < 0 || b < 0 || a >= h as isize || b >= w as isize {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            let m = mask.map_or(T::zero(), |m| m.value(a, b));
            if m == T::zero() {
                counter.add(c);
            }
            logits.push(relative_logit(&qv, &column(k, a, b), dx, dy, p)?);
            masks.push(m);
            cells.push((a, b));
        }
    }
    let coeffs = softmax_masked(&logits, &masks).map_err(|e| match e {
        Error::EmptyWindow { .. } => Error::EmptyWindow { row: i, col: j },
        other => other,
    })?;
    Ok(cells
        .into_iter()
        .zip(coeffs)
        .map(|((a, b), c)| (a, b, c))
        .collect())
}

fn windowed<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    mask: Option<&Mask<T>>,
    p: &AttnUpsampleParams<T>,
    counter: &mut MacCounter,
) -> Result<Tensor<T>> {
    let (_, h, w) = q.dims3()?;
    let cv = v.shape()[0];
    let mut out = Tensor::zeros([cv, h, w]);
    for i in 0..h {
        for j in 0..w {
            let win = window(q, k, mask, p, i, j, counter)?;
            for &(a, b, coeff) in &win {
                if mask.is_some_and(|m| !m.is_open(a, b)) {
                    continue;
                }
                counter.add(cv);
                for ch in 0..cv {
                    let z = out.at3(ch, i, j) + coeff * v.at3(ch, a, b);
                    out.set3(ch, i, j, z);
                }
            }
        }
    }
    Ok(out)
}

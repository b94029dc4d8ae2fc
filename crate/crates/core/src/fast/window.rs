//! Masked window attention on pixel-major (`H×W×C`) buffers.
//!
//! Queries live at the output resolution; keys and values are the compact
//! low-resolution maps. Only phase-plan taps are visited, which is the same
//! set the `−inf` mask leaves open in the reference formulation. Every output
//! element reduces over its taps in slot order (row tap major), independent
//! of the thread count.

use super::plan::PhasePlan;
use crate::par;
use crate::tensor::Real;

/// Four-accumulator dot product with a fixed reduction order.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let o = c * 4;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut tail = T::zero();
    for o in chunks * 4..n {
        tail += a[o] * b[o];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, &s) in y.iter_mut().zip(x) {
        *d += alpha * s;
    }
}

pub(crate) fn to_hwc<T: Real>(chw: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let n = h * w;
    let mut out = vec![T::zero(); n * c];
    par::for_each_chunk(&mut out, w * c, |i, row| {
        for j in 0..w {
            for ch in 0..c {
                row[j * c + ch] = chw[ch * n + i * w + j];
            }
        }
    });
    out
}

pub(crate) fn to_chw<T: Real>(hwc: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let n = h * w;
    let mut out = vec![T::zero(); n * c];
    par::for_each_chunk(&mut out, n, |ch, plane| {
        for (p, v) in plane.iter_mut().enumerate() {
            *v = hwc[p * c + ch];
        }
    });
    out
}

/// Geometry of one masked window attention call.
pub(crate) struct Window<'a, T> {
    pub plan: &'a PhasePlan,
    pub out_h: usize,
    pub out_w: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// Query/key width; the positional split uses `cq / 2`.
    pub cq: usize,
    /// Value width.
    pub cv: usize,
    pub scale: T,
}

pub(crate) struct WindowGrads<T> {
    pub dq: Vec<T>,
    pub dk: Vec<T>,
    pub dv: Vec<T>,
    pub dpos_x: Vec<T>,
    pub dpos_y: Vec<T>,
}

impl<T: Real> Window<'_, T> {
    /// Writes `out` (`out_h·out_w·cv`) and, if given, the normalised
    /// coefficients (`out_h·out_w·slots`, zero where no neighbour exists).
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        q: &[T],
        k: &[T],
        v: &[T],
        pos_x: &[T],
        pos_y: &[T],
        out: &mut [T],
        coeffs: Option<&mut [T]>,
    ) {
        let slots = self.plan.slots();
        let mut scratch;
        let coeffs = match coeffs {
            Some(c) => c,
            None => {
                scratch = vec![T::zero(); self.out_h * self.out_w * slots];
                &mut scratch[..]
            }
        };
        par::for_each_chunk2(
            out,
            self.out_w * self.cv,
            coeffs,
            self.out_w * slots,
            |i, out_row, coef_row| self.forward_row(i, q, k, v, pos_x, pos_y, out_row, coef_row),
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn forward_row(
        &self,
        i: usize,
        q: &[T],
        k: &[T],
        v: &[T],
        pos_x: &[T],
        pos_y: &[T],
        out_row: &mut [T],
        coef_row: &mut [T],
    ) {
        let plan = self.plan;
        let s = plan.stride();
        let r = plan.radius() as isize;
        let ma = plan.max_axis_taps();
        let slots = plan.slots();
        let (cq, cv, half) = (self.cq, self.cv, self.cq / 2);
        let rtaps = plan.axis_taps(i % s);
        let bi = (i / s) as isize;
        let mut logits = vec![T::neg_infinity(); slots];
        let mut qpx = vec![T::zero(); ma];
        let mut qpy = vec![T::zero(); ma];
        for j in 0..self.out_w {
            let ctaps = plan.axis_taps(j % s);
            let bj = (j / s) as isize;
            let qv = &q[(i * self.out_w + j) * cq..][..cq];
            for (t, rt) in rtaps.iter().enumerate() {
                qpx[t] = dot(
                    &qv[..half],
                    &pos_x[(rt.offset + r) as usize * half..][..half],
                );
            }
            for (t, ct) in ctaps.iter().enumerate() {
                qpy[t] = dot(
                    &qv[half..],
                    &pos_y[(ct.offset + r) as usize * half..][..half],
                );
            }
            logits.iter_mut().for_each(|l| *l = T::neg_infinity());
            let mut max = T::neg_infinity();
            for (tr, rt) in rtaps.iter().enumerate() {
                let a = bi + rt.shift;
                if a < 0 || a >= self.in_h as isize {
                    continue;
                }
                for (tc, ct) in ctaps.iter().enumerate() {
                    let b = bj + ct.shift;
                    if b < 0 || b >= self.in_w as isize {
                        continue;
                    }
                    let kv = &k[(a as usize * self.in_w + b as usize) * cq..][..cq];
                    let l = (dot(qv, kv) + qpx[tr] + qpy[tc]) * self.scale;
                    logits[tr * ma + tc] = l;
                    max = max.max(l);
                }
            }
            let coef = &mut coef_row[j * slots..(j + 1) * slots];
            let mut total = T::zero();
            for (c, &l) in coef.iter_mut().zip(&logits) {
                *c = if l == T::neg_infinity() {
                    T::zero()
                } else {
                    (l - max).exp()
                };
                total += *c;
            }
            let z = &mut out_row[j * cv..(j + 1) * cv];
            z.iter_mut().for_each(|x| *x = T::zero());
            for (tr, rt) in rtaps.iter().enumerate() {
                for (tc, ct) in ctaps.iter().enumerate() {
                    let slot = tr * ma + tc;
                    if logits[slot] == T::neg_infinity() {
                        continue;
                    }
                    coef[slot] /= total;
                    let a = (bi + rt.shift) as usize;
                    let b = (bj + ct.shift) as usize;
                    axpy(coef[slot], &v[(a * self.in_w + b) * cv..][..cv], z);
                }
            }
        }
    }

    /// Gradients of `Σ dout·out` with respect to `q`, `k`, `v` and both
    /// positional tables, given the coefficients saved by [`Self::forward`].
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        q: &[T],
        k: &[T],
        v: &[T],
        pos_x: &[T],
        pos_y: &[T],
        coeffs: &[T],
        dout: &[T],
    ) -> WindowGrads<T> {
        let plan = self.plan;
        let s = plan.stride();
        let r = plan.radius() as isize;
        let kernel = plan.kernel();
        let ma = plan.max_axis_taps();
        let slots = plan.slots();
        let (cq, cv, half) = (self.cq, self.cv, self.cq / 2);
        let (out_w, in_w) = (self.out_w, self.in_w);

        // Pass 1, per output row: logit gradients, dq, and row partials of
        // the positional gradients.
        struct RowGrad<T> {
            dq: Vec<T>,
            g: Vec<T>,
            dpx: Vec<T>,
            dpy: Vec<T>,
        }
        let rows: Vec<RowGrad<T>> = par::map_indices(self.out_h, |i| {
            let mut rg = RowGrad {
                dq: vec![T::zero(); out_w * cq],
                g: vec![T::zero(); out_w * slots],
                dpx: vec![T::zero(); kernel * half],
                dpy: vec![T::zero(); kernel * half],
            };
            let rtaps = plan.axis_taps(i % s);
            let bi = (i / s) as isize;
            let mut da = vec![T::zero(); slots];
            let mut g_row = vec![T::zero(); ma];
            let mut g_col = vec![T::zero(); ma];
            for j in 0..out_w {
                let ctaps = plan.axis_taps(j % s);
                let bj = (j / s) as isize;
                let px = (i * out_w + j) * slots;
                let coef = &coeffs[px..px + slots];
                let dz = &dout[(i * out_w + j) * cv..][..cv];
                let mut weighted = T::zero();
                da.iter_mut().for_each(|x| *x = T::zero());
                for (tr, rt) in rtaps.iter().enumerate() {
                    for (tc, ct) in ctaps.iter().enumerate() {
                        let slot = tr * ma + tc;
                        if coef[slot] == T::zero() {
                            continue;
                        }
                        let a = (bi + rt.shift) as usize;
                        let b = (bj + ct.shift) as usize;
                        da[slot] = dot(dz, &v[(a * in_w + b) * cv..][..cv]);
                        weighted += coef[slot] * da[slot];
                    }
                }
                let qv = &q[(i * out_w + j) * cq..][..cq];
                let dq = &mut rg.dq[j * cq..(j + 1) * cq];
                let g = &mut rg.g[j * slots..(j + 1) * slots];
                g_row.iter_mut().for_each(|x| *x = T::zero());
                g_col.iter_mut().for_each(|x| *x = T::zero());
                for (tr, rt) in rtaps.iter().enumerate() {
                    for (tc, ct) in ctaps.iter().enumerate() {
                        let slot = tr * ma + tc;
                        if coef[slot] == T::zero() {
                            continue;
                        }
                        let gs = coef[slot] * (da[slot] - weighted) * self.scale;
                        g[slot] = gs;
                        g_row[tr] += gs;
                        g_col[tc] += gs;
                        let a = (bi + rt.shift) as usize;
                        let b = (bj + ct.shift) as usize;
                        axpy(gs, &k[(a * in_w + b) * cq..][..cq], dq);
                    }
                }
                for (tr, rt) in rtaps.iter().enumerate() {
                    let row = (rt.offset + r) as usize * half;
                    axpy(g_row[tr], &pos_x[row..row + half], &mut dq[..half]);
                    axpy(g_row[tr], &qv[..half], &mut rg.dpx[row..row + half]);
                }
                for (tc, ct) in ctaps.iter().enumerate() {
                    let row = (ct.offset + r) as usize * half;
                    axpy(g_col[tc], &pos_y[row..row + half], &mut dq[half..]);
                    axpy(g_col[tc], &qv[half..], &mut rg.dpy[row..row + half]);
                }
            }
            rg
        });

        let mut dq = Vec::with_capacity(self.out_h * out_w * cq);
        let mut g_all = Vec::with_capacity(self.out_h * out_w * slots);
        let mut dpos_x = vec![T::zero(); kernel * half];
        let mut dpos_y = vec![T::zero(); kernel * half];
        for rg in rows {
            dq.extend_from_slice(&rg.dq);
            g_all.extend_from_slice(&rg.g);
            axpy(T::one(), &rg.dpx, &mut dpos_x);
            axpy(T::one(), &rg.dpy, &mut dpos_y);
        }

        // Pass 2, per low-resolution row: gather every output pixel whose
        // window reaches (a, b).
        let mut dk = vec![T::zero(); self.in_h * in_w * cq];
        let mut dv = vec![T::zero(); self.in_h * in_w * cv];
        let out_h = self.out_h;
        par::for_each_chunk2(
            &mut dk,
            in_w * cq,
            &mut dv,
            in_w * cv,
            |a, dk_row, dv_row| {
                let ua = (a * s) as isize;
                for b in 0..in_w {
                    let ub = (b * s) as isize;
                    let dkv = &mut dk_row[b * cq..(b + 1) * cq];
                    let dvv = &mut dv_row[b * cv..(b + 1) * cv];
                    for i in (ua - r).max(0)..=(ua + r).min(out_h as isize - 1) {
                        let iu = i as usize;
                        let Some(tr) = plan.tap_index(iu % s, ua - i) else {
                            continue;
                        };
                        for j in (ub - r).max(0)..=(ub + r).min(out_w as isize - 1) {
                            let ju = j as usize;
                            let Some(tc) = plan.tap_index(ju % s, ub - j) else {
                                continue;
                            };
                            let px = iu * out_w + ju;
                            let slot = tr * ma + tc;
                            axpy(g_all[px * slots + slot], &q[px * cq..][..cq], dkv);
                            axpy(coeffs[px * slots + slot], &dout[px * cv..][..cv], dvv);
                        }
                    }
                }
            },
        );

        WindowGrads {
            dq,
            dk,
            dv,
            dpos_x,
            dpos_y,
        }
    }
}

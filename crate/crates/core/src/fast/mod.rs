//! Optimised kernels with the same semantics as [`crate::reference`].
//!
//! Masked attention never materialises the zero-upsampled keys/values or the
//! `−inf` mask: a [`PhasePlan`] lists, per output phase, exactly the window
//! taps that land on real samples. Transposed convolution likewise visits
//! only taps that hit real inputs. Work is split over output rows or channels
//! through [`crate::par`], so results are identical for any thread count.

pub mod bench;
mod conv;
pub mod flops;
pub mod plan;
pub(crate) mod window;

pub use conv::{
    avg_pool, avg_pool_backward, bilinear_upsample_backward, bilinear_upsample_fast,
    conv1x1_backward, conv2d_backward, conv2d_fast, subsample, transposed_conv2d_backward,
    transposed_conv2d_fast,
};
pub use plan::{AxisTap, PhasePlan, PhaseTap};

use crate::error::{Error, Result};
use crate::reference::AttnUpsampleParams;
use crate::tensor::{conv1x1, Real, Tensor};
use window::{to_chw, to_hwc, Window};

/// Output and saved softmax coefficients of [`window_attention`].
#[derive(Clone, Debug)]
pub struct WindowOutput<T: Real> {
    pub out: Tensor<T>,
    /// `OH·OW·slots` coefficients in the plan's slot layout.
    pub coeffs: Vec<T>,
}

/// Gradients of [`window_attention`], all `C×H×W` except the positional
/// tables, which are `K×(C/2)`.
#[derive(Clone, Debug)]
pub struct WindowGrads<T: Real> {
    pub dq: Tensor<T>,
    pub dk: Tensor<T>,
    pub dv: Tensor<T>,
    pub dpos_x: Tensor<T>,
    pub dpos_y: Tensor<T>,
}

struct Dims {
    cq: usize,
    cv: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

fn check_window<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    pos_x: &Tensor<T>,
    pos_y: &Tensor<T>,
    plan: &PhasePlan,
) -> Result<Dims> {
    let (cq, out_h, out_w) = q.dims3()?;
    let (ck, in_h, in_w) = k.dims3()?;
    let (cv, vh, vw) = v.dims3()?;
    let s = plan.stride();
    if ck != cq || vh != in_h || vw != in_w || out_h != in_h * s || out_w != in_w * s {
        return Err(Error::shape(format!(
            "window attention: Q {:?}, K {:?}, V {:?} at stride {s}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if cq % 2 != 0 {
        return Err(Error::shape(format!("query width {cq} must be even")));
    }
    for t in [pos_x, pos_y] {
        if t.shape() != [plan.kernel(), cq / 2] {
            return Err(Error::shape(format!(
                "positional table {:?}, expected [{}, {}]",
                t.shape(),
                plan.kernel(),
                cq / 2
            )));
        }
    }
    Ok(Dims {
        cq,
        cv,
        in_h,
        in_w,
        out_h,
        out_w,
    })
}

/// Masked local attention with compact keys and values.
///
/// `q` is `C×(S·H)×(S·W)`; `k` is `C×H×W` and `v` is `C_v×H×W`, standing for
/// their zero-upsampled versions. Logits are `qᵀ(k + (pos_x[dx] || pos_y[dy]))`
/// times `scale`, normalised over the unmasked in-image neighbours.
pub fn window_attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    pos_x: &Tensor<T>,
    pos_y: &Tensor<T>,
    plan: &PhasePlan,
    scale: T,
) -> Result<WindowOutput<T>> {
    let d = check_window(q, k, v, pos_x, pos_y, plan)?;
    let win = Window {
        plan,
        out_h: d.out_h,
        out_w: d.out_w,
        in_h: d.in_h,
        in_w: d.in_w,
        cq: d.cq,
        cv: d.cv,
        scale,
    };
    let qh = to_hwc(q.data(), d.cq, d.out_h, d.out_w);
    let kh = to_hwc(k.data(), d.cq, d.in_h, d.in_w);
    let vh = to_hwc(v.data(), d.cv, d.in_h, d.in_w);
    let mut out = vec![T::zero(); d.out_h * d.out_w * d.cv];
    let mut coeffs = vec![T::zero(); d.out_h * d.out_w * plan.slots()];
    win.forward(
        &qh,
        &kh,
        &vh,
        pos_x.data(),
        pos_y.data(),
        &mut out,
        Some(&mut coeffs),
    );
    Ok(WindowOutput {
        out: Tensor::new(
            [d.cv, d.out_h, d.out_w],
            to_chw(&out, d.cv, d.out_h, d.out_w),
        )?,
        coeffs,
    })
}

/// Backward pass of [`window_attention`] given its saved coefficients.
#[allow(clippy::too_many_arguments)]
pub fn window_attention_backward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    pos_x: &Tensor<T>,
    pos_y: &Tensor<T>,
    plan: &PhasePlan,
    scale: T,
    coeffs: &[T],
    dout: &Tensor<T>,
) -> Result<WindowGrads<T>> {
    let d = check_window(q, k, v, pos_x, pos_y, plan)?;
    if dout.shape() != [d.cv, d.out_h, d.out_w] || coeffs.len() != d.out_h * d.out_w * plan.slots()
    {
        return Err(Error::shape(format!(
            "window attention backward: dout {:?}, {} coefficients",
            dout.shape(),
            coeffs.len()
        )));
    }
    let win = Window {
        plan,
        out_h: d.out_h,
        out_w: d.out_w,
        in_h: d.in_h,
        in_w: d.in_w,
        cq: d.cq,
        cv: d.cv,
        scale,
    };
    let qh = to_hwc(q.data(), d.cq, d.out_h, d.out_w);
    let kh = to_hwc(k.data(), d.cq, d.in_h, d.in_w);
    let vh = to_hwc(v.data(), d.cv, d.in_h, d.in_w);
    let gh = to_hwc(dout.data(), d.cv, d.out_h, d.out_w);
    let g = win.backward(&qh, &kh, &vh, pos_x.data(), pos_y.data(), coeffs, &gh);
    let half = d.cq / 2;
    Ok(WindowGrads {
        dq: Tensor::new(
            [d.cq, d.out_h, d.out_w],
            to_chw(&g.dq, d.cq, d.out_h, d.out_w),
        )?,
        dk: Tensor::new([d.cq, d.in_h, d.in_w], to_chw(&g.dk, d.cq, d.in_h, d.in_w))?,
        dv: Tensor::new([d.cv, d.in_h, d.in_w], to_chw(&g.dv, d.cv, d.in_h, d.in_w))?,
        dpos_x: Tensor::new([plan.kernel(), half], g.dpos_x)?,
        dpos_y: Tensor::new([plan.kernel(), half], g.dpos_y)?,
    })
}

/// Logit scale for a layer: `1/√C_out` when enabled, else 1.
pub fn logit_scale<T: Real>(p: &AttnUpsampleParams<T>) -> T {
    if p.scale_logits {
        T::one() / T::of(p.c_out() as f64).sqrt()
    } else {
        T::one()
    }
}

/// Fast attention upsampling; same result as
/// [`crate::reference::attention_upsample`] up to summation order.
pub fn attention_upsample_fast<T: Real>(
    x: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
) -> Result<Tensor<T>> {
    p.validate()?;
    let plan = PhasePlan::new(p.kernel, p.stride)?;
    let q = bilinear_upsample_fast(&conv1x1(x, &p.w_q)?, p.stride)?;
    let k = conv1x1(x, &p.w_k)?;
    let v = conv1x1(x, &p.w_v)?;
    Ok(window_attention(&q, &k, &v, &p.pos_x, &p.pos_y, &plan, logit_scale(p))?.out)
}

/// Fast joint upsampling: keys are projected only at grid positions of the
/// guide, since every other key is masked.
pub fn attention_joint_upsample_fast<T: Real>(
    x_lr: &Tensor<T>,
    x_hr: &Tensor<T>,
    p: &AttnUpsampleParams<T>,
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
    let plan = PhasePlan::new(p.kernel, s)?;
    let q = conv1x1(x_hr, &p.w_q)?;
    let k = conv1x1(&subsample(x_hr, s)?, &p.w_k)?;
    let v = conv1x1(x_lr, &p.w_v)?;
    Ok(window_attention(&q, &k, &v, &p.pos_x, &p.pos_y, &plan, logit_scale(p))?.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{attention_conv, attention_joint_upsample, attention_upsample};
    use crate::tensor::{max_rel_err, SeededRng};

    #[test]
    fn fast_matches_reference_across_geometries() {
        let mut rng = SeededRng::new(50);
        for (s, k) in [(1, 3), (2, 3), (2, 5), (3, 5), (4, 7), (2, 7), (1, 1)] {
            for scale_logits in [true, false] {
                let mut p = AttnUpsampleParams::<f64>::init(3, 4, k, s, &mut rng).unwrap();
                p.scale_logits = scale_logits;
                let x = Tensor::<f64>::uniform([3, 4, 5], -1.0, 1.0, &mut rng);
                let a = attention_upsample(&x, &p).unwrap();
                let b = attention_upsample_fast(&x, &p).unwrap();
                assert!(a.max_abs_diff(&b) < 1e-12, "S={s} K={k}");
            }
        }
    }

    #[test]
    fn stride_one_is_attention_conv() {
        let mut rng = SeededRng::new(51);
        let p = AttnUpsampleParams::<f32>::init(4, 6, 5, 1, &mut rng).unwrap();
        let x = Tensor::<f32>::uniform([4, 7, 6], -1.0, 1.0, &mut rng);
        let a = attention_conv(&x, &p).unwrap();
        let b = attention_upsample_fast(&x, &p).unwrap();
        assert!(max_rel_err(&b, &a) < 1e-5);
    }

    #[test]
    fn joint_fast_matches_reference() {
        let mut rng = SeededRng::new(52);
        for (s, k) in [(1, 3), (2, 3), (4, 7)] {
            let p = AttnUpsampleParams::<f64>::init_joint(3, 2, 4, k, s, &mut rng).unwrap();
            let lr = Tensor::<f64>::uniform([2, 3, 4], -1.0, 1.0, &mut rng);
            let hr = Tensor::<f64>::uniform([3, 3 * s, 4 * s], -1.0, 1.0, &mut rng);
            let a = attention_joint_upsample(&lr, &hr, &p).unwrap();
            let b = attention_joint_upsample_fast(&lr, &hr, &p).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn coefficients_are_distributions() {
        let mut rng = SeededRng::new(53);
        let plan = PhasePlan::new(5, 2).unwrap();
        let q = Tensor::<f64>::uniform([4, 6, 8], -2.0, 2.0, &mut rng);
        let k = Tensor::<f64>::uniform([4, 3, 4], -2.0, 2.0, &mut rng);
        let v = Tensor::<f64>::uniform([3, 3, 4], -2.0, 2.0, &mut rng);
        let px = Tensor::<f64>::uniform([5, 2], -1.0, 1.0, &mut rng);
        let py = Tensor::<f64>::uniform([5, 2], -1.0, 1.0, &mut rng);
        let o = window_attention(&q, &k, &v, &px, &py, &plan, 0.5).unwrap();
        for px in o.coeffs.chunks(plan.slots()) {
            let s: f64 = px.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(px.iter().all(|&c| c >= 0.0));
        }
    }

    /// Backward against central differences of `Σ dout·out` in f64.
    #[test]
    fn window_backward_matches_finite_differences() {
        let mut rng = SeededRng::new(54);
        for (s, k) in [(2, 3), (1, 3), (3, 5)] {
            let plan = PhasePlan::new(k, s).unwrap();
            let (h, w) = (2, 3);
            let mut q = Tensor::<f64>::uniform([4, h * s, w * s], -1.0, 1.0, &mut rng);
            let mut kk = Tensor::<f64>::uniform([4, h, w], -1.0, 1.0, &mut rng);
            let mut v = Tensor::<f64>::uniform([2, h, w], -1.0, 1.0, &mut rng);
            let mut px = Tensor::<f64>::uniform([k, 2], -1.0, 1.0, &mut rng);
            let mut py = Tensor::<f64>::uniform([k, 2], -1.0, 1.0, &mut rng);
            let dout = Tensor::<f64>::uniform([2, h * s, w * s], -1.0, 1.0, &mut rng);
            let scale = 0.7;
            let fwd = window_attention(&q, &kk, &v, &px, &py, &plan, scale).unwrap();
            let g =
                window_attention_backward(&q, &kk, &v, &px, &py, &plan, scale, &fwd.coeffs, &dout)
                    .unwrap();
            let obj = |q: &Tensor<f64>,
                       kk: &Tensor<f64>,
                       v: &Tensor<f64>,
                       px: &Tensor<f64>,
                       py: &Tensor<f64>| {
                let o = window_attention(q, kk, v, px, py, &plan, scale)
                    .unwrap()
                    .out;
                o.data()
                    .iter()
                    .zip(dout.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let eps = 1e-6;
            macro_rules! check {
                ($t:ident, $grad:expr) => {
                    for idx in 0..$t.len() {
                        let orig = $t.data()[idx];
                        $t.data_mut()[idx] = orig + eps;
                        let up = obj(&q, &kk, &v, &px, &py);
                        $t.data_mut()[idx] = orig - eps;
                        let down = obj(&q, &kk, &v, &px, &py);
                        $t.data_mut()[idx] = orig;
                        let num = (up - down) / (2.0 * eps);
                        let ana = $grad.data()[idx];
                        assert!(
                            (num - ana).abs() < 1e-7,
                            "{} [{idx}] {num} vs {ana}",
                            stringify!($t)
                        );
                    }
                };
            }
            check!(q, g.dq);
            check!(kk, g.dk);
            check!(v, g.dv);
            check!(px, g.dpos_x);
            check!(py, g.dpos_y);
        }
    }
}

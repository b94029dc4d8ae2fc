use crate::autodiff::{ParamGrads, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Moment estimates for bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros: Vec<_> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update. Parameters without a gradient see a zero gradient.
/// Non-finite gradients abort before anything is modified.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &ParamGrads<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::param(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for id in params.ids() {
        if let Some(g) = grads.get(id) {
            g.check_same_shape(params.get(id))?;
            let bad = g.data().iter().filter(|v| !v.is_finite()).count();
            if bad > 0 {
                return Err(Error::NonFinite(format!(
                    "{bad} non-finite gradient entries in {:?} at step {}",
                    params.name(id),
                    state.step + 1
                )));
            }
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for id in params.ids().collect::<Vec<_>>() {
        let g = grads.get(id);
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        let p = params.get_mut(id);
        for k in 0..p.len() {
            let gk = g.map_or(0.0, |g| g.data()[k].as_f64());
            let mk = b1 * m.data()[k].as_f64() + (1.0 - b1) * gk;
            let vk = b2 * v.data()[k].as_f64() + (1.0 - b2) * gk * gk;
            m.data_mut()[k] = T::of(mk);
            v.data_mut()[k] = T::of(vk);
            let upd = lr * (mk / c1) / ((vk / c2).sqrt() + eps);
            let pk = &mut p.data_mut()[k];
            *pk = T::of(pk.as_f64() - upd);
        }
    }
    Ok(())
}

//! Super-resolution and guided joint upsampling networks.
//!
//! A model is an architecture handle (spec plus parameter ids) paired with a
//! [`ParamSet`]. Forward passes are recorded on a [`Tape`] and are generic
//! over the scalar type, so the same definition serves `f32` training and
//! `f64` gradient checks.

mod checkpoint;
mod joint;
mod sisr;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use joint::{JointModel, JointSpec, JointTrace};
pub use sisr::{SisrModel, SisrSpec, UpsampleKind};

use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::fast::avg_pool;
use crate::tensor::{Real, SeededRng, Tensor};

/// An architecture that maps input variables to one output variable.
pub trait Network: Sync {
    /// Number of input tensors `forward` expects.
    fn n_inputs(&self) -> usize;

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, inputs: &[Var]) -> Result<Var>;

    /// Runs `forward` once on concrete tensors.
    fn predict<T: Real>(&self, params: &ParamSet<T>, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        if inputs.len() != self.n_inputs() {
            return Err(Error::shape(format!(
                "model takes {} inputs, got {}",
                self.n_inputs(),
                inputs.len()
            )));
        }
        let mut tape = Tape::new(params);
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let y = self.forward(&mut tape, &vars)?;
        Ok(tape.value(y).clone())
    }
}

/// Non-overlapping `factor×factor` average pooling; identity for `factor = 1`.
pub fn downsample<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 1 {
        x.dims3()?;
        return Ok(x.clone());
    }
    avg_pool(x, factor)
}

/// Uniform in `±√(6/fan_in)`.
pub(crate) fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor<f32> {
    let b = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape.to_vec(), -b, b, rng)
}

/// Uniform in `±√(3/fan_in)` (unit gain, for layers without a rectifier).
pub(crate) fn lecun_uniform(shape: &[usize], fan_in: usize, rng: &mut SeededRng) -> Tensor<f32> {
    let b = (3.0 / fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape.to_vec(), -b, b, rng)
}

/// Looks up `name` and checks its shape.
pub(crate) fn expect_param<T: Real>(
    ps: &ParamSet<T>,
    name: &str,
    shape: &[usize],
) -> Result<ParamId> {
    let id = ps
        .find(name)
        .ok_or_else(|| Error::param(format!("missing parameter {name:?}")))?;
    if ps.get(id).shape() != shape {
        return Err(Error::param(format!(
            "parameter {name:?} has shape {:?}, expected {shape:?}",
            ps.get(id).shape()
        )));
    }
    Ok(id)
}

/// Ids of one attention upsampling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct AttnIds {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub pos_x: ParamId,
    pub pos_y: ParamId,
}

impl AttnIds {
    pub fn vars<T: Real>(&self, tape: &mut Tape<'_, T>) -> Result<crate::autodiff::AttnVars> {
        Ok(crate::autodiff::AttnVars {
            w_q: tape.param(self.w_q)?,
            w_k: tape.param(self.w_k)?,
            w_v: tape.param(self.w_v)?,
            pos_x: tape.param(self.pos_x)?,
            pos_y: tape.param(self.pos_y)?,
        })
    }
}

use super::config::AugmentConfig;
use crate::data_io::bicubic_resize;
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Rotates a `C×H×W` tensor a quarter turn counter-clockwise.
pub fn rot90<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    Ok(Tensor::from_fn3(c, w, h, |ch, i, j| {
        x.at3(ch, j, w - 1 - i)
    }))
}

pub fn rotate<T: Real>(x: &Tensor<T>, quarter_turns: usize) -> Result<Tensor<T>> {
    let mut y = x.clone();
    for _ in 0..quarter_turns % 4 {
        y = rot90(&y)?;
    }
    Ok(y)
}

/// Bicubic downscale to `round(f·H)×round(f·W)`.
pub fn downscale<T: Real>(x: &Tensor<T>, f: f64) -> Result<Tensor<T>> {
    let (_, h, w) = x.dims3()?;
    let oh = ((h as f64 * f).round() as usize).max(1);
    let ow = ((w as f64 * f).round() as usize).max(1);
    bicubic_resize(x, oh, ow)
}

/// The original, one bicubic downscale per configured factor, and rotations
/// of the original. With `compose`, every downscaled copy is rotated too.
pub fn augment<T: Real>(x: &Tensor<T>, cfg: &AugmentConfig) -> Result<Vec<Tensor<T>>> {
    let mut bases = vec![x.clone()];
    for &f in &cfg.scales {
        bases.push(downscale(x, f)?);
    }
    let mut out = bases.clone();
    let rotated = if cfg.compose { &bases[..] } else { &bases[..1] };
    for b in rotated {
        for &r in &cfg.rotations {
            out.push(rotate(b, r)?);
        }
    }
    Ok(out)
}

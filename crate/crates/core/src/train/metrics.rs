use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// PSNR reported for identical inputs.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::shape("metrics of empty tensors"));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        PSNR_IDENTICAL
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

/// `10·log10(max_val²/MSE)`; [`PSNR_IDENTICAL`] when the inputs agree exactly.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>, max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, max_val))
}

pub fn rmse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// Drops `n` pixels from every spatial edge.
pub fn crop_border<T: Real>(x: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if n == 0 {
        return Ok(x.clone());
    }
    if 2 * n >= h || 2 * n >= w {
        return Err(Error::shape(format!("cannot crop {n} pixels from {h}x{w}")));
    }
    Ok(Tensor::from_fn3(c, h - 2 * n, w - 2 * n, |ch, i, j| {
        x.at3(ch, i + n, j + n)
    }))
}

/// Formats a metric for logs: `inf` for the identical-input sentinel.
pub fn fmt_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    #[test]
    fn identical_inputs() {
        let a = Tensor::<f64>::uniform([1, 4, 4], 0.0, 1.0, &mut SeededRng::new(1));
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_IDENTICAL);
        assert_eq!(fmt_metric(PSNR_IDENTICAL), "inf");
    }

    #[test]
    fn zero_vs_full_scale_is_zero_db() {
        let a = Tensor::<f64>::zeros([3, 2, 2]);
        let b = Tensor::<f64>::full([3, 2, 2], 255.0);
        assert_eq!(psnr(&a, &b, 255.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let a = Tensor::<f64>::uniform([2, 3, 3], -1.0, 1.0, &mut SeededRng::new(2));
        let b = a.map(|v| v - 0.125);
        assert!((rmse(&a, &b).unwrap() - 0.125).abs() < 1e-12);
        assert!(rmse(&a, &Tensor::zeros([2, 3, 4])).is_err());
    }

    #[test]
    fn crop() {
        let x = Tensor::<f64>::from_fn3(1, 5, 6, |_, i, j| (i * 10 + j) as f64);
        let y = crop_border(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[22.0, 23.0]);
        assert!(crop_border(&x, 3).is_err());
    }
}

use crate::error::{Error, Result};
use crate::tensor::{Real, SeededRng, Tensor};

/// Learnable state of one attention-based upsampling layer.
///
/// `w_q` and `w_k` are `C_out×C_q` and `w_v` is `C_out×C_v`; for the
/// self-upsampling layer `C_q == C_v == C_in`, for the joint layer the query
/// and key projections read the guide and the value projection reads the
/// target. `pos_x` / `pos_y` are `K×(C_out/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnUpsampleParams<T: Real = f32> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub pos_x: Tensor<T>,
    pub pos_y: Tensor<T>,
    pub kernel: usize,
    pub stride: usize,
    pub scale_logits: bool,
}

impl<T: Real> AttnUpsampleParams<T> {
    /// Projections uniform in `±1/√C_in`, positional tables in `±1/√C_out`.
    pub fn init(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::init_joint(c_in, c_in, c_out, kernel, stride, rng)
    }

    /// Joint variant: queries/keys project `c_guide` channels, values `c_target`.
    pub fn init_joint(
        c_guide: usize,
        c_target: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        check_geometry(c_out, kernel, stride)?;
        if c_guide == 0 || c_target == 0 {
            return Err(Error::param("input channel count must be positive"));
        }
        let bq = 1.0 / (c_guide as f64).sqrt();
        let bv = 1.0 / (c_target as f64).sqrt();
        let bp = 1.0 / (c_out as f64).sqrt();
        let p = AttnUpsampleParams {
            w_q: Tensor::uniform([c_out, c_guide], -bq, bq, rng),
            w_k: Tensor::uniform([c_out, c_guide], -bq, bq, rng),
            w_v: Tensor::uniform([c_out, c_target], -bv, bv, rng),
            pos_x: Tensor::uniform([kernel, c_out / 2], -bp, bp, rng),
            pos_y: Tensor::uniform([kernel, c_out / 2], -bp, bp, rng),
            kernel,
            stride,
            scale_logits: true,
        };
        Ok(p)
    }

    pub fn c_out(&self) -> usize {
        self.w_q.shape()[0]
    }

    pub fn radius(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let c_out = self.c_out();
        check_geometry(c_out, self.kernel, self.stride)?;
        let (kq, cq) = self.w_q.dims2()?;
        let (kk, ck) = self.w_k.dims2()?;
        let (kv, _) = self.w_v.dims2()?;
        if kk != c_out || kv != c_out || kq != c_out || ck != cq {
            return Err(Error::param(format!(
                "projection shapes disagree: W_Q {:?}, W_K {:?}, W_V {:?}",
                self.w_q.shape(),
                self.w_k.shape(),
                self.w_v.shape()
            )));
        }
        for t in [&self.pos_x, &self.pos_y] {
            if t.shape() != [self.kernel, c_out / 2] {
                return Err(Error::param(format!(
                    "positional table {:?}, expected [{}, {}]",
                    t.shape(),
                    self.kernel,
                    c_out / 2
                )));
            }
        }
        Ok(())
    }

    /// Named parameter buffers in a fixed order.
    pub fn buffers(&self) -> [(&'static str, &Tensor<T>); 5] {
        [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("pos_x", &self.pos_x),
            ("pos_y", &self.pos_y),
        ]
    }

    /// Total number of allocated learnable elements.
    pub fn num_params(&self) -> usize {
        self.buffers().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> AttnUpsampleParams<U> {
        AttnUpsampleParams {
            w_q: self.w_q.cast(),
            w_k: self.w_k.cast(),
            w_v: self.w_v.cast(),
            pos_x: self.pos_x.cast(),
            pos_y: self.pos_y.cast(),
            kernel: self.kernel,
            stride: self.stride,
            scale_logits: self.scale_logits,
        }
    }
}

fn check_geometry(c_out: usize, kernel: usize, stride: usize) -> Result<()> {
    if c_out == 0 || !c_out.is_multiple_of(2) {
        return Err(Error::param(format!(
            "C_out must be even and positive for the positional split, got {c_out}"
        )));
    }
    if kernel.is_multiple_of(2) {
        return Err(Error::param(format!(
            "kernel size must be odd, got {kernel}"
        )));
    }
    if stride == 0 {
        return Err(Error::param("stride must be at least 1"));
    }
    if kernel + 1 < 2 * stride {
        return Err(Error::param(format!(
            "kernel {kernel} < 2·stride−1 = {} leaves attention windows empty",
            2 * stride - 1
        )));
    }
    Ok(())
}

/// Strided transposed convolution weights, `C_out×C_in×K×K`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeconvParams<T: Real = f32> {
    pub w: Tensor<T>,
    pub stride: usize,
    pub kernel: usize,
}

impl<T: Real> DeconvParams<T> {
    pub fn init(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) || stride == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::param(format!(
                "invalid deconvolution geometry: C_in={c_in} C_out={c_out} K={kernel} S={stride}"
            )));
        }
        let b = 1.0 / ((c_in * kernel * kernel) as f64).sqrt();
        Ok(DeconvParams {
            w: Tensor::uniform([c_out, c_in, kernel, kernel], -b, b, rng),
            stride,
            kernel,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (_, _, kh, kw) = self.w.dims4()?;
        if kh != self.kernel || kw != self.kernel || self.kernel.is_multiple_of(2) {
            return Err(Error::param(format!(
                "deconvolution kernel {:?} does not match odd K={}",
                self.w.shape(),
                self.kernel
            )));
        }
        if self.stride == 0 {
            return Err(Error::param("stride must be at least 1"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.w.len()
    }
}

/// The `{0, −inf}` validity grid of masked attention upsampling:
/// `grid[i, j] == 0` iff both `i` and `j` are multiples of the stride.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<T: Real = f32> {
    pub grid: Tensor<T>,
    pub stride: usize,
}

impl<T: Real> Mask<T> {
    #[inline]
    pub fn is_open(&self, i: usize, j: usize) -> bool {
        self.grid.at2(i, j) == T::zero()
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> T {
        self.grid.at2(i, j)
    }

    pub fn count_open(&self) -> usize {
        self.grid.data().iter().filter(|&&v| v == T::zero()).count()
    }
}

/// `C_in·C_out·K²` (no bias).
pub fn count_params_deconv(c_in: usize, c_out: usize, kernel: usize) -> Result<usize> {
    if c_in == 0 || c_out == 0 || kernel == 0 {
        return Err(Error::param("parameter counts need positive arguments"));
    }
    Ok(c_in * c_out * kernel * kernel)
}

/// `3·C_in·C_out + K·C_out`: three 1×1 projections plus `K` rows of
/// `C_out/2` positional entries for each of the two axes.
pub fn count_params_attention(c_in: usize, c_out: usize, kernel: usize) -> Result<usize> {
    if c_in == 0 || c_out == 0 || kernel == 0 {
        return Err(Error::param("parameter counts need positive arguments"));
    }
    if !c_out.is_multiple_of(2) {
        return Err(Error::param(format!(
            "attention upsampling needs even C_out, got {c_out}"
        )));
    }
    Ok(3 * c_in * c_out + kernel * c_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_counts_at_64_channels() {
        let d = count_params_deconv(64, 64, 3).unwrap();
        let a = count_params_attention(64, 64, 3).unwrap();
        assert_eq!(d, 36864);
        assert_eq!(a, 12480);
        let ratio = d as f64 / a as f64;
        assert!((ratio - 2.95).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn odd_channels_rejected() {
        assert!(matches!(
            count_params_attention(1, 1, 3),
            Err(Error::Param(_))
        ));
        let mut rng = SeededRng::new(0);
        assert!(AttnUpsampleParams::<f32>::init(1, 1, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn counts_match_allocated_buffers() {
        let mut rng = SeededRng::new(1);
        for &(ci, co, k, s) in &[(3, 4, 3, 2), (8, 2, 5, 1), (5, 6, 7, 4), (64, 64, 3, 2)] {
            let a = AttnUpsampleParams::<f32>::init(ci, co, k, s, &mut rng).unwrap();
            assert_eq!(a.num_params(), count_params_attention(ci, co, k).unwrap());
            let d = DeconvParams::<f32>::init(ci, co, k, s, &mut rng).unwrap();
            assert_eq!(d.num_params(), count_params_deconv(ci, co, k).unwrap());
        }
    }

    #[test]
    fn geometry_rules() {
        let mut rng = SeededRng::new(2);
        assert!(AttnUpsampleParams::<f32>::init(2, 4, 4, 1, &mut rng).is_err());
        assert!(AttnUpsampleParams::<f32>::init(2, 4, 5, 4, &mut rng).is_err());
        assert!(AttnUpsampleParams::<f32>::init(2, 4, 7, 4, &mut rng).is_ok());
        assert!(AttnUpsampleParams::<f32>::init(2, 4, 3, 0, &mut rng).is_err());
    }
}

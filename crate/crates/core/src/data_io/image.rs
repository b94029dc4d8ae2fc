use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Interleaved 8-bit image with 1 or 3 channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "{} samples for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(ImageU8 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[u8] {
        let o = (i * self.width + j) * self.channels;
        &self.data[o..o + self.channels]
    }

    /// `C×H×W` tensor scaled to `[0, 1]`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let (c, h, w) = (self.channels, self.height, self.width);
        Tensor::from_fn3(c, h, w, |ch, i, j| {
            T::of(self.data[(i * w + j) * c + ch] as f64 / 255.0)
        })
    }

    /// Inverse of [`ImageU8::to_tensor`], rounding and clamping to `[0, 255]`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        let mut data = vec![0u8; c * h * w];
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    data[(i * w + j) * c + ch] = quantize(t.at3(ch, i, j).as_f64() * 255.0);
                }
            }
        }
        Self::new(c, h, w, data)
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

/// Single-channel 16-bit depth map. `scale` is the physical size of one count.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u16>,
    pub scale: f64,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{} samples for a {height}x{width} depth map",
                data.len()
            )));
        }
        Ok(DepthMap {
            height,
            width,
            data,
            scale: 1.0,
        })
    }

    pub fn at(&self, i: usize, j: usize) -> u16 {
        self.data[i * self.width + j]
    }

    /// `1×H×W` tensor of raw counts divided by `norm`.
    pub fn to_tensor<T: Real>(&self, norm: f64) -> Tensor<T> {
        Tensor::from_fn3(1, self.height, self.width, |_, i, j| {
            T::of(self.at(i, j) as f64 / norm)
        })
    }

    /// Multiplies by `norm`, rounds and clamps into `u16`.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, norm: f64) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != 1 {
            return Err(Error::shape(format!(
                "depth maps have one channel, got {c}"
            )));
        }
        let data = t
            .data()
            .iter()
            .map(|v| {
                let x = v.as_f64() * norm;
                if x.is_nan() {
                    0
                } else {
                    x.round().clamp(0.0, 65535.0) as u16
                }
            })
            .collect();
        Self::new(h, w, data)
    }

    pub fn max_value(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let img = ImageU8::new(3, 2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let t: Tensor<f32> = img.to_tensor();
        assert_eq!(t.shape(), &[3, 2, 2]);
        assert_eq!(t.at3(1, 0, 0), (20.0f64 / 255.0) as f32);
        assert_eq!(ImageU8::from_tensor(&t).unwrap(), img);
        assert!(ImageU8::new(2, 1, 1, vec![0, 0]).is_err());
        assert!(ImageU8::new(1, 2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn depth_round_trip() {
        let d = DepthMap::new(2, 3, vec![0, 1, 500, 65535, 7, 9]).unwrap();
        let t: Tensor<f64> = d.to_tensor(1000.0);
        assert_eq!(DepthMap::from_tensor(&t, 1000.0).unwrap(), d);
        assert_eq!(d.max_value(), 65535);
    }
}

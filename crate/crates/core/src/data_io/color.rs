//! BT.601 studio-swing conversion (Y in 16..235, Cb/Cr in 16..240 on the
//! 8-bit scale). Tensors carry these values divided by 255.

use super::image::{quantize, ImageU8};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

/// Luma of one 8-bit RGB triple on the 0..255 scale.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    (65.481 * r + 128.553 * g + 24.966 * b) / 255.0 + 16.0
}

/// `(Y, Cb, Cr)` on the 0..255 scale.
pub fn rgb_to_ycbcr_px(r: f64, g: f64, b: f64) -> [f64; 3] {
    let y = luma(r, g, b);
    let cb = 128.0 + (-37.797 * r - 74.203 * g + 112.0 * b) / 255.0;
    let cr = 128.0 + (112.0 * r - 93.786 * g - 18.214 * b) / 255.0;
    [y, cb, cr]
}

/// Inverse of [`rgb_to_ycbcr_px`], unclamped.
pub fn ycbcr_to_rgb_px(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let l = (y - 16.0) * 255.0 / 219.0;
    let pb = (cb - 128.0) * 255.0 / 224.0;
    let pr = (cr - 128.0) * 255.0 / 224.0;
    let r = l + 2.0 * (1.0 - KR) * pr;
    let b = l + 2.0 * (1.0 - KB) * pb;
    let g = l - (2.0 * KB * (1.0 - KB) * pb + 2.0 * KR * (1.0 - KR) * pr) / KG;
    [r, g, b]
}

/// `1×H×W` luma in `[0, 1]`. Gray images pass through as `v/255`.
pub fn rgb_to_y<T: Real>(img: &ImageU8) -> Tensor<T> {
    let (h, w) = (img.height, img.width);
    Tensor::from_fn3(1, h, w, |_, i, j| {
        let p = img.pixel(i, j);
        let v = match p {
            [g] => *g as f64,
            [r, g, b] => luma(*r as f64, *g as f64, *b as f64),
            _ => unreachable!("ImageU8 has 1 or 3 channels"),
        };
        T::of(v / 255.0)
    })
}

/// `3×H×W` YCbCr tensor in `[0, 1]`.
pub fn rgb_to_ycbcr<T: Real>(img: &ImageU8) -> Result<Tensor<T>> {
    if img.channels != 3 {
        return Err(Error::shape(format!(
            "YCbCr needs RGB input, got {} channels",
            img.channels
        )));
    }
    let mut out = Tensor::zeros([3, img.height, img.width]);
    for i in 0..img.height {
        for j in 0..img.width {
            let p = img.pixel(i, j);
            let ycc = rgb_to_ycbcr_px(p[0] as f64, p[1] as f64, p[2] as f64);
            for (c, v) in ycc.into_iter().enumerate() {
                out.set3(c, i, j, T::of(v / 255.0));
            }
        }
    }
    Ok(out)
}

/// Converts a `3×H×W` YCbCr tensor in `[0, 1]` back to 8-bit RGB.
pub fn ycbcr_to_rgb<T: Real>(t: &Tensor<T>) -> Result<ImageU8> {
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        return Err(Error::shape(format!(
            "YCbCr tensor needs 3 channels, got {c}"
        )));
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for i in 0..h {
        for j in 0..w {
            let px = |c| t.at3(c, i, j).as_f64() * 255.0;
            let rgb = ycbcr_to_rgb_px(px(0), px(1), px(2));
            data.extend(rgb.into_iter().map(quantize));
        }
    }
    ImageU8::new(3, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    #[test]
    fn white_and_black() {
        let white = ImageU8::filled(3, 1, 1, 255).unwrap();
        let black = ImageU8::filled(3, 1, 1, 0).unwrap();
        assert!((rgb_to_y::<f64>(&white).data()[0] - 235.0 / 255.0).abs() < 1e-12);
        assert!((rgb_to_y::<f64>(&black).data()[0] - 16.0 / 255.0).abs() < 1e-12);
        let gray = ImageU8::new(1, 1, 2, vec![0, 51]).unwrap();
        assert_eq!(rgb_to_y::<f64>(&gray).data(), &[0.0, 0.2]);
    }

    #[test]
    fn chroma_of_neutral_is_centered() {
        for v in [0.0, 100.0, 255.0] {
            let [_, cb, cr] = rgb_to_ycbcr_px(v, v, v);
            assert!((cb - 128.0).abs() < 1e-9 && (cr - 128.0).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_is_lossless_after_rounding() {
        let mut rng = SeededRng::new(5);
        let data: Vec<u8> = (0..3 * 16 * 16).map(|_| rng.below(256) as u8).collect();
        let img = ImageU8::new(3, 16, 16, data).unwrap();
        let t = rgb_to_ycbcr::<f64>(&img).unwrap();
        assert_eq!(ycbcr_to_rgb(&t).unwrap(), img);
        for p in 0..16 {
            let px = img.pixel(p, p);
            let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
            let want = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
            assert!((t.at3(0, p, p) * 255.0 - want).abs() < 1e-9);
        }
    }
}

use crate::data_io::bicubic_resize;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// An aligned low/high-resolution training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch<T: Real = f32> {
    pub lr: Tensor<T>,
    pub hr: Tensor<T>,
}

/// Copies the `h×w` window at `(i0, j0)`.
pub fn crop<T: Real>(x: &Tensor<T>, i0: usize, j0: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let (c, xh, xw) = x.dims3()?;
    if i0 + h > xh || j0 + w > xw {
        return Err(Error::shape(format!(
            "crop {h}x{w} at ({i0}, {j0}) outside {xh}x{xw}"
        )));
    }
    Ok(Tensor::from_fn3(c, h, w, |ch, i, j| {
        x.at3(ch, i0 + i, j0 + j)
    }))
}

/// Top-left `m×m` corners of a patch grid with the given stride.
pub fn patch_origins(h: usize, w: usize, m: usize, stride: usize) -> Vec<(usize, usize)> {
    if h < m || w < m || stride == 0 {
        return Vec::new();
    }
    let rows = (h - m) / stride + 1;
    let cols = (w - m) / stride + 1;
    (0..rows)
        .flat_map(|a| (0..cols).map(move |b| (a * stride, b * stride)))
        .collect()
}

/// Crops `hr` to a multiple of `scale`, bicubic-downsamples it and cuts the
/// low-resolution image into `m×m` patches, each paired with its
/// `(m·scale)×(m·scale)` high-resolution region. Too-small images give none.
pub fn extract_patches<T: Real>(
    hr: &Tensor<T>,
    scale: usize,
    m: usize,
    stride: usize,
) -> Result<Vec<Patch<T>>> {
    let (_, h, w) = hr.dims3()?;
    if scale == 0 {
        return Err(Error::shape("scale must be positive"));
    }
    let (lh, lw) = (h / scale, w / scale);
    if lh < m || lw < m || m == 0 {
        return Ok(Vec::new());
    }
    let hr = crop(hr, 0, 0, lh * scale, lw * scale)?;
    let lr = bicubic_resize(&hr, lh, lw)?;
    patch_origins(lh, lw, m, stride)
        .into_iter()
        .map(|(i, j)| {
            Ok(Patch {
                lr: crop(&lr, i, j, m, m)?,
                hr: crop(&hr, i * scale, j * scale, m * scale, m * scale)?,
            })
        })
        .collect()
}

/// Keeps every `factor`-th sample starting at the top-left. Dimensions that
/// are not multiples of `factor` are cropped first, with a warning.
pub fn depth_grid_sample<T: Real>(depth_hr: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = depth_hr.dims3()?;
    if factor == 0 || h < factor || w < factor {
        return Err(Error::shape(format!(
            "cannot grid-sample {h}x{w} by {factor}"
        )));
    }
    if h % factor != 0 || w % factor != 0 {
        log::warn!(
            "depth {h}x{w} not divisible by {factor}; cropping to {}x{}",
            h / factor * factor,
            w / factor * factor
        );
    }
    Ok(Tensor::from_fn3(c, h / factor, w / factor, |ch, i, j| {
        depth_hr.at3(ch, factor * i, factor * j)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::zero_upsample;
    use crate::tensor::SeededRng;

    fn img(h: usize, w: usize) -> Tensor<f64> {
        Tensor::uniform(
            [1, h, w],
            0.1,
            1.0,
            &mut SeededRng::new((h * 31 + w) as u64),
        )
    }

    #[test]
    fn counts() {
        assert_eq!(extract_patches(&img(16, 16), 2, 8, 4).unwrap().len(), 1);
        assert_eq!(extract_patches(&img(24, 16), 2, 8, 4).unwrap().len(), 2);
        assert!(extract_patches(&img(14, 16), 2, 8, 4).unwrap().is_empty());
        for (h, w, m, s) in [(40, 50, 8, 3), (33, 17, 4, 5), (20, 20, 10, 10)] {
            let rows = (0..).step_by(s).take_while(|i| i + m <= h / 2).count();
            let cols = (0..).step_by(s).take_while(|j| j + m <= w / 2).count();
            let n = rows * cols;
            let formula = ((h / 2 - m) / s + 1) * ((w / 2 - m) / s + 1);
            assert_eq!(n, formula);
            assert_eq!(extract_patches(&img(h, w), 2, m, s).unwrap().len(), formula);
        }
    }

    #[test]
    fn patches_are_aligned() {
        let hr = img(20, 24);
        let lr = bicubic_resize(&hr, 10, 12).unwrap();
        let p = extract_patches(&hr, 2, 4, 3).unwrap();
        let origins = patch_origins(10, 12, 4, 3);
        assert_eq!(p.len(), origins.len());
        for (pp, &(i, j)) in p.iter().zip(&origins) {
            assert_eq!(pp.lr.shape(), &[1, 4, 4]);
            assert_eq!(pp.hr.shape(), &[1, 8, 8]);
            assert_eq!(pp.lr.at3(0, 1, 2), lr.at3(0, i + 1, j + 2));
            assert_eq!(pp.hr.at3(0, 5, 7), hr.at3(0, 2 * i + 5, 2 * j + 7));
        }
    }

    #[test]
    fn grid_sampling() {
        let x = img(8, 12);
        assert_eq!(depth_grid_sample(&x, 1).unwrap(), x);
        let ramp = Tensor::<f64>::from_fn3(1, 4, 4, |_, i, j| (4 * i + j) as f64);
        assert_eq!(
            depth_grid_sample(&ramp, 2).unwrap().data(),
            &[0.0, 2.0, 8.0, 10.0]
        );
        let odd = img(9, 13);
        assert_eq!(depth_grid_sample(&odd, 4).unwrap().shape(), &[1, 2, 3]);
    }

    #[test]
    fn zero_upsample_round_trip_marks_samples() {
        let x = img(12, 8);
        let back = zero_upsample(&depth_grid_sample(&x, 4).unwrap(), 4).unwrap();
        for i in 0..12 {
            for j in 0..8 {
                let sampled = i % 4 == 0 && j % 4 == 0;
                assert_eq!(back.at3(0, i, j) != 0.0, sampled);
                if sampled {
                    assert_eq!(back.at3(0, i, j), x.at3(0, i, j));
                }
            }
        }
    }
}

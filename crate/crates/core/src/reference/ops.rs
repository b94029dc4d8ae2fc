use super::params::{DeconvParams, Mask};
use super::MacCounter;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, Real, Tensor};

/// Inserts `S−1` zeros between adjacent samples and after the last row and
/// column: `out[c,i,j] = X[c,i/S,j/S]` when both `i` and `j` are multiples
/// of `S`, else `0`.
pub fn zero_upsample<T: Real>(x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    if stride == 0 {
        return Err(Error::param("zero_upsample: stride must be at least 1"));
    }
    let (c, h, w) = x.dims3()?;
    let mut out = Tensor::zeros([c, h * stride, w * stride]);
    for ci in 0..c {
        for i in 0..h * stride {
            for j in 0..w * stride {
                if i % stride == 0 && j % stride == 0 {
                    out.set3(ci, i, j, x.at3(ci, i / stride, j / stride));
                }
            }
        }
    }
    Ok(out)
}

/// Bilinear upscaling where output `(i, j)` samples input coordinate
/// `(i/S, j/S)`; the right/bottom neighbour clamps to the last sample.
/// Grid points `(S·i, S·j)` reproduce the input exactly.
pub fn bilinear_upsample<T: Real>(x: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    bilinear_upsample_counted(x, stride, &mut MacCounter::default())
}

/// [`bilinear_upsample`] counting four multiply-adds per output element
/// when `S > 1` (the `S = 1` case is a copy).
pub fn bilinear_upsample_counted<T: Real>(
    x: &Tensor<T>,
    stride: usize,
    counter: &mut MacCounter,
) -> Result<Tensor<T>> {
    if stride == 0 {
        return Err(Error::param("bilinear_upsample: stride must be at least 1"));
    }
    if stride == 1 {
        return Ok(x.clone());
    }
    let (c, h, w) = x.dims3()?;
    let s = T::of(stride as f64);
    let out = Tensor::from_fn3(c, h * stride, w * stride, |ci, i, j| {
        let (i0, j0) = (i / stride, j / stride);
        let (i1, j1) = ((i0 + 1).min(h - 1), (j0 + 1).min(w - 1));
        let fi = T::of((i % stride) as f64) / s;
        let fj = T::of((j % stride) as f64) / s;
        let one = T::one();
        (one - fi) * (one - fj) * x.at3(ci, i0, j0)
            + (one - fi) * fj * x.at3(ci, i0, j1)
            + fi * (one - fj) * x.at3(ci, i1, j0)
            + fi * fj * x.at3(ci, i1, j1)
    });
    counter.add(4 * out.len());
    Ok(out)
}

/// Validity mask of an `H×W` map zero-upsampled by `S`.
pub fn make_mask<T: Real>(h: usize, w: usize, stride: usize) -> Result<Mask<T>> {
    if stride == 0 {
        return Err(Error::param("make_mask: stride must be at least 1"));
    }
    let (oh, ow) = (h * stride, w * stride);
    let mut data = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            data.push(if i % stride == 0 && j % stride == 0 {
                T::zero()
            } else {
                T::neg_infinity()
            });
        }
    }
    Ok(Mask {
        grid: Tensor::new([oh, ow], data)?,
        stride,
    })
}

/// `conv2d(zero_upsample(X, S), W, (K−1)/2)`: output is exactly `S·H × S·W`.
pub fn transposed_conv2d<T: Real>(x: &Tensor<T>, p: &DeconvParams<T>) -> Result<Tensor<T>> {
    transposed_conv2d_counted(x, p, &mut MacCounter::default())
}

/// [`transposed_conv2d`] that also counts the multiply-adds whose input
/// sample is a real (not inserted-zero, not padding) position.
pub fn transposed_conv2d_counted<T: Real>(
    x: &Tensor<T>,
    p: &DeconvParams<T>,
    counter: &mut MacCounter,
) -> Result<Tensor<T>> {
    p.validate()?;
    let (c_in, h, w) = x.dims3()?;
    let (c_out, wc_in, _, _) = p.w.dims4()?;
    if wc_in != c_in {
        return Err(Error::shape(format!(
            "transposed_conv2d: input has {c_in} channels, kernel expects {wc_in}"
        )));
    }
    let s = p.stride;
    let r = (p.kernel - 1) / 2;
    let (oh, ow) = (h * s, w * s);
    for i in 0..oh {
        for j in 0..ow {
            for ki in 0..p.kernel {
                for kj in 0..p.kernel {
                    let (a, b) = (i + ki, j + kj);
                    if a < r || b < r || a - r >= oh || b - r >= ow {
                        continue;
                    }
                    if (a - r).is_multiple_of(s) && (b - r).is_multiple_of(s) {
                        counter.add(c_in * c_out);
                    }
                }
            }
        }
    }
    conv2d(&zero_upsample(x, s)?, &p.w, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    #[test]
    fn zero_upsample_examples() {
        let x = Tensor::<f32>::new([1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(zero_upsample(&x, 1).unwrap(), x);
        let up = zero_upsample(&x, 2).unwrap();
        assert_eq!(
            up.data(),
            &[1., 0., 2., 0., 0., 0., 0., 0., 3., 0., 4., 0., 0., 0., 0., 0.]
        );
        assert!(zero_upsample(&x, 0).is_err());
    }

    #[test]
    fn zero_upsample_matches_indexing_oracle() {
        let mut rng = SeededRng::new(11);
        let x = Tensor::<f64>::uniform([3, 4, 5], -1.0, 1.0, &mut rng);
        let up = zero_upsample(&x, 3).unwrap();
        assert_eq!(up.shape(), &[3, 12, 15]);
        for c in 0..3 {
            for i in 0..12 {
                for j in 0..15 {
                    let want = if i % 3 == 0 && j % 3 == 0 {
                        x.at3(c, i / 3, j / 3)
                    } else {
                        0.0
                    };
                    assert_eq!(up.at3(c, i, j), want);
                }
            }
        }
        let l1 = |t: &Tensor<f64>| t.data().iter().map(|v| v.abs()).sum::<f64>();
        assert_eq!(l1(&up), l1(&x));
    }

    #[test]
    fn mask_examples() {
        let m = make_mask::<f32>(2, 2, 2).unwrap();
        assert_eq!(m.grid.shape(), &[4, 4]);
        for i in 0..4 {
            for j in 0..4 {
                let open = [(0, 0), (0, 2), (2, 0), (2, 2)].contains(&(i, j));
                assert_eq!(m.is_open(i, j), open);
                if !open {
                    assert_eq!(m.value(i, j), f32::NEG_INFINITY);
                }
            }
        }
        let m1 = make_mask::<f32>(3, 4, 1).unwrap();
        assert!(m1.grid.data().iter().all(|&v| v == 0.0));

        let m = make_mask::<f64>(3, 5, 4).unwrap();
        let mut count = 0;
        for i in 0..12 {
            for j in 0..20 {
                if m.grid.at2(i, j) == 0.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 15);
        assert_eq!(m.count_open(), 15);
    }

    #[test]
    fn bilinear_examples() {
        let mut rng = SeededRng::new(12);
        let x = Tensor::<f64>::uniform([2, 3, 4], -1.0, 1.0, &mut rng);
        assert_eq!(bilinear_upsample(&x, 1).unwrap(), x);

        let c = Tensor::<f64>::full([1, 3, 3], 0.7);
        let up = bilinear_upsample(&c, 3).unwrap();
        assert!(up.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));

        let ramp = Tensor::<f64>::new([1, 1, 4], vec![0., 1., 2., 3.]).unwrap();
        let up = bilinear_upsample(&ramp, 2).unwrap();
        // Second row clamps back onto the single input row.
        let want = [0., 0.5, 1., 1.5, 2., 2.5, 3., 3.];
        assert_eq!(up.shape(), &[1, 2, 8]);
        for r in 0..2 {
            for (j, w) in want.iter().enumerate() {
                assert!((up.at3(0, r, j) - w).abs() < 1e-15);
            }
        }

        let up = bilinear_upsample(&x, 3).unwrap();
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    assert_eq!(up.at3(c, 3 * i, 3 * j), x.at3(c, i, j));
                }
            }
        }
    }

    #[test]
    fn transposed_conv_examples() {
        let mut rng = SeededRng::new(13);
        let x = Tensor::<f64>::uniform([2, 3, 3], -1.0, 1.0, &mut rng);
        let p1 = DeconvParams::<f64>::init(2, 3, 3, 1, &mut rng).unwrap();
        assert_eq!(
            transposed_conv2d(&x, &p1).unwrap(),
            conv2d(&x, &p1.w, 1).unwrap()
        );

        let scalar = DeconvParams {
            w: Tensor::<f64>::new([1, 1, 1, 1], vec![2.0]).unwrap(),
            stride: 2,
            kernel: 1,
        };
        let x1 = Tensor::<f64>::uniform([1, 3, 3], -1.0, 1.0, &mut rng);
        assert_eq!(
            transposed_conv2d(&x1, &scalar).unwrap(),
            zero_upsample(&x1, 2).unwrap().scale(2.0)
        );

        // Zero-insert-then-convolve written out by hand.
        let p = DeconvParams::<f64>::init(2, 2, 3, 2, &mut rng).unwrap();
        let y = transposed_conv2d(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        for o in 0..2 {
            for i in 0..6isize {
                for j in 0..6isize {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ki in 0..3isize {
                            for kj in 0..3isize {
                                let (a, b) = (i + ki - 1, j + kj - 1);
                                if a < 0 || b < 0 || a >= 6 || b >= 6 || a % 2 != 0 || b % 2 != 0 {
                                    continue;
                                }
                                acc += p.w.data()
                                    [((o * 2 + c) * 3 + ki as usize) * 3 + kj as usize]
                                    * x.at3(c, (a / 2) as usize, (b / 2) as usize);
                            }
                        }
                    }
                    assert!((y.at3(o, i as usize, j as usize) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_conv_of_zero_upsample_bit_exact() {
        let mut rng = SeededRng::new(14);
        for s in 1..4 {
            let x = Tensor::<f32>::uniform([3, 4, 5], -1.0, 1.0, &mut rng);
            let p = DeconvParams::<f32>::init(3, 2, 5, s, &mut rng).unwrap();
            let a = transposed_conv2d(&x, &p).unwrap();
            let b = conv2d(&zero_upsample(&x, s).unwrap(), &p.w, 2).unwrap();
            assert_eq!(a, b);
        }
    }
}

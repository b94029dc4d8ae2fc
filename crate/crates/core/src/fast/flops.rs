//! Closed-form multiply-add counts.
//!
//! One multiply-add is counted per product that reaches an output. Taps on
//! padding or inserted zeros are not counted; bilinear interpolation costs
//! four multiply-adds per output element when `S > 1`.

/// Pairs `(i, a)` with output index `i ∈ [0, S·n)` and input index
/// `a ∈ [0, n)` such that `|i − S·a| ≤ (K−1)/2`.
pub fn axis_pairs(n_in: usize, stride: usize, kernel: usize) -> u64 {
    let r = (kernel.saturating_sub(1) / 2) as isize;
    let s = stride as isize;
    let last = (stride * n_in) as isize - 1;
    (0..n_in as isize)
        .map(|a| ((s * a + r).min(last) - (s * a - r).max(0) + 1).max(0) as u64)
        .sum()
}

/// Multiply-adds of one attention upsampling layer on a `C_in×H×W` input:
/// three projections, the query interpolation, then `C_out` for the logit
/// and `C_out` for the value sum of every unmasked in-image neighbour.
pub fn attention_upsample_macs(
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    stride: usize,
    kernel: usize,
) -> u64 {
    let (c_in, c_out) = (c_in as u64, c_out as u64);
    let hw = (h * w) as u64;
    let s2 = (stride * stride) as u64;
    let interp = if stride > 1 { 4 * c_out * s2 * hw } else { 0 };
    let pairs = axis_pairs(h, stride, kernel) * axis_pairs(w, stride, kernel);
    3 * c_in * c_out * hw + interp + 2 * c_out * pairs
}

/// Multiply-adds of a stride-`S` transposed convolution, counting only
/// taps on real input samples.
pub fn deconv_macs(
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    stride: usize,
    kernel: usize,
) -> u64 {
    (c_in * c_out) as u64 * axis_pairs(h, stride, kernel) * axis_pairs(w, stride, kernel)
}

/// Multiply-adds of a stride-1 same-padded `K×K` convolution.
pub fn conv_macs(c_in: usize, c_out: usize, h: usize, w: usize, kernel: usize) -> u64 {
    (c_in * c_out) as u64 * axis_pairs(h, 1, kernel) * axis_pairs(w, 1, kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{
        attention_upsample_counted, transposed_conv2d_counted, AttnUpsampleParams, DeconvParams,
        MacCounter,
    };
    use crate::tensor::{SeededRng, Tensor};

    fn brute_pairs(n: usize, s: usize, k: usize) -> u64 {
        let r = (k as isize - 1) / 2;
        let mut count = 0;
        for i in 0..(n * s) as isize {
            for a in 0..n as isize {
                if (i - s as isize * a).abs() <= r {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn axis_pairs_brute_force() {
        for n in 1..6 {
            for s in 1..5 {
                for k in [1, 3, 5, 7, 9] {
                    assert_eq!(
                        axis_pairs(n, s, k),
                        brute_pairs(n, s, k),
                        "n={n} s={s} k={k}"
                    );
                }
            }
        }
        // Interior output rows see 1 or 2 samples at S=2, K=3.
        assert_eq!(axis_pairs(4, 2, 3), 11);
    }

    #[test]
    fn formulas_match_counted_reference() {
        let mut rng = SeededRng::new(60);
        for &(ci, co, h, w, s, k) in &[(3, 4, 4, 5, 2, 3), (2, 2, 3, 3, 1, 3), (2, 6, 3, 2, 4, 7)] {
            let x = Tensor::<f64>::uniform([ci, h, w], -1.0, 1.0, &mut rng);
            let p = AttnUpsampleParams::init(ci, co, k, s, &mut rng).unwrap();
            let mut c = MacCounter::default();
            attention_upsample_counted(&x, &p, &mut c).unwrap();
            assert_eq!(c.macs, attention_upsample_macs(ci, co, h, w, s, k));

            let d = DeconvParams::init(ci, co, k, s, &mut rng).unwrap();
            let mut c = MacCounter::default();
            transposed_conv2d_counted(&x, &d, &mut c).unwrap();
            assert_eq!(c.macs, deconv_macs(ci, co, h, w, s, k));
        }
    }
}

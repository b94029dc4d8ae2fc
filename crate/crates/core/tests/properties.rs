use attnup::autodiff::ParamSet;
use attnup::data_io::{
    bicubic_resize, bicubic_upsample_anchored, decode_pgm16, decode_png, encode_pgm16, encode_png,
    DepthMap, ImageU8,
};
use attnup::fast::flops::{attention_upsample_macs, deconv_macs};
use attnup::fast::{
    attention_upsample_fast, conv2d_backward, conv2d_fast, transposed_conv2d_backward,
    transposed_conv2d_fast,
};
use attnup::models::{read_checkpoint, write_checkpoint};
use attnup::par::Exec;
use attnup::reference::{
    attention_upsample, attention_upsample_counted, transposed_conv2d, transposed_conv2d_counted,
    AttnUpsampleParams, DeconvParams, MacCounter,
};
use attnup::tensor::{conv2d, max_rel_err};
use attnup::{SeededRng, Tensor};
use proptest::prelude::*;

/// `(C, S, K, H, W, seed)` with `K ≥ 2S − 1`.
fn geometry() -> impl Strategy<Value = (usize, usize, usize, usize, usize, u64)> {
    (
        prop::sample::select(vec![2usize, 4, 6]),
        prop::sample::select(vec![1usize, 2, 4]),
        0usize..3,
        2usize..9,
        2usize..9,
        any::<u64>(),
    )
        .prop_map(|(c, s, extra, h, w, seed)| {
            let k = (2 * s - 1).max(3) + 2 * extra;
            (c, s, k, h, w, seed)
        })
}

fn setup(
    c: usize,
    s: usize,
    k: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> (Tensor<f32>, AttnUpsampleParams<f32>) {
    let mut rng = SeededRng::new(seed);
    let x = Tensor::uniform([c, h, w], -1.0, 1.0, &mut rng);
    let p = AttnUpsampleParams::init(c, c, k, s, &mut rng).unwrap();
    (x, p)
}

/// `w · x` at every pixel, the value projection at input resolution.
fn values(x: &Tensor<f32>, p: &AttnUpsampleParams<f32>) -> Tensor<f64> {
    let (c_in, h, w) = x.dims3().unwrap();
    let c = p.w_v.shape()[0];
    let mut v = Tensor::<f64>::zeros([c, h, w]);
    for o in 0..c {
        for i in 0..h {
            for j in 0..w {
                let s: f64 = (0..c_in)
                    .map(|ci| p.w_v.at2(o, ci) as f64 * x.at3(ci, i, j) as f64)
                    .sum();
                v.set3(o, i, j, s);
            }
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fast_attention_matches_reference((c, s, k, h, w, seed) in geometry()) {
        let (x, p) = setup(c, s, k, h, w, seed);
        let r = attention_upsample(&x, &p).unwrap();
        let f = attention_upsample_fast(&x, &p).unwrap();
        prop_assert_eq!(r.shape(), &[c, s * h, s * w][..]);
        prop_assert!(max_rel_err(&f, &r) < 1e-4);
    }

    #[test]
    fn fast_deconv_matches_reference((c, s, k, h, w, seed) in geometry()) {
        let mut rng = SeededRng::new(seed);
        let x = Tensor::<f32>::uniform([c, h, w], -1.0, 1.0, &mut rng);
        let p = DeconvParams::init(c, c + 1, k, s, &mut rng).unwrap();
        let r = transposed_conv2d(&x, &p).unwrap();
        let f = transposed_conv2d_fast(&x, &p).unwrap();
        prop_assert!(max_rel_err(&f, &r) < 1e-4);
    }

    #[test]
    fn deconv_gradients_are_adjoint((c, s, k, h, w, seed) in geometry()) {
        let mut rng = SeededRng::new(seed);
        let x = Tensor::<f64>::uniform([c, h, w], -1.0, 1.0, &mut rng);
        let p = DeconvParams::<f64>::init(c, 3, k, s, &mut rng).unwrap();
        let dy = Tensor::<f64>::uniform([3, s * h, s * w], -1.0, 1.0, &mut rng);
        let y = transposed_conv2d_fast(&x, &p).unwrap();
        let (dx, dw) = transposed_conv2d_backward(&x, &p, &dy).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>();
        let yy = dot(&y, &dy);
        prop_assert!((dot(&x, &dx) - yy).abs() < 1e-9 * (1.0 + yy.abs()));
        prop_assert!((dot(&p.w, &dw) - yy).abs() < 1e-9 * (1.0 + yy.abs()));
    }

    #[test]
    fn banded_conv_matches_direct_conv(
        (ci, co) in (1usize..5, 1usize..7),
        k in prop::sample::select(vec![1usize, 3, 5]),
        (h, w) in (3usize..40, 3usize..70),
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let x = Tensor::<f32>::uniform([ci, h, w], -1.0, 1.0, &mut rng);
        let wt = Tensor::<f32>::uniform([co, ci, k, k], -1.0, 1.0, &mut rng);
        for pad in [0, k / 2] {
            if k > h + 2 * pad || k > w + 2 * pad {
                continue;
            }
            let a = conv2d(&x, &wt, pad).unwrap();
            let b = conv2d_fast(&x, &wt, pad).unwrap();
            prop_assert_eq!(a.shape(), b.shape());
            prop_assert!(max_rel_err(&b, &a) < 1e-6);
        }
    }

    #[test]
    fn conv_gradients_are_adjoint(
        (ci, co) in (1usize..4, 1usize..4),
        k in prop::sample::select(vec![1usize, 3, 5]),
        (h, w) in (3usize..40, 3usize..70),
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let pad = k / 2;
        let x = Tensor::<f64>::uniform([ci, h, w], -1.0, 1.0, &mut rng);
        let wt = Tensor::<f64>::uniform([co, ci, k, k], -1.0, 1.0, &mut rng);
        let y = conv2d_fast(&x, &wt, pad).unwrap();
        let dy = Tensor::<f64>::uniform(y.shape().to_vec(), -1.0, 1.0, &mut rng);
        let (dx, dw) = conv2d_backward(&x, &wt, pad, &dy).unwrap();
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum::<f64>();
        let yy = dot(&y, &dy);
        prop_assert!((dot(&x, &dx) - yy).abs() < 1e-9 * (1.0 + yy.abs()));
        prop_assert!((dot(&wt, &dw) - yy).abs() < 1e-9 * (1.0 + yy.abs()));
    }

    #[test]
    fn outputs_are_convex_combinations_of_values((c, s, k, h, w, seed) in geometry()) {
        let (x, p) = setup(c, s, k, h, w, seed);
        let v = values(&x, &p);
        let out = attention_upsample(&x, &p).unwrap();
        for o in 0..c {
            let plane = &v.data()[o * h * w..(o + 1) * h * w];
            let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in 0..s * h {
                for j in 0..s * w {
                    let y = out.at3(o, i, j) as f64;
                    prop_assert!(y >= lo - 1e-5 && y <= hi + 1e-5, "{y} outside [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn constant_input_passes_through((c, s, k, h, w, seed) in geometry()) {
        let (_, p) = setup(c, s, k, h, w, seed);
        let level: Vec<f32> = (0..c).map(|ci| 0.3 - 0.1 * ci as f32).collect();
        let x = Tensor::new([c, h, w], (0..c * h * w).map(|n| level[n / (h * w)]).collect()).unwrap();
        let v = values(&x, &p);
        let out = attention_upsample_fast(&x, &p).unwrap();
        for o in 0..c {
            let want = v.at3(o, 0, 0);
            for y in &out.data()[o * s * h * s * w..(o + 1) * s * h * s * w] {
                prop_assert!((*y as f64 - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn input_channel_order_is_irrelevant((c, s, k, h, w, seed) in geometry(), rot in 1usize..6) {
        let (x, p) = setup(c, s, k, h, w, seed);
        let perm: Vec<usize> = (0..c).map(|ci| (ci + rot) % c).collect();
        let xp = Tensor::new([c, h, w], (0..c * h * w).map(|n| {
            let (ci, r) = (n / (h * w), n % (h * w));
            x.data()[perm[ci] * h * w + r]
        }).collect()).unwrap();
        let mut pp = p.clone();
        for wt in [&mut pp.w_q, &mut pp.w_k, &mut pp.w_v] {
            let src = wt.clone();
            for o in 0..c {
                for (ci, &from) in perm.iter().enumerate() {
                    wt.data_mut()[o * c + ci] = src.at2(o, from);
                }
            }
        }
        let a = attention_upsample(&x, &p).unwrap();
        let b = attention_upsample(&xp, &pp).unwrap();
        prop_assert!(max_rel_err(&b, &a) < 1e-5);
    }

    #[test]
    fn thread_count_does_not_change_bits((c, s, k, h, w, seed) in geometry()) {
        let (x, p) = setup(c, s, k, h, w, seed);
        let d = DeconvParams::init(c, c, k, s, &mut SeededRng::new(seed ^ 1)).unwrap();
        let run = |t: usize| Exec::new(t).install(|| {
            (attention_upsample_fast(&x, &p).unwrap(), transposed_conv2d_fast(&x, &d).unwrap())
        });
        prop_assert_eq!(run(1), run(3));
    }

    #[test]
    fn closed_form_macs_match_counted_loops((c, s, k, h, w, seed) in geometry(), c_out in 1usize..4) {
        let c_out = 2 * c_out;
        let mut rng = SeededRng::new(seed);
        let x = Tensor::<f32>::uniform([c, h, w], -1.0, 1.0, &mut rng);
        let mut m = MacCounter::default();
        attention_upsample_counted(&x, &AttnUpsampleParams::init(c, c_out, k, s, &mut rng).unwrap(), &mut m).unwrap();
        prop_assert_eq!(m.macs, attention_upsample_macs(c, c_out, h, w, s, k));
        let mut m = MacCounter::default();
        transposed_conv2d_counted(&x, &DeconvParams::init(c, c_out, k, s, &mut rng).unwrap(), &mut m).unwrap();
        prop_assert_eq!(m.macs, deconv_macs(c, c_out, h, w, s, k));
    }

    #[test]
    fn png_round_trips(gray in any::<bool>(), h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let ch = if gray { 1 } else { 3 };
        let mut rng = SeededRng::new(seed);
        let img = ImageU8::new(ch, h, w, (0..ch * h * w).map(|_| rng.below(256) as u8).collect()).unwrap();
        prop_assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn pgm_round_trips(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let d = DepthMap::new(h, w, (0..h * w).map(|_| rng.below(65536) as u16).collect()).unwrap();
        prop_assert_eq!(decode_pgm16(&encode_pgm16(&d)).unwrap(), d);
    }

    #[test]
    fn checkpoints_round_trip(n in 1usize..5, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let mut ps = ParamSet::<f32>::new();
        for i in 0..n {
            let shape: Vec<usize> = (0..1 + rng.below(3)).map(|_| 1 + rng.below(4)).collect();
            ps.add(format!("layer{i}.w"), Tensor::uniform(shape, -3.0, 3.0, &mut rng)).unwrap();
        }
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &ps).unwrap();
        prop_assert_eq!(read_checkpoint(&bytes[..]).unwrap(), ps);
    }

    #[test]
    fn bicubic_keeps_constants(h in 2usize..12, w in 2usize..12, oh in 1usize..24, ow in 1usize..24, v in -2.0f64..2.0) {
        let x = Tensor::<f64>::full([2, h, w], v);
        let y = bicubic_resize(&x, oh, ow).unwrap();
        prop_assert_eq!(y.shape(), &[2, oh, ow][..]);
        for &u in y.data() {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn anchored_upsampling_hits_the_samples(h in 2usize..8, w in 2usize..8, f in prop::sample::select(vec![2usize, 4, 8]), seed in any::<u64>()) {
        let x = Tensor::<f64>::uniform([1, h, w], 0.0, 1.0, &mut SeededRng::new(seed));
        let y = bicubic_upsample_anchored(&x, f).unwrap();
        for i in 0..h {
            for j in 0..w {
                prop_assert!((y.at3(0, f * i, f * j) - x.at3(0, i, j)).abs() < 1e-12);
            }
        }
    }
}

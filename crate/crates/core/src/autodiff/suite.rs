//! The default gradient-check suite: every differentiable operator, the
//! attention compositions, and small SISR / joint models.

use super::gradcheck::{finite_diff_check, GradcheckConfig, GradcheckReport};
use super::params::ParamSet;
use super::tape::{AttnVars, Tape, Var};
use crate::error::Result;
use crate::models::{JointModel, JointSpec, Network, SisrModel, SisrSpec, UpsampleKind};
use crate::par;
use crate::tensor::{SeededRng, Tensor};

type Build = Box<dyn Fn(&mut Tape<'_, f64>) -> Result<Var> + Send + Sync>;

/// One named composite with its `f64` parameters.
pub struct GradCase {
    pub name: &'static str,
    pub params: ParamSet<f64>,
    build: Build,
}

impl GradCase {
    pub fn check(&self, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
        finite_diff_check(self.name, &self.params, &self.build, cfg)
    }
}

fn rand(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, rng)
}

fn case<const N: usize>(
    name: &'static str,
    tensors: [(&str, Tensor<f64>); N],
    f: impl Fn(&mut Tape<'_, f64>, [Var; N]) -> Result<Var> + Send + Sync + 'static,
) -> GradCase {
    let mut params = ParamSet::new();
    let ids: Vec<_> = tensors
        .into_iter()
        .map(|(n, t)| params.add(n, t).expect("unique names"))
        .collect();
    let build: Build = Box::new(move |tape: &mut Tape<'_, f64>| {
        let mut vars = [Var::default(); N];
        for (v, &id) in vars.iter_mut().zip(&ids) {
            *v = tape.param(id)?;
        }
        f(tape, vars)
    });
    GradCase {
        name,
        params,
        build,
    }
}

fn attn(vars: &[Var]) -> AttnVars {
    AttnVars {
        w_q: vars[0],
        w_k: vars[1],
        w_v: vars[2],
        pos_x: vars[3],
        pos_y: vars[4],
    }
}

/// Builds the suite deterministically from `seed`.
pub fn default_suite(seed: u64) -> Vec<GradCase> {
    let mut rng = SeededRng::new(seed);
    let r = &mut rng;
    let mut cases = vec![
        case(
            "conv2d",
            [("x", rand(&[2, 5, 4], r)), ("w", rand(&[3, 2, 3, 3], r))],
            |t, [x, w]| t.conv2d(x, w, 1),
        ),
        case(
            "conv1x1",
            [("x", rand(&[3, 4, 4], r)), ("w", rand(&[2, 3], r))],
            |t, [x, w]| t.conv1x1(x, w),
        ),
        case("zero_upsample", [("x", rand(&[2, 3, 3], r))], |t, [x]| {
            t.zero_upsample(x, 3)
        }),
        case(
            "bilinear_upsample",
            [("x", rand(&[2, 3, 4], r))],
            |t, [x]| t.bilinear(x, 2),
        ),
        case(
            "transposed_conv2d",
            [("x", rand(&[2, 3, 3], r)), ("w", rand(&[3, 2, 3, 3], r))],
            |t, [x, w]| t.deconv(x, w, 2),
        ),
        case(
            "softmax_window",
            [
                ("q", rand(&[2, 4, 4], r)),
                ("k", rand(&[2, 4, 4], r)),
                ("v", rand(&[1, 4, 4], r)),
                ("pos_x", rand(&[3, 1], r)),
                ("pos_y", rand(&[3, 1], r)),
            ],
            |t, [q, k, v, px, py]| t.window_attention(q, k, v, px, py, 3, 1, 0.5),
        ),
        case(
            "window_attention_s2",
            [
                ("q", rand(&[4, 6, 6], r)),
                ("k", rand(&[4, 3, 3], r)),
                ("v", rand(&[3, 3, 3], r)),
                ("pos_x", rand(&[5, 2], r)),
                ("pos_y", rand(&[5, 2], r)),
            ],
            |t, [q, k, v, px, py]| t.window_attention(q, k, v, px, py, 5, 2, 0.5),
        ),
        case(
            "attention_conv",
            [
                ("x", rand(&[3, 4, 4], r)),
                ("w_q", rand(&[4, 3], r)),
                ("w_k", rand(&[4, 3], r)),
                ("w_v", rand(&[4, 3], r)),
                ("pos_x", rand(&[3, 2], r)),
                ("pos_y", rand(&[3, 2], r)),
            ],
            |t, [x, a, b, c, d, e]| t.attention_upsample(x, attn(&[a, b, c, d, e]), 3, 1, 0.5),
        ),
        case(
            "attention_upsample",
            [
                ("x", rand(&[2, 3, 3], r)),
                ("w_q", rand(&[2, 2], r)),
                ("w_k", rand(&[2, 2], r)),
                ("w_v", rand(&[2, 2], r)),
                ("pos_x", rand(&[3, 1], r)),
                ("pos_y", rand(&[3, 1], r)),
            ],
            |t, [x, a, b, c, d, e]| {
                t.attention_upsample(x, attn(&[a, b, c, d, e]), 3, 2, 1.0 / 2f64.sqrt())
            },
        ),
        case(
            "attention_joint_upsample",
            [
                ("x_lr", rand(&[2, 3, 3], r)),
                ("guide", rand(&[3, 6, 6], r)),
                ("w_q", rand(&[4, 3], r)),
                ("w_k", rand(&[4, 3], r)),
                ("w_v", rand(&[4, 2], r)),
                ("pos_x", rand(&[3, 2], r)),
                ("pos_y", rand(&[3, 2], r)),
            ],
            |t, [x, g, a, b, c, d, e]| t.attention_joint(x, g, attn(&[a, b, c, d, e]), 3, 2, 0.5),
        ),
        case("relu", [("x", rand(&[2, 4, 4], r))], |t, [x]| t.relu(x)),
        case(
            "prelu",
            [("x", rand(&[3, 4, 4], r)), ("a", rand(&[3], r))],
            |t, [x, a]| t.prelu(x, a),
        ),
        case("avg_pool", [("x", rand(&[2, 4, 6], r))], |t, [x]| {
            t.avg_pool(x, 2)
        }),
        case("subsample", [("x", rand(&[2, 4, 6], r))], |t, [x]| {
            t.subsample(x, 2)
        }),
        case(
            "concat_narrow_add",
            [("a", rand(&[2, 3, 3], r)), ("b", rand(&[3, 3, 3], r))],
            |t, [a, b]| {
                let c = t.concat(&[a, b])?;
                let n = t.narrow(c, 1, 2)?;
                let m = t.narrow(c, 3, 2)?;
                t.add(n, m)
            },
        ),
    ];

    for kind in [UpsampleKind::Attention, UpsampleKind::Deconv] {
        let spec = SisrSpec::new(2, 4, kind);
        let (model, ps) = SisrModel::init(spec, &mut rng.fork(kind as u64)).expect("valid spec");
        let x = rand(&[1, 6, 6], &mut rng);
        cases.push(GradCase {
            name: match kind {
                UpsampleKind::Attention => "sisr_micro_attention",
                UpsampleKind::Deconv => "sisr_micro_deconv",
            },
            params: ps.cast(),
            build: Box::new(move |t| {
                let xv = t.input(x.clone());
                model.forward(t, &[xv])
            }),
        });
    }

    let spec = JointSpec {
        factor: 2,
        guide_channels: 3,
        tg_channels: vec![4, 4],
        tg_kernels: vec![3, 1],
        f_channels: vec![4],
        f_kernel: 3,
        m_channels: vec![8],
        m_kernel: 3,
        attn_kernel: 3,
        share_mixer: false,
        scale_logits: true,
    };
    let (model, ps) = JointModel::init(spec, &mut rng.fork(7)).expect("valid spec");
    let target = Tensor::uniform([1, 3, 3], 0.0, 1.0, &mut rng);
    let guide = Tensor::uniform([3, 6, 6], 0.0, 1.0, &mut rng);
    cases.push(GradCase {
        name: "joint_micro",
        params: ps.cast(),
        build: Box::new(move |t| {
            let tv = t.input(target.clone());
            let gv = t.input(guide.clone());
            model.forward(t, &[tv, gv])
        }),
    });
    cases
}

/// Runs every case of [`default_suite`]; cases run concurrently.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<Vec<GradcheckReport>> {
    let cases = default_suite(cfg.seed);
    par::map_indices(cases.len(), |i| cases[i].check(cfg))
        .into_iter()
        .collect()
}

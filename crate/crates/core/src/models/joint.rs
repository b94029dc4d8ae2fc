use super::{expect_param, he_uniform, lecun_uniform, Network};
use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, SeededRng, Tensor};

/// Guided upsampling network: feature CNNs on the target and guide, a
/// chain of ×2 masked attention stages whose queries and keys come from a
/// mixing CNN, and a final CNN to one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSpec {
    /// Overall factor `M = 2^stages`.
    pub factor: usize,
    pub guide_channels: usize,
    /// Widths of CNN_T and CNN_G; the last entry is the attention width `F`.
    pub tg_channels: Vec<usize>,
    pub tg_kernels: Vec<usize>,
    /// Hidden widths of CNN_F; a final one-channel conv is appended.
    pub f_channels: Vec<usize>,
    pub f_kernel: usize,
    /// Widths of CNN_M; the last must be `2F` (queries then keys).
    pub m_channels: Vec<usize>,
    pub m_kernel: usize,
    pub attn_kernel: usize,
    /// One CNN_M for all stages instead of one per stage.
    pub share_mixer: bool,
    pub scale_logits: bool,
}

/// Shapes seen during one forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointTrace {
    /// Downsampled guide features per stage.
    pub guide_shapes: Vec<Vec<usize>>,
    /// Zero-upsampled value maps per stage.
    pub value_shapes: Vec<Vec<usize>>,
}

impl JointSpec {
    /// Named presets `SA_M1_F8`, `SA_M1_F16`, `SA_M1_F32`, `SA_M2_F32`.
    pub fn preset(name: &str, factor: usize) -> Result<Self> {
        let (f, m_layers) = match name {
            "SA_M1_F8" => (8, 1),
            "SA_M1_F16" => (16, 1),
            "SA_M1_F32" => (32, 1),
            "SA_M2_F32" => (32, 2),
            _ => {
                return Err(Error::Config(format!(
                    "unknown joint preset {name:?} (SA_M1_F8|SA_M1_F16|SA_M1_F32|SA_M2_F32)"
                )))
            }
        };
        let spec = JointSpec {
            factor,
            guide_channels: 3,
            tg_channels: vec![96, 48, f],
            tg_kernels: vec![3, 1, 3],
            f_channels: vec![2 * f, 2 * f],
            f_kernel: 3,
            m_channels: vec![2 * f; m_layers],
            m_kernel: 3,
            attn_kernel: 3,
            share_mixer: false,
            scale_logits: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stages(&self) -> usize {
        self.factor.trailing_zeros() as usize
    }

    pub fn features(&self) -> usize {
        self.tg_channels.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor < 2 || !self.factor.is_power_of_two() {
            return Err(Error::param(format!(
                "joint upsampling factor must be a power of two ≥ 2, got {}",
                self.factor
            )));
        }
        if self.tg_channels.is_empty() || self.tg_channels.len() != self.tg_kernels.len() {
            return Err(Error::param("CNN_T/G needs one kernel size per layer"));
        }
        let f = self.features();
        if f == 0 || !f.is_multiple_of(2) {
            return Err(Error::param(format!(
                "attention width must be even, got {f}"
            )));
        }
        if self.m_channels.last() != Some(&(2 * f)) {
            return Err(Error::param(format!(
                "CNN_M must end with 2F = {} channels, got {:?}",
                2 * f,
                self.m_channels
            )));
        }
        let ks = self
            .tg_kernels
            .iter()
            .chain([&self.f_kernel, &self.m_kernel, &self.attn_kernel]);
        for &k in ks {
            if k % 2 == 0 {
                return Err(Error::param(format!("kernel sizes must be odd, got {k}")));
            }
        }
        if self.attn_kernel < 3 {
            return Err(Error::param("×2 attention stages need K ≥ 3"));
        }
        if self.guide_channels == 0
            || self
                .f_channels
                .iter()
                .chain(&self.m_channels)
                .any(|&c| c == 0)
        {
            return Err(Error::param("channel widths must be positive"));
        }
        Ok(())
    }

    fn layout(&self) -> Vec<(String, Vec<usize>, Init)> {
        let f = self.features();
        let mut out = Vec::new();
        let conv_stack = |out: &mut Vec<_>,
                          prefix: &str,
                          c_in: usize,
                          widths: &[usize],
                          kernels: &[usize],
                          last_linear: bool| {
            let mut c = c_in;
            for (l, (&w, &k)) in widths.iter().zip(kernels).enumerate() {
                let init = if last_linear && l + 1 == widths.len() {
                    Init::Lecun(c * k * k)
                } else {
                    Init::He(c * k * k)
                };
                out.push((format!("{prefix}.conv{l}.w"), vec![w, c, k, k], init));
                c = w;
            }
        };
        conv_stack(
            &mut out,
            "cnn_t",
            1,
            &self.tg_channels,
            &self.tg_kernels,
            false,
        );
        conv_stack(
            &mut out,
            "cnn_g",
            self.guide_channels,
            &self.tg_channels,
            &self.tg_kernels,
            false,
        );
        let mk = vec![self.m_kernel; self.m_channels.len()];
        if self.share_mixer {
            conv_stack(&mut out, "mixer", 2 * f, &self.m_channels, &mk, false);
        }
        for s in 0..self.stages() {
            if !self.share_mixer {
                conv_stack(
                    &mut out,
                    &format!("stage{s}.mixer"),
                    2 * f,
                    &self.m_channels,
                    &mk,
                    false,
                );
            }
            for axis in ["pos_x", "pos_y"] {
                out.push((
                    format!("stage{s}.{axis}"),
                    vec![self.attn_kernel, f / 2],
                    Init::Pos(f),
                ));
            }
        }
        let mut fw = self.f_channels.clone();
        fw.push(1);
        let fk = vec![self.f_kernel; fw.len()];
        conv_stack(&mut out, "cnn_f", f, &fw, &fk, true);
        out
    }

    pub fn num_params(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Clone, Copy)]
enum Init {
    He(usize),
    Lecun(usize),
    Pos(usize),
}

#[derive(Clone, Debug, PartialEq)]
struct ConvIds {
    ids: Vec<ParamId>,
    pads: Vec<usize>,
}

/// Parameter ids of a [`JointSpec`] network.
#[derive(Clone, Debug, PartialEq)]
pub struct JointModel {
    spec: JointSpec,
    cnn_t: ConvIds,
    cnn_g: ConvIds,
    mixers: Vec<ConvIds>,
    pos: Vec<(ParamId, ParamId)>,
    cnn_f: ConvIds,
}

impl JointModel {
    pub fn init(spec: JointSpec, rng: &mut SeededRng) -> Result<(Self, ParamSet<f32>)> {
        spec.validate()?;
        let mut ps = ParamSet::new();
        for (name, shape, init) in spec.layout() {
            let t = match init {
                Init::He(fan) => he_uniform(&shape, fan, rng),
                Init::Lecun(fan) => lecun_uniform(&shape, fan, rng),
                Init::Pos(c) => {
                    let b = 1.0 / (c as f64).sqrt();
                    Tensor::uniform(shape, -b, b, rng)
                }
            };
            ps.add(name, t)?;
        }
        let m = Self::from_params(spec, &ps)?;
        Ok((m, ps))
    }

    pub fn from_params<T: Real>(spec: JointSpec, ps: &ParamSet<T>) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        if ps.len() != layout.len() {
            return Err(Error::param(format!(
                "joint model expects {} tensors, parameter set has {}",
                layout.len(),
                ps.len()
            )));
        }
        for (name, shape, _) in &layout {
            expect_param(ps, name, shape)?;
        }
        let stack = |prefix: &str, n: usize| -> Result<ConvIds> {
            let mut ids = Vec::new();
            let mut pads = Vec::new();
            for l in 0..n {
                let id = ps
                    .find(&format!("{prefix}.conv{l}.w"))
                    .ok_or_else(|| Error::param(format!("missing {prefix}.conv{l}.w")))?;
                pads.push(ps.get(id).shape()[2] / 2);
                ids.push(id);
            }
            Ok(ConvIds { ids, pads })
        };
        let nm = spec.m_channels.len();
        let mixers = (0..spec.stages())
            .map(|s| {
                if spec.share_mixer {
                    stack("mixer", nm)
                } else {
                    stack(&format!("stage{s}.mixer"), nm)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let pos = (0..spec.stages())
            .map(|s| {
                let find = |a: &str| {
                    ps.find(&format!("stage{s}.{a}"))
                        .ok_or_else(|| Error::param(format!("missing stage{s}.{a}")))
                };
                Ok((find("pos_x")?, find("pos_y")?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(JointModel {
            cnn_t: stack("cnn_t", spec.tg_channels.len())?,
            cnn_g: stack("cnn_g", spec.tg_channels.len())?,
            cnn_f: stack("cnn_f", spec.f_channels.len() + 1)?,
            mixers,
            pos,
            spec,
        })
    }

    /// Recovers the architecture from parameter names and shapes.
    pub fn infer_spec<T: Real>(ps: &ParamSet<T>) -> Result<JointSpec> {
        let stack = |prefix: &str| -> Vec<[usize; 4]> {
            (0..)
                .map_while(|l| ps.find(&format!("{prefix}.conv{l}.w")))
                .filter_map(|id| ps.get(id).dims4().ok())
                .map(|(o, i, k, _)| [o, i, k, 0])
                .collect()
        };
        let stages = (0..)
            .take_while(|s| ps.find(&format!("stage{s}.pos_x")).is_some())
            .count();
        let share_mixer = ps.find("mixer.conv0.w").is_some();
        let t = stack("cnn_t");
        let g = stack("cnn_g");
        let f = stack("cnn_f");
        let m = stack(if share_mixer { "mixer" } else { "stage0.mixer" });
        if stages == 0 || t.is_empty() || g.is_empty() || f.is_empty() || m.is_empty() {
            return Err(Error::param(
                "parameter set is not a joint upsampling model",
            ));
        }
        let attn_kernel = ps
            .get(ps.find("stage0.pos_x").unwrap_or(ParamId(0)))
            .shape()[0];
        let spec = JointSpec {
            factor: 1 << stages,
            guide_channels: g[0][1],
            tg_channels: t.iter().map(|l| l[0]).collect(),
            tg_kernels: t.iter().map(|l| l[2]).collect(),
            f_channels: f[..f.len() - 1].iter().map(|l| l[0]).collect(),
            f_kernel: f[0][2],
            m_channels: m.iter().map(|l| l[0]).collect(),
            m_kernel: m[0][2],
            attn_kernel,
            share_mixer,
            scale_logits: true,
        };
        Self::from_params(spec.clone(), ps)?;
        Ok(spec)
    }

    pub fn spec(&self) -> &JointSpec {
        &self.spec
    }

    fn run_stack<T: Real>(
        tape: &mut Tape<'_, T>,
        ids: &ConvIds,
        mut x: Var,
        relu_last: bool,
    ) -> Result<Var> {
        let n = ids.ids.len();
        for (l, (&id, &pad)) in ids.ids.iter().zip(&ids.pads).enumerate() {
            let w = tape.param(id)?;
            x = tape.conv2d(x, w, pad)?;
            if relu_last || l + 1 < n {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }

    /// Forward pass that also reports the shapes each stage consumed.
    pub fn forward_traced<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        target: Var,
        guide: Var,
    ) -> Result<(Var, JointTrace)> {
        let spec = &self.spec;
        let (tc, h, w) = tape.value(target).dims3()?;
        let (gc, gh, gw) = tape.value(guide).dims3()?;
        if tc != 1 || gc != spec.guide_channels || gh != h * spec.factor || gw != w * spec.factor {
            return Err(Error::shape(format!(
                "joint model: target {:?} and guide {:?} do not fit factor {} with {} guide channels",
                tape.value(target).shape(),
                tape.value(guide).shape(),
                spec.factor,
                spec.guide_channels
            )));
        }
        let f = spec.features();
        let scale = if spec.scale_logits {
            T::one() / T::of(f as f64).sqrt()
        } else {
            T::one()
        };
        let y_lr = Self::run_stack(tape, &self.cnn_t, target, true)?;
        let y_hr = Self::run_stack(tape, &self.cnn_g, guide, true)?;
        let mut trace = JointTrace::default();
        let mut v = y_lr;
        for s in 0..spec.stages() {
            let v_up = tape.zero_upsample(v, 2)?;
            let down = spec.factor >> (s + 1);
            let y_ds = if down == 1 {
                y_hr
            } else {
                tape.avg_pool(y_hr, down)?
            };
            trace.value_shapes.push(tape.value(v_up).shape().to_vec());
            trace.guide_shapes.push(tape.value(y_ds).shape().to_vec());
            let mix = tape.concat(&[v_up, y_ds])?;
            let mix = Self::run_stack(tape, &self.mixers[s], mix, true)?;
            let q = tape.narrow(mix, 0, f)?;
            let k_dense = tape.narrow(mix, f, f)?;
            let k = tape.subsample(k_dense, 2)?;
            let px = tape.param(self.pos[s].0)?;
            let py = tape.param(self.pos[s].1)?;
            let a = tape.window_attention(q, k, v, px, py, spec.attn_kernel, 2, scale)?;
            v = tape.relu(a)?;
        }
        let out = Self::run_stack(tape, &self.cnn_f, v, false)?;
        Ok((out, trace))
    }
}

impl Network for JointModel {
    fn n_inputs(&self) -> usize {
        2
    }

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, inputs: &[Var]) -> Result<Var> {
        let &[target, guide] = inputs else {
            return Err(Error::shape("joint model takes target and guide"));
        };
        Ok(self.forward_traced(tape, target, guide)?.0)
    }
}

use super::{expect_param, he_uniform, lecun_uniform, AttnIds, Network};
use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, SeededRng, Tensor};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleKind {
    Attention,
    Deconv,
}

impl fmt::Display for UpsampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpsampleKind::Attention => "attention",
            UpsampleKind::Deconv => "deconv",
        })
    }
}

impl FromStr for UpsampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" | "attn" => Ok(UpsampleKind::Attention),
            "deconv" => Ok(UpsampleKind::Deconv),
            _ => Err(Error::Config(format!(
                "unknown upsampling kind {s:?} (attention|deconv)"
            ))),
        }
    }
}

/// Single-channel super-resolution network: stem conv + PReLU, then per
/// ×2 step a residual block followed by an upsampling layer, then a final
/// conv to one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SisrSpec {
    pub scale: usize,
    pub features: usize,
    pub kind: UpsampleKind,
    pub stem_kernel: usize,
    pub res_kernel: usize,
    pub up_kernel: usize,
    pub final_kernel: usize,
    pub scale_logits: bool,
}

impl SisrSpec {
    pub fn new(scale: usize, features: usize, kind: UpsampleKind) -> Self {
        SisrSpec {
            scale,
            features,
            kind,
            stem_kernel: 5,
            res_kernel: 3,
            up_kernel: 3,
            final_kernel: 3,
            scale_logits: true,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 || !self.scale.is_power_of_two() {
            return Err(Error::param(format!(
                "upsampling factor must be a power of two ≥ 2, got {}",
                self.scale
            )));
        }
        if self.features == 0 {
            return Err(Error::param("feature width must be positive"));
        }
        if self.kind == UpsampleKind::Attention && !self.features.is_multiple_of(2) {
            return Err(Error::param(format!(
                "attention blocks need an even feature width, got {}",
                self.features
            )));
        }
        for (what, k) in [
            ("stem", self.stem_kernel),
            ("residual", self.res_kernel),
            ("upsampling", self.up_kernel),
            ("final", self.final_kernel),
        ] {
            if k % 2 == 0 {
                return Err(Error::param(format!("{what} kernel must be odd, got {k}")));
            }
        }
        if self.up_kernel < 3 {
            return Err(Error::param("×2 upsampling needs K ≥ 3"));
        }
        Ok(())
    }

    /// Learnable scalars of the network.
    pub fn num_params(&self) -> usize {
        let f = self.features;
        let stem = f * self.stem_kernel * self.stem_kernel + f;
        let res = 2 * f * f * self.res_kernel * self.res_kernel;
        let up = match self.kind {
            UpsampleKind::Attention => 3 * f * f + self.up_kernel * f,
            UpsampleKind::Deconv => f * f * self.up_kernel * self.up_kernel,
        };
        let fin = f * self.final_kernel * self.final_kernel;
        stem + self.n_blocks() * (res + up) + fin
    }

    /// Forward multiply-adds on an `h×w` input.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        use crate::fast::flops::{attention_upsample_macs, conv_macs, deconv_macs};
        let f = self.features;
        let mut total = conv_macs(1, f, h, w, self.stem_kernel);
        let (mut ch, mut cw) = (h, w);
        for _ in 0..self.n_blocks() {
            total += 2 * conv_macs(f, f, ch, cw, self.res_kernel);
            total += match self.kind {
                UpsampleKind::Attention => attention_upsample_macs(f, f, ch, cw, 2, self.up_kernel),
                UpsampleKind::Deconv => deconv_macs(f, f, ch, cw, 2, self.up_kernel),
            };
            ch *= 2;
            cw *= 2;
        }
        total + conv_macs(f, 1, ch, cw, self.final_kernel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UpIds {
    Attention(AttnIds),
    Deconv(ParamId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct BlockIds {
    res1: ParamId,
    res2: ParamId,
    up: UpIds,
}

/// Parameter ids of a [`SisrSpec`] network.
#[derive(Clone, Debug, PartialEq)]
pub struct SisrModel {
    spec: SisrSpec,
    stem_w: ParamId,
    stem_slope: ParamId,
    blocks: Vec<BlockIds>,
    final_w: ParamId,
}

struct Shapes {
    stem: [usize; 4],
    res: [usize; 4],
    deconv: [usize; 4],
    proj: [usize; 2],
    pos: [usize; 2],
    fin: [usize; 4],
}

fn shapes(spec: &SisrSpec) -> Shapes {
    let f = spec.features;
    Shapes {
        stem: [f, 1, spec.stem_kernel, spec.stem_kernel],
        res: [f, f, spec.res_kernel, spec.res_kernel],
        deconv: [f, f, spec.up_kernel, spec.up_kernel],
        proj: [f, f],
        pos: [spec.up_kernel, f / 2],
        fin: [1, f, spec.final_kernel, spec.final_kernel],
    }
}

impl SisrModel {
    /// Fresh parameters: He-uniform for convolutions feeding a rectifier,
    /// unit-gain uniform elsewhere, PReLU slopes at 0.25.
    pub fn init(spec: SisrSpec, rng: &mut SeededRng) -> Result<(Self, ParamSet<f32>)> {
        spec.validate()?;
        let sh = shapes(&spec);
        let f = spec.features;
        let k2 = |k: usize| k * k;
        let mut ps = ParamSet::new();
        let stem_w = ps.add("stem.w", he_uniform(&sh.stem, k2(spec.stem_kernel), rng))?;
        let stem_slope = ps.add("stem.prelu", Tensor::full([f], 0.25))?;
        let mut blocks = Vec::new();
        for b in 0..spec.n_blocks() {
            let fan = f * k2(spec.res_kernel);
            let res1 = ps.add(format!("block{b}.res1.w"), he_uniform(&sh.res, fan, rng))?;
            let res2 = ps.add(format!("block{b}.res2.w"), lecun_uniform(&sh.res, fan, rng))?;
            let up = match spec.kind {
                UpsampleKind::Attention => {
                    let bp = 1.0 / (f as f64).sqrt();
                    UpIds::Attention(AttnIds {
                        w_q: ps.add(format!("block{b}.up.w_q"), lecun_uniform(&sh.proj, f, rng))?,
                        w_k: ps.add(format!("block{b}.up.w_k"), lecun_uniform(&sh.proj, f, rng))?,
                        w_v: ps.add(format!("block{b}.up.w_v"), lecun_uniform(&sh.proj, f, rng))?,
                        pos_x: ps.add(
                            format!("block{b}.up.pos_x"),
                            Tensor::uniform(sh.pos, -bp, bp, rng),
                        )?,
                        pos_y: ps.add(
                            format!("block{b}.up.pos_y"),
                            Tensor::uniform(sh.pos, -bp, bp, rng),
                        )?,
                    })
                }
                UpsampleKind::Deconv => {
                    // Each output phase sees about ⌈K/2⌉² real taps per channel.
                    let taps = spec.up_kernel.div_ceil(2);
                    let fan = f * taps * taps;
                    UpIds::Deconv(ps.add(
                        format!("block{b}.up.w"),
                        lecun_uniform(&sh.deconv, fan, rng),
                    )?)
                }
            };
            blocks.push(BlockIds { res1, res2, up });
        }
        let final_w = ps.add(
            "final.w",
            lecun_uniform(&sh.fin, f * k2(spec.final_kernel), rng),
        )?;
        Ok((
            SisrModel {
                spec,
                stem_w,
                stem_slope,
                blocks,
                final_w,
            },
            ps,
        ))
    }

    /// Binds a spec to an existing parameter set by name, checking shapes.
    pub fn from_params<T: Real>(spec: SisrSpec, ps: &ParamSet<T>) -> Result<Self> {
        spec.validate()?;
        let sh = shapes(&spec);
        let f = spec.features;
        let stem_w = expect_param(ps, "stem.w", &sh.stem)?;
        let stem_slope = expect_param(ps, "stem.prelu", &[f])?;
        let mut blocks = Vec::new();
        for b in 0..spec.n_blocks() {
            let res1 = expect_param(ps, &format!("block{b}.res1.w"), &sh.res)?;
            let res2 = expect_param(ps, &format!("block{b}.res2.w"), &sh.res)?;
            let up = match spec.kind {
                UpsampleKind::Attention => UpIds::Attention(AttnIds {
                    w_q: expect_param(ps, &format!("block{b}.up.w_q"), &sh.proj)?,
                    w_k: expect_param(ps, &format!("block{b}.up.w_k"), &sh.proj)?,
                    w_v: expect_param(ps, &format!("block{b}.up.w_v"), &sh.proj)?,
                    pos_x: expect_param(ps, &format!("block{b}.up.pos_x"), &sh.pos)?,
                    pos_y: expect_param(ps, &format!("block{b}.up.pos_y"), &sh.pos)?,
                }),
                UpsampleKind::Deconv => {
                    UpIds::Deconv(expect_param(ps, &format!("block{b}.up.w"), &sh.deconv)?)
                }
            };
            blocks.push(BlockIds { res1, res2, up });
        }
        let final_w = expect_param(ps, "final.w", &sh.fin)?;
        if ps.len()
            != 3 + blocks.len()
                * if spec.kind == UpsampleKind::Attention {
                    7
                } else {
                    3
                }
        {
            return Err(Error::param(format!(
                "parameter set has {} tensors, unexpected for {} blocks",
                ps.len(),
                blocks.len()
            )));
        }
        Ok(SisrModel {
            spec,
            stem_w,
            stem_slope,
            blocks,
            final_w,
        })
    }

    /// Recovers the architecture from parameter names and shapes, e.g. after
    /// loading a checkpoint. `scale_logits` is taken as enabled.
    pub fn infer_spec<T: Real>(ps: &ParamSet<T>) -> Result<SisrSpec> {
        let dims4 = |name: &str| -> Result<(usize, usize, usize, usize)> {
            let id = ps
                .find(name)
                .ok_or_else(|| Error::param(format!("missing parameter {name:?}")))?;
            ps.get(id).dims4()
        };
        let (f, _, ks, _) = dims4("stem.w")?;
        let (_, _, kr, _) = dims4("block0.res1.w")?;
        let (_, _, kf, _) = dims4("final.w")?;
        let n_blocks = (0..)
            .take_while(|b| ps.find(&format!("block{b}.res1.w")).is_some())
            .count();
        let (kind, ku) = if let Some(id) = ps.find("block0.up.w") {
            (UpsampleKind::Deconv, ps.get(id).dims4()?.2)
        } else if let Some(id) = ps.find("block0.up.pos_x") {
            (UpsampleKind::Attention, ps.get(id).dims2()?.0)
        } else {
            return Err(Error::param("no upsampling layer in parameter set"));
        };
        let spec = SisrSpec {
            scale: 1 << n_blocks,
            features: f,
            kind,
            stem_kernel: ks,
            res_kernel: kr,
            up_kernel: ku,
            final_kernel: kf,
            scale_logits: true,
        };
        Self::from_params(spec.clone(), ps)?;
        Ok(spec)
    }

    pub fn spec(&self) -> &SisrSpec {
        &self.spec
    }
}

impl Network for SisrModel {
    fn n_inputs(&self) -> usize {
        1
    }

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, inputs: &[Var]) -> Result<Var> {
        let spec = &self.spec;
        let &[x] = inputs else {
            return Err(Error::shape("SISR model takes one input"));
        };
        let (c, h, w) = tape.value(x).dims3()?;
        let kmax = spec.stem_kernel.max(spec.res_kernel).max(spec.final_kernel);
        if c != 1 || h < kmax || w < kmax {
            return Err(Error::shape(format!(
                "SISR input must be 1×H×W with H, W ≥ {kmax}, got {:?}",
                tape.value(x).shape()
            )));
        }
        let sw = tape.param(self.stem_w)?;
        let slope = tape.param(self.stem_slope)?;
        let mut hcur = tape.conv2d(x, sw, spec.stem_kernel / 2)?;
        hcur = tape.prelu(hcur, slope)?;
        let scale = if spec.scale_logits {
            T::one() / T::of(spec.features as f64).sqrt()
        } else {
            T::one()
        };
        for b in &self.blocks {
            let w1 = tape.param(b.res1)?;
            let w2 = tape.param(b.res2)?;
            let r = tape.conv2d(hcur, w1, spec.res_kernel / 2)?;
            let r = tape.relu(r)?;
            let r = tape.conv2d(r, w2, spec.res_kernel / 2)?;
            hcur = tape.add(hcur, r)?;
            hcur = match b.up {
                UpIds::Attention(ids) => {
                    let vars = ids.vars(tape)?;
                    tape.attention_upsample(hcur, vars, spec.up_kernel, 2, scale)?
                }
                UpIds::Deconv(id) => {
                    let wd = tape.param(id)?;
                    tape.deconv(hcur, wd, 2)?
                }
            };
        }
        let fw = tape.param(self.final_w)?;
        tape.conv2d(hcur, fw, spec.final_kernel / 2)
    }
}

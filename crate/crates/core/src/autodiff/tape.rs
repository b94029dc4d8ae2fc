use super::params::{ParamGrads, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::fast::{
    self, avg_pool, avg_pool_backward, bilinear_upsample_backward, bilinear_upsample_fast,
    conv1x1_backward, conv2d_backward, conv2d_fast, subsample, transposed_conv2d_backward,
    transposed_conv2d_fast, PhasePlan,
};
use crate::reference::{zero_upsample, DeconvParams};
use crate::tensor::{conv1x1, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    Conv2d { x: Var, w: Var, padding: usize },
    Conv1x1 { x: Var, w: Var },
    Deconv { x: Var, w: Var, stride: usize },
    ZeroUpsample { x: Var, stride: usize },
    Subsample { x: Var, stride: usize },
    Bilinear { x: Var, stride: usize },
    AvgPool { x: Var, factor: usize },
    Relu { x: Var },
    Prelu { x: Var, slope: Var },
    Add { a: Var, b: Var },
    Concat { parts: Vec<Var> },
    Narrow { x: Var, start: usize },
    Window(Box<WindowOp<T>>),
    Mse { x: Var, target: Tensor<T> },
    Sse { x: Var, target: Tensor<T> },
    L1 { x: Var, target: Tensor<T> },
}

#[derive(Debug)]
struct WindowOp<T: Real> {
    q: Var,
    k: Var,
    v: Var,
    pos_x: Var,
    pos_y: Var,
    plan: PhasePlan,
    scale: T,
    coeffs: Vec<T>,
}

#[derive(Debug)]
struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Variables of one attention upsampling layer on a tape.
#[derive(Clone, Copy, Debug)]
pub struct AttnVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub pos_x: Var,
    pub pos_y: Var,
}

/// Reverse-mode recording of one forward pass.
///
/// Values are computed eagerly as ops are appended. [`Tape::backward`]
/// consumes the tape, so a recording can be differentiated only once.
pub struct Tape<'p, T: Real = f32> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Tape(format!(
                "variable {} not on this tape ({} nodes)",
                v.0,
                self.nodes.len()
            )))
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if id.0 >= self.params.len() {
            return Err(Error::Tape(format!("unknown parameter {}", id.0)));
        }
        Ok(self.push(self.params.get(id).clone(), Op::Param(id)))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, padding: usize) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let y = conv2d_fast(self.value(x), self.value(w), padding)?;
        Ok(self.push(y, Op::Conv2d { x, w, padding }))
    }

    pub fn conv1x1(&mut self, x: Var, w: Var) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let y = conv1x1(self.value(x), self.value(w))?;
        Ok(self.push(y, Op::Conv1x1 { x, w }))
    }

    /// Strided transposed convolution with weights `C_out×C_in×K×K`.
    pub fn deconv(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        let p = self.deconv_params(w, stride)?;
        let y = transposed_conv2d_fast(self.value(x), &p)?;
        Ok(self.push(y, Op::Deconv { x, w, stride }))
    }

    fn deconv_params(&self, w: Var, stride: usize) -> Result<DeconvParams<T>> {
        let wt = self.value(w);
        let (_, _, k, _) = wt.dims4()?;
        Ok(DeconvParams {
            w: wt.clone(),
            stride,
            kernel: k,
        })
    }

    pub fn zero_upsample(&mut self, x: Var, stride: usize) -> Result<Var> {
        self.check(x)?;
        let y = zero_upsample(self.value(x), stride)?;
        Ok(self.push(y, Op::ZeroUpsample { x, stride }))
    }

    pub fn subsample(&mut self, x: Var, stride: usize) -> Result<Var> {
        self.check(x)?;
        let y = subsample(self.value(x), stride)?;
        Ok(self.push(y, Op::Subsample { x, stride }))
    }

    pub fn bilinear(&mut self, x: Var, stride: usize) -> Result<Var> {
        self.check(x)?;
        let y = bilinear_upsample_fast(self.value(x), stride)?;
        Ok(self.push(y, Op::Bilinear { x, stride }))
    }

    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.check(x)?;
        let y = avg_pool(self.value(x), factor)?;
        Ok(self.push(y, Op::AvgPool { x, factor }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = self.value(x).map(|v| v.max(T::zero()));
        Ok(self.push(y, Op::Relu { x }))
    }

    /// `max(x, 0) + a_c·min(x, 0)` with one learnable slope per channel.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        self.check(x)?;
        self.check(slope)?;
        let (c, h, w) = self.value(x).dims3()?;
        if self.value(slope).len() != c {
            return Err(Error::shape(format!(
                "prelu needs {c} slopes, got {:?}",
                self.value(slope).shape()
            )));
        }
        let a = self.value(slope).data();
        let n = h * w;
        let mut y = self.value(x).clone();
        for (ci, plane) in y.data_mut().chunks_mut(n).enumerate() {
            for v in plane {
                if *v <= T::zero() {
                    *v *= a[ci];
                }
            }
        }
        Ok(self.push(y, Op::Prelu { x, slope }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let y = self.value(a).add(self.value(b))?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    /// Channel concatenation of `C×H×W` maps.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        let mut data = Vec::new();
        let mut c = 0;
        let (_, h, w) = {
            self.check(parts[0])?;
            self.value(parts[0]).dims3()?
        };
        for &p in parts {
            self.check(p)?;
            let (pc, ph, pw) = self.value(p).dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape(format!(
                    "concat: {ph}×{pw} part next to {h}×{w}"
                )));
            }
            c += pc;
            data.extend_from_slice(self.value(p).data());
        }
        let y = Tensor::new([c, h, w], data)?;
        Ok(self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Channels `start..start + len` of a `C×H×W` map.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x)?;
        let (c, h, w) = self.value(x).dims3()?;
        if start + len > c || len == 0 {
            return Err(Error::shape(format!(
                "narrow {start}..{} of {c} channels",
                start + len
            )));
        }
        let y = Tensor::new(
            [len, h, w],
            self.value(x).data()[start * h * w..(start + len) * h * w].to_vec(),
        )?;
        Ok(self.push(y, Op::Narrow { x, start }))
    }

    /// Masked window attention with compact keys/values; see
    /// [`fast::window_attention`].
    #[allow(clippy::too_many_arguments)]
    pub fn window_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        pos_x: Var,
        pos_y: Var,
        kernel: usize,
        stride: usize,
        scale: T,
    ) -> Result<Var> {
        for var in [q, k, v, pos_x, pos_y] {
            self.check(var)?;
        }
        let plan = PhasePlan::new(kernel, stride)?;
        let o = fast::window_attention(
            self.value(q),
            self.value(k),
            self.value(v),
            self.value(pos_x),
            self.value(pos_y),
            &plan,
            scale,
        )?;
        let op = WindowOp {
            q,
            k,
            v,
            pos_x,
            pos_y,
            plan,
            scale,
            coeffs: o.coeffs,
        };
        Ok(self.push(o.out, Op::Window(Box::new(op))))
    }

    /// Self attention upsampling: bilinear queries, compact keys/values.
    pub fn attention_upsample(
        &mut self,
        x: Var,
        p: AttnVars,
        kernel: usize,
        stride: usize,
        scale: T,
    ) -> Result<Var> {
        let q = self.conv1x1(x, p.w_q)?;
        let q = self.bilinear(q, stride)?;
        let k = self.conv1x1(x, p.w_k)?;
        let v = self.conv1x1(x, p.w_v)?;
        self.window_attention(q, k, v, p.pos_x, p.pos_y, kernel, stride, scale)
    }

    /// Joint upsampling: queries from every guide pixel, keys from the guide
    /// grid positions, values from the low-resolution target.
    pub fn attention_joint(
        &mut self,
        x_lr: Var,
        guide: Var,
        p: AttnVars,
        kernel: usize,
        stride: usize,
        scale: T,
    ) -> Result<Var> {
        let q = self.conv1x1(guide, p.w_q)?;
        let g = self.subsample(guide, stride)?;
        let k = self.conv1x1(g, p.w_k)?;
        let v = self.conv1x1(x_lr, p.w_v)?;
        self.window_attention(q, k, v, p.pos_x, p.pos_y, kernel, stride, scale)
    }

    fn loss_check(&self, x: Var, target: &Tensor<T>) -> Result<()> {
        self.check(x)?;
        self.value(x).check_same_shape(target)
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        self.loss_check(x, target)?;
        let d = self.value(x).sub(target)?;
        let y = Tensor::scalar(d.sum_sq() / T::of(d.len() as f64));
        Ok(self.push(
            y,
            Op::Mse {
                x,
                target: target.clone(),
            },
        ))
    }

    /// Sum of squared errors against a constant target.
    pub fn sse(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        self.loss_check(x, target)?;
        let d = self.value(x).sub(target)?;
        let y = Tensor::scalar(d.sum_sq());
        Ok(self.push(
            y,
            Op::Sse {
                x,
                target: target.clone(),
            },
        ))
    }

    /// Mean absolute error against a constant target.
    pub fn l1(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        self.loss_check(x, target)?;
        let d = self.value(x).sub(target)?;
        let total: T = d.data().iter().map(|v| v.abs()).sum();
        let y = Tensor::scalar(total / T::of(d.len() as f64));
        Ok(self.push(
            y,
            Op::L1 {
                x,
                target: target.clone(),
            },
        ))
    }

    /// Gradients of a scalar `root` with respect to every parameter used.
    pub fn backward(self, root: Var) -> Result<ParamGrads<T>> {
        self.check(root)?;
        if self.value(root).len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar root, got {:?}",
                self.value(root).shape()
            )));
        }
        let seed = Tensor::full(self.value(root).shape().to_vec(), T::one());
        self.backward_with(root, seed)
    }

    /// Vector-Jacobian product of `root` with `seed`.
    pub fn backward_with(self, root: Var, seed: Tensor<T>) -> Result<ParamGrads<T>> {
        self.check(root)?;
        self.value(root).check_same_shape(&seed)?;
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(seed);
        let mut out = ParamGrads::empty(self.params.len());
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let nodes = &self.nodes;
            let val = |v: Var| &nodes[v.0].value;
            let mut send = |v: Var, d: Tensor<T>| -> Result<()> {
                match &mut grads[v.0] {
                    Some(acc) => acc.axpy(T::one(), &d),
                    slot @ None => {
                        *slot = Some(d);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g)?,
                Op::Conv2d { x, w, padding } => {
                    let (dx, dw) = conv2d_backward(val(*x), val(*w), *padding, &g)?;
                    send(*x, dx)?;
                    send(*w, dw)?;
                }
                Op::Conv1x1 { x, w } => {
                    let (dx, dw) = conv1x1_backward(val(*x), val(*w), &g)?;
                    send(*x, dx)?;
                    send(*w, dw)?;
                }
                Op::Deconv { x, w, stride } => {
                    let p = self.deconv_params(*w, *stride)?;
                    let (dx, dw) = transposed_conv2d_backward(val(*x), &p, &g)?;
                    send(*x, dx)?;
                    send(*w, dw)?;
                }
                Op::ZeroUpsample { x, stride } => send(*x, subsample(&g, *stride)?)?,
                Op::Subsample { x, stride } => send(*x, zero_upsample(&g, *stride)?)?,
                Op::Bilinear { x, stride } => {
                    let (_, h, w) = val(*x).dims3()?;
                    send(*x, bilinear_upsample_backward(&g, *stride, h, w)?)?;
                }
                Op::AvgPool { x, factor } => send(*x, avg_pool_backward(&g, *factor)?)?,
                Op::Relu { x } => {
                    let d =
                        val(*x).zip_map(&g, |v, gv| if v > T::zero() { gv } else { T::zero() })?;
                    send(*x, d)?;
                }
                Op::Prelu { x, slope } => {
                    let a = val(*slope).data();
                    let xv = val(*x);
                    let n = xv.len() / a.len();
                    let mut d = g.clone();
                    let mut da = vec![T::zero(); a.len()];
                    for (ci, (dp, xp)) in d
                        .data_mut()
                        .chunks_mut(n)
                        .zip(xv.data().chunks(n))
                        .enumerate()
                    {
                        for (gv, &v) in dp.iter_mut().zip(xp) {
                            if v <= T::zero() {
                                da[ci] += v * *gv;
                                *gv *= a[ci];
                            }
                        }
                    }
                    send(*x, d)?;
                    send(*slope, Tensor::new(val(*slope).shape().to_vec(), da)?)?;
                }
                Op::Add { a, b } => {
                    send(*a, g.clone())?;
                    send(*b, g)?;
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let shape = val(p).shape().to_vec();
                        let n = val(p).len();
                        send(p, Tensor::new(shape, g.data()[off..off + n].to_vec())?)?;
                        off += n;
                    }
                }
                Op::Narrow { x, start } => {
                    let (c, h, w) = val(*x).dims3()?;
                    let mut d = Tensor::zeros([c, h, w]);
                    let plane = h * w;
                    d.data_mut()[start * plane..start * plane + g.len()].copy_from_slice(g.data());
                    send(*x, d)?;
                }
                Op::Window(op) => {
                    let wg = fast::window_attention_backward(
                        val(op.q),
                        val(op.k),
                        val(op.v),
                        val(op.pos_x),
                        val(op.pos_y),
                        &op.plan,
                        op.scale,
                        &op.coeffs,
                        &g,
                    )?;
                    send(op.q, wg.dq)?;
                    send(op.k, wg.dk)?;
                    send(op.v, wg.dv)?;
                    send(op.pos_x, wg.dpos_x)?;
                    send(op.pos_y, wg.dpos_y)?;
                }
                Op::Mse { x, target } => {
                    let n = T::of(target.len() as f64);
                    let two = T::of(2.0) * g.data()[0] / n;
                    send(*x, val(*x).zip_map(target, |a, b| two * (a - b))?)?;
                }
                Op::Sse { x, target } => {
                    let two = T::of(2.0) * g.data()[0];
                    send(*x, val(*x).zip_map(target, |a, b| two * (a - b))?)?;
                }
                Op::L1 { x, target } => {
                    let s = g.data()[0] / T::of(target.len() as f64);
                    let d = val(*x).zip_map(target, |a, b| {
                        if a > b {
                            s
                        } else if a < b {
                            -s
                        } else {
                            T::zero()
                        }
                    })?;
                    send(*x, d)?;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    #[test]
    fn foreign_variables_rejected() {
        let ps = ParamSet::<f64>::new();
        let mut t = Tape::new(&ps);
        let x = t.input(Tensor::zeros([1, 2, 2]));
        assert!(t.relu(Var(5)).is_err());
        assert!(t.param(ParamId(0)).is_err());
        let y = t.relu(x).unwrap();
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn mse_gradient_by_hand() {
        let mut ps = ParamSet::<f64>::new();
        let id = ps
            .add("x", Tensor::new([1, 1, 2], vec![1.0, -2.0]).unwrap())
            .unwrap();
        let mut t = Tape::new(&ps);
        let x = t.param(id).unwrap();
        let target = Tensor::new([1, 1, 2], vec![0.0, 0.0]).unwrap();
        let loss = t.mse(x, &target).unwrap();
        assert_eq!(t.value(loss).data(), &[2.5]);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(id).unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut rng = SeededRng::new(3);
        let mut ps = ParamSet::<f64>::new();
        let id = ps
            .add("x", Tensor::uniform([1, 2, 2], -1.0, 1.0, &mut rng))
            .unwrap();
        let mut t = Tape::new(&ps);
        let a = t.param(id).unwrap();
        let b = t.param(id).unwrap();
        let s = t.add(a, b).unwrap();
        let loss = t.sse(s, &Tensor::zeros([1, 2, 2])).unwrap();
        let g = t.backward(loss).unwrap();
        let want = ps.get(id).scale(8.0);
        assert!(g.get(id).unwrap().max_abs_diff(&want) < 1e-14);
    }
}

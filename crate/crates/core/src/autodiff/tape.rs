use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::param::{ParamId, ParamStore};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{
    self, bilinear_sample_cells, Accumulator, Binary, Broadcast, ConvGradRequest, ConvSpec, Element, Mode,
    Tensor, Unary,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T: Element> {
    Constant,
    Param(ParamId),
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        spec: ConvSpec,
    },
    Matmul(Var, Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        mode: Mode,
    },
    Sample {
        x: Var,
        grid: Var,
    },
    Binary {
        a: Var,
        b: Var,
        op: Binary,
        bcast: Broadcast,
    },
    Unary {
        x: Var,
        op: Unary,
    },
    Scale {
        x: Var,
        s: T,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    PixelShuffle {
        x: Var,
        s: usize,
    },
    Sum(Var),
    Mean(Var),
    Bce {
        logits: Var,
        target: Tensor<T>,
    },
    Dice {
        probs: Var,
        target: Tensor<T>,
        eps: T,
    },
}

struct Node<T: Element> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Single-use record of executed ops, replayed in reverse by
/// [`Tape::backward`].
///
/// Nodes are appended as ops execute, so every node follows its inputs.
pub struct Tape<T: Element> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    kinks: Option<DefaultHasher>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
            kinks: None,
        }
    }

    /// A tape that also fingerprints every non-smooth decision (relu signs,
    /// sampling cells, clamp flags). Two evaluations with equal fingerprints
    /// lie on the same smooth piece.
    pub fn with_kink_tracking() -> Self {
        Tape {
            kinks: Some(DefaultHasher::new()),
            ..Self::new()
        }
    }

    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks.as_ref().map(|h| h.finish())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(Error::State("tape already consumed by backward".into()));
        }
        let requires_grad = match op {
            Op::Constant => false,
            Op::Param(_) => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Constant, &[])
    }

    /// Records the current value of a parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        let p = store.get(id);
        if p.trainable {
            self.push(p.value.clone(), Op::Param(id), &[])
        } else {
            self.push(p.value.clone(), Op::Constant, &[])
        }
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let y = tensor::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            spec,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(
            y,
            Op::Conv {
                input,
                weight,
                bias,
                spec,
            },
            &inputs,
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = tensor::matmul(self.value(a), self.value(b))?;
        self.push(y, Op::Matmul(a, b), &[a, b])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y = tensor::softmax(self.value(x), axis)?;
        self.push(y, Op::Softmax { x, axis }, &[x])
    }

    /// Batch normalization; returns the output and, in training mode, the
    /// updated running `(mean, var)`.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        mode: Mode,
        momentum: f64,
        eps: f64,
    ) -> Result<(Var, Option<(Tensor<T>, Tensor<T>)>)> {
        let out = tensor::batchnorm2d(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
            mode,
            momentum,
            eps,
        )?;
        let v = self.push(
            out.output,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: out.xhat,
                inv_std: out.inv_std,
                mode,
            },
            &[x, gamma, beta],
        )?;
        Ok((v, out.running))
    }

    pub fn bilinear_sample(&mut self, x: Var, grid: Var) -> Result<Var> {
        let y = tensor::bilinear_sample(self.value(x), self.value(grid))?;
        if let Some(h) = self.kinks.as_mut() {
            let (_, _, ih, iw) = self.nodes[x.0].value.dims4()?;
            for cell in bilinear_sample_cells(&self.nodes[grid.0].value, ih, iw) {
                cell.hash(h);
            }
        }
        self.push(y, Op::Sample { x, grid }, &[x, grid])
    }

    pub fn binary(&mut self, a: Var, b: Var, op: Binary) -> Result<Var> {
        let bcast = Broadcast::resolve(self.shape(a), self.shape(b))?;
        let y = tensor::binary(self.value(a), self.value(b), op)?;
        self.push(y, Op::Binary { a, b, op, bcast }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul)
    }

    pub fn unary(&mut self, x: Var, op: Unary) -> Result<Var> {
        if op == Unary::Relu {
            if let Some(h) = self.kinks.as_mut() {
                for v in self.nodes[x.0].value.data() {
                    (*v > T::zero()).hash(h);
                }
            }
        }
        let y = tensor::unary(self.value(x), op);
        self.push(y, Op::Unary { x, op }, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let y = tensor::scale(self.value(x), s);
        self.push(y, Op::Scale { x, s }, &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let y = tensor::concat(&values, axis)?;
        self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        )
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let y = tensor::slice_axis(self.value(x), axis, start, len)?;
        self.push(y, Op::Slice { x, axis, start }, &[x])
    }

    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let extent = self.shape(x).get(axis).copied();
        if extent != Some(sizes.iter().sum()) {
            return Err(dim_err!(
                "split sizes {sizes:?} do not match extent {extent:?} of axis {axis}"
            ));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.slice(x, axis, start, len)?);
            start += len;
        }
        Ok(out)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        self.push(y, Op::Reshape(x), &[x])
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let y = tensor::permute(self.value(x), perm)?;
        self.push(
            y,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            &[x],
        )
    }

    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank < 2 {
            return Err(dim_err!("transpose needs rank >= 2"));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(x, &perm)
    }

    pub fn pixel_shuffle(&mut self, x: Var, s: usize) -> Result<Var> {
        let y = tensor::pixel_shuffle(self.value(x), s)?;
        self.push(y, Op::PixelShuffle { x, s }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.value(x).sum());
        self.push(y, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.value(x).mean());
        self.push(y, Op::Mean(x), &[x])
    }

    /// Mean binary cross-entropy on logits, in the fused log-sigmoid form
    /// `max(z, 0) - z*g + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != target.shape() {
            return Err(dim_err!(
                "logits {:?} vs target {:?}",
                z.shape(),
                target.shape()
            ));
        }
        let total = tensor::compensated_sum(z.data().iter().zip(target.data()).map(|(&z, &g)| {
            let (z, g) = (z.as_f64(), g.as_f64());
            z.max(0.0) - z * g + (-z.abs()).exp().ln_1p()
        }));
        let y = Tensor::scalar(T::of(total / z.numel() as f64));
        self.push(
            y,
            Op::Bce {
                logits,
                target: target.clone(),
            },
            &[logits],
        )
    }

    /// Soft Dice loss `1 - (2 sum(p g) + eps) / (sum p + sum g + eps)` over
    /// every element.
    pub fn dice_loss(&mut self, probs: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        let p = self.value(probs);
        if p.shape() != target.shape() {
            return Err(dim_err!(
                "probs {:?} vs target {:?}",
                p.shape(),
                target.shape()
            ));
        }
        let (inter, sp, sg) = dice_sums(p, target);
        let e = eps.as_f64();
        let y = Tensor::scalar(T::of(1.0 - (2.0 * inter + e) / (sp + sg + e)));
        self.push(
            y,
            Op::Dice {
                probs,
                target: target.clone(),
                eps,
            },
            &[probs],
        )
    }

    /// Accumulates `d loss / d param` into every reachable trainable
    /// parameter and consumes the tape.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        if self.consumed {
            return Err(Error::State("backward called on a consumed tape".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::from_raw(nodes[loss.0].value.shape().to_vec(), vec![T::one()]));

        let needs = |v: Var| nodes[v.0].requires_grad;
        let accumulate = |grads: &mut Vec<Option<Tensor<T>>>, v: Var, g: Tensor<T>| -> Result<()> {
            match grads[v.0].as_mut() {
                Some(acc) => acc.add_assign(&g),
                None => {
                    grads[v.0] = Some(g);
                    Ok(())
                }
            }
        };

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let p = store.get_mut(*id);
                    if p.trainable {
                        p.grad.add_assign(&gy)?;
                    }
                }
                Op::Conv {
                    input,
                    weight,
                    bias,
                    spec,
                } => {
                    let req = ConvGradRequest {
                        input: needs(*input),
                        weight: needs(*weight),
                        bias: bias.is_some_and(needs),
                    };
                    let g = tensor::conv2d_backward(val(*input), val(*weight), &gy, *spec, req)?;
                    if let Some(gi) = g.input {
                        accumulate(&mut grads, *input, gi)?;
                    }
                    if let Some(gw) = g.weight {
                        accumulate(&mut grads, *weight, gw)?;
                    }
                    if let (Some(b), Some(gb)) = (bias, g.bias) {
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Matmul(a, b) => {
                    let (ga, gb) = tensor::matmul_backward(val(*a), val(*b), &gy)?;
                    if needs(*a) {
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Softmax { x, axis } => {
                    let gx = tensor::softmax_backward(&node.value, &gy, *axis)?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    mode,
                } => {
                    let g = tensor::batchnorm2d_backward(xhat, inv_std, val(*gamma), &gy, *mode)?;
                    if needs(*x) {
                        accumulate(&mut grads, *x, g.input)?;
                    }
                    if needs(*gamma) {
                        accumulate(&mut grads, *gamma, g.gamma)?;
                    }
                    if needs(*beta) {
                        accumulate(&mut grads, *beta, g.beta)?;
                    }
                }
                Op::Sample { x, grid } => {
                    let g = tensor::bilinear_sample_backward(
                        val(*x),
                        val(*grid),
                        &gy,
                        needs(*x),
                        needs(*grid),
                    )?;
                    if let Some(gx) = g.input {
                        accumulate(&mut grads, *x, gx)?;
                    }
                    if let Some(gg) = g.grid {
                        accumulate(&mut grads, *grid, gg)?;
                    }
                }
                Op::Binary { a, b, op, bcast } => {
                    let (av, bv) = (val(*a), val(*b));
                    let shape = av.shape();
                    if needs(*a) {
                        let ga = match op {
                            Binary::Add | Binary::Sub => gy.clone(),
                            Binary::Mul => {
                                let bd = bv.data();
                                let d = gy
                                    .data()
                                    .iter()
                                    .enumerate()
                                    .map(|(k, &g)| g * bd[bcast.rhs_index(k, shape)])
                                    .collect();
                                Tensor::from_raw(shape.to_vec(), d)
                            }
                        };
                        accumulate(&mut grads, *a, ga)?;
                    }
                    if needs(*b) {
                        let full = match op {
                            Binary::Add => gy.clone(),
                            Binary::Sub => gy.map(|g| -g),
                            Binary::Mul => {
                                let d = gy.data().iter().zip(av.data()).map(|(&g, &x)| g * x).collect();
                                Tensor::from_raw(shape.to_vec(), d)
                            }
                        };
                        accumulate(&mut grads, *b, bcast.reduce(&full, bv.shape()))?;
                    }
                }
                Op::Unary { x, op } => {
                    let y = node.value.data();
                    let xs = val(*x).data();
                    let d = gy
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(k, &g)| match op {
                            Unary::Tanh => g * (T::one() - y[k] * y[k]),
                            Unary::Sigmoid => g * y[k] * (T::one() - y[k]),
                            Unary::Relu => {
                                if xs[k] > T::zero() {
                                    g
                                } else {
                                    T::zero()
                                }
                            }
                        })
                        .collect();
                    accumulate(&mut grads, *x, Tensor::from_raw(gy.shape().to_vec(), d))?;
                }
                Op::Scale { x, s } => {
                    let s = *s;
                    accumulate(&mut grads, *x, gy.map(|g| g * s))?;
                }
                Op::Concat { parts, axis } => {
                    let mut start = 0;
                    for &p in parts {
                        let len = val(p).shape()[*axis];
                        if needs(p) {
                            accumulate(&mut grads, p, tensor::slice_axis(&gy, *axis, start, len)?)?;
                        }
                        start += len;
                    }
                }
                Op::Slice { x, axis, start } => {
                    let src = val(*x).shape();
                    let (outer, extent, inner) = (
                        src[..*axis].iter().product::<usize>(),
                        src[*axis],
                        src[*axis + 1..].iter().product::<usize>(),
                    );
                    let len = gy.shape()[*axis];
                    let mut full = vec![T::zero(); outer * extent * inner];
                    for o in 0..outer {
                        full[(o * extent + start) * inner..][..len * inner]
                            .copy_from_slice(&gy.data()[o * len * inner..][..len * inner]);
                    }
                    accumulate(&mut grads, *x, Tensor::from_raw(src.to_vec(), full))?;
                }
                Op::Reshape(x) => {
                    accumulate(&mut grads, *x, gy.reshape(val(*x).shape())?)?;
                }
                Op::Permute { x, perm } => {
                    let mut inv = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    accumulate(&mut grads, *x, tensor::permute(&gy, &inv)?)?;
                }
                Op::PixelShuffle { x, s } => {
                    accumulate(&mut grads, *x, tensor::pixel_unshuffle(&gy, *s)?)?;
                }
                Op::Sum(x) => {
                    let g = gy.data()[0];
                    accumulate(&mut grads, *x, val(*x).map(|_| g))?;
                }
                Op::Mean(x) => {
                    let xv = val(*x);
                    let g = gy.data()[0] / T::of(xv.numel() as f64);
                    accumulate(&mut grads, *x, xv.map(|_| g))?;
                }
                Op::Bce { logits, target } => {
                    let z = val(*logits);
                    let k = gy.data()[0] / T::of(z.numel() as f64);
                    let d = z
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&z, &g)| (tensor::sigmoid_scalar(z) - g) * k)
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::from_raw(z.shape().to_vec(), d))?;
                }
                Op::Dice { probs, target, eps } => {
                    let p = val(*probs);
                    let (inter, sp, sg) = dice_sums(p, target);
                    let e = eps.as_f64();
                    let num = 2.0 * inter + e;
                    let den = sp + sg + e;
                    let up = gy.data()[0].as_f64();
                    // d/dp_i [1 - num/den] = -(2 g_i den - num) / den^2
                    let d = target
                        .data()
                        .iter()
                        .map(|&g| T::of(-up * (2.0 * g.as_f64() * den - num) / (den * den)))
                        .collect();
                    accumulate(&mut grads, *probs, Tensor::from_raw(p.shape().to_vec(), d))?;
                }
            }
        }
        Ok(())
    }
}

fn dice_sums<T: Element>(p: &Tensor<T>, g: &Tensor<T>) -> (f64, f64, f64) {
    let mut inter = Accumulator::default();
    let mut sp = Accumulator::default();
    let mut sg = Accumulator::default();
    for (&p, &g) in p.data().iter().zip(g.data()) {
        let (p, g) = (p.as_f64(), g.as_f64());
        inter.add(p * g);
        sp.add(p);
        sg.add(g);
    }
    (inter.value(), sp.value(), sg.value())
}

//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A `Tape` records every primitive operation of a forward pass in
//! topological order, then replays adjoints in reverse on demand.
//! Gradients can be requested with respect to any watched leaf, which
//! covers both parameter gradients (training) and input gradients
//! (sharpness measurement) with the same machinery.

use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels;
use super::tensor::{Scalar, TensorOf};
use crate::error::{Error, Result};

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId {
    tape: u64,
    index: usize,
}

struct Node<S> {
    value: TensorOf<S>,
    needs_grad: bool,
    op: Op<S>,
}

enum Op<S> {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
    },
    MaxPool2 {
        input: usize,
        argmax: Vec<u32>,
    },
    Relu {
        input: usize,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: usize,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        target: usize,
        probs: Vec<S>,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        a: usize,
        factor: S,
    },
    Dot {
        a: usize,
        b: usize,
    },
}

/// Records one forward pass; supports exactly one backward pass.
pub struct Tape<S: Scalar = f64> {
    id: u64,
    nodes: Vec<Node<S>>,
    consumed: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    /// Leaf whose gradient will be computed by `backward`.
    pub fn leaf(&mut self, value: TensorOf<S>) -> Result<VarId> {
        self.push(value, true, Op::Leaf, "leaf")
    }

    /// Leaf treated as a constant: no adjoint is propagated into it.
    pub fn constant(&mut self, value: TensorOf<S>) -> Result<VarId> {
        self.push(value, false, Op::Leaf, "constant")
    }

    pub fn value(&self, id: VarId) -> Result<&TensorOf<S>> {
        self.check(id)?;
        Ok(&self.nodes[id.index].value)
    }

    /// Scalar value of a rank-0/1-element node.
    pub fn scalar_value(&self, id: VarId) -> Result<S> {
        self.value(id)?.item()
    }

    fn check(&self, id: VarId) -> Result<()> {
        if id.tape != self.id || id.index >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(())
    }

    fn push(
        &mut self,
        value: TensorOf<S>,
        needs_grad: bool,
        op: Op<S>,
        context: &str,
    ) -> Result<VarId> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Ok(VarId {
            tape: self.id,
            index,
        })
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].needs_grad
    }

    /// 3x3 convolution, stride 1, zero padding 1.
    /// input [c_in, h, w], kernel [c_out, c_in, 3, 3], bias [c_out].
    pub fn conv2d(&mut self, input: VarId, kernel: VarId, bias: VarId) -> Result<VarId> {
        self.check(input)?;
        self.check(kernel)?;
        self.check(bias)?;
        let (ishape, kshape, bshape) = (
            self.nodes[input.index].value.shape().to_vec(),
            self.nodes[kernel.index].value.shape().to_vec(),
            self.nodes[bias.index].value.shape().to_vec(),
        );
        if ishape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input must be [c,h,w], got {ishape:?}"
            )));
        }
        if kshape.len() != 4 || kshape[2] != 3 || kshape[3] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "conv2d kernel must be [c_out,c_in,3,3], got {kshape:?}"
            )));
        }
        if kshape[1] != ishape[0] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d channel mismatch: input has {}, kernel expects {}",
                ishape[0], kshape[1]
            )));
        }
        if bshape != [kshape[0]] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d bias must be [c_out={}], got {bshape:?}",
                kshape[0]
            )));
        }
        let (c_in, h, w, c_out) = (ishape[0], ishape[1], ishape[2], kshape[0]);
        let mut out = TensorOf::zeros(&[c_out, h, w]);
        kernels::conv3x3_forward(
            self.nodes[input.index].value.data(),
            c_in,
            h,
            w,
            self.nodes[kernel.index].value.data(),
            c_out,
            self.nodes[bias.index].value.data(),
            out.data_mut(),
        );
        let needs = self.needs(input.index) || self.needs(kernel.index) || self.needs(bias.index);
        self.push(
            out,
            needs,
            Op::Conv2d {
                input: input.index,
                kernel: kernel.index,
                bias: bias.index,
            },
            "conv2d",
        )
    }

    /// 2x2 max pooling with stride 2; spatial dims must be even.
    pub fn maxpool2(&mut self, input: VarId) -> Result<VarId> {
        self.check(input)?;
        let shape = self.nodes[input.index].value.shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2 input must be [c,h,w], got {shape:?}"
            )));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "maxpool2 requires even spatial dims, got {h}x{w}"
            )));
        }
        let mut out = TensorOf::zeros(&[c, h / 2, w / 2]);
        let mut argmax = Vec::new();
        kernels::maxpool2_forward(
            self.nodes[input.index].value.data(),
            c,
            h,
            w,
            out.data_mut(),
            &mut argmax,
        );
        let needs = self.needs(input.index);
        self.push(
            out,
            needs,
            Op::MaxPool2 {
                input: input.index,
                argmax,
            },
            "maxpool2",
        )
    }

    pub fn relu(&mut self, input: VarId) -> Result<VarId> {
        self.check(input)?;
        let src = &self.nodes[input.index].value;
        let mut out = TensorOf::zeros(src.shape());
        kernels::relu_forward(src.data(), out.data_mut());
        let needs = self.needs(input.index);
        self.push(
            out,
            needs,
            Op::Relu {
                input: input.index,
            },
            "relu",
        )
    }

    /// weight [m, n] . input (flattened to n) + bias [m].
    pub fn linear(&mut self, input: VarId, weight: VarId, bias: VarId) -> Result<VarId> {
        self.check(input)?;
        self.check(weight)?;
        self.check(bias)?;
        let wshape = self.nodes[weight.index].value.shape().to_vec();
        if wshape.len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "linear weight must be [m,n], got {wshape:?}"
            )));
        }
        let (m, n) = (wshape[0], wshape[1]);
        if self.nodes[input.index].value.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "linear input has {} elements, weight expects {n}",
                self.nodes[input.index].value.len()
            )));
        }
        if self.nodes[bias.index].value.shape() != [m] {
            return Err(Error::ShapeMismatch(format!(
                "linear bias must be [m={m}], got {:?}",
                self.nodes[bias.index].value.shape()
            )));
        }
        let mut out = TensorOf::zeros(&[m]);
        kernels::linear_forward(
            self.nodes[input.index].value.data(),
            self.nodes[weight.index].value.data(),
            self.nodes[bias.index].value.data(),
            m,
            n,
            out.data_mut(),
        );
        let needs = self.needs(input.index) || self.needs(weight.index) || self.needs(bias.index);
        self.push(
            out,
            needs,
            Op::Linear {
                input: input.index,
                weight: weight.index,
                bias: bias.index,
            },
            "linear",
        )
    }

    /// -log softmax(logits)[target], computed with max subtraction.
    pub fn softmax_crossentropy(&mut self, logits: VarId, target: usize) -> Result<VarId> {
        self.check(logits)?;
        let lvalue = &self.nodes[logits.index].value;
        if lvalue.shape().len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "softmax_crossentropy logits must be rank 1, got {:?}",
                lvalue.shape()
            )));
        }
        if target >= lvalue.len() {
            return Err(Error::InvalidArgument(format!(
                "target class {target} out of range for {} logits",
                lvalue.len()
            )));
        }
        let (loss, probs) = kernels::softmax_crossentropy_forward(lvalue.data(), target);
        let needs = self.needs(logits.index);
        self.push(
            TensorOf::scalar(loss),
            needs,
            Op::SoftmaxCrossEntropy {
                logits: logits.index,
                target,
                probs,
            },
            "softmax_crossentropy",
        )
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.check(a)?;
        self.check(b)?;
        let sum = self.nodes[a.index]
            .value
            .add(&self.nodes[b.index].value)?;
        let needs = self.needs(a.index) || self.needs(b.index);
        self.push(
            sum,
            needs,
            Op::Add {
                a: a.index,
                b: b.index,
            },
            "add",
        )
    }

    pub fn scale(&mut self, a: VarId, factor: S) -> Result<VarId> {
        self.check(a)?;
        let out = self.nodes[a.index].value.scale(factor);
        let needs = self.needs(a.index);
        self.push(
            out,
            needs,
            Op::Scale {
                a: a.index,
                factor,
            },
            "scale",
        )
    }

    /// Inner product of two same-shaped tensors; yields a scalar node.
    pub fn dot(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
        if av.shape() != bv.shape() {
            return Err(Error::ShapeMismatch(format!(
                "dot between {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let v = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x * y)
            .fold(S::zero(), |acc, t| acc + t);
        let needs = self.needs(a.index) || self.needs(b.index);
        self.push(
            TensorOf::scalar(v),
            needs,
            Op::Dot {
                a: a.index,
                b: b.index,
            },
            "dot",
        )
    }

    /// Reverse pass seeded at a scalar node. Consumes the tape's single
    /// backward budget; forward values are left untouched.
    pub fn backward(&mut self, loss: VarId) -> Result<Gradients<S>> {
        self.check(loss)?;
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        if !self.nodes[loss.index].value.is_scalar() {
            return Err(Error::ShapeMismatch(format!(
                "backward seed must be scalar, got {:?}",
                self.nodes[loss.index].value.shape()
            )));
        }

        let mut grads: Vec<Option<TensorOf<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.index].needs_grad {
            grads[loss.index] = Some(TensorOf::filled(
                self.nodes[loss.index].value.shape(),
                S::one(),
            ));
        }

        for i in (0..=loss.index).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    // Keep leaf adjoints for the caller.
                    grads[i] = Some(g);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                } => {
                    let (input, kernel, bias) = (*input, *kernel, *bias);
                    let ishape = self.nodes[input].value.shape();
                    let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
                    let c_out = self.nodes[kernel].value.shape()[0];
                    if self.needs(input) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, input);
                        kernels::conv3x3_backward_input(
                            g.data(),
                            c_in,
                            h,
                            w,
                            self.nodes[kernel].value.data(),
                            c_out,
                            buf,
                        );
                    }
                    if self.needs(kernel) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, kernel);
                        kernels::conv3x3_backward_kernel(
                            g.data(),
                            self.nodes[input].value.data(),
                            c_in,
                            h,
                            w,
                            c_out,
                            buf,
                        );
                    }
                    if self.needs(bias) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, bias);
                        kernels::conv3x3_backward_bias(g.data(), c_out, h * w, buf);
                    }
                }
                Op::MaxPool2 { input, argmax } => {
                    let input = *input;
                    if self.needs(input) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, input);
                        kernels::maxpool2_backward(g.data(), argmax, buf);
                    }
                }
                Op::Relu { input } => {
                    let input = *input;
                    if self.needs(input) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, input);
                        kernels::relu_backward(g.data(), self.nodes[input].value.data(), buf);
                    }
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let (input, weight, bias) = (*input, *weight, *bias);
                    let wshape = self.nodes[weight].value.shape();
                    let (m, n) = (wshape[0], wshape[1]);
                    if self.needs(input) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, input);
                        kernels::linear_backward(
                            g.data(),
                            &[],
                            self.nodes[weight].value.data(),
                            m,
                            n,
                            Some(buf),
                            None,
                            None,
                        );
                    }
                    if self.needs(weight) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, weight);
                        kernels::linear_backward(
                            g.data(),
                            self.nodes[input].value.data(),
                            &[],
                            m,
                            n,
                            None,
                            Some(buf),
                            None,
                        );
                    }
                    if self.needs(bias) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, bias);
                        kernels::linear_backward(g.data(), &[], &[], m, n, None, None, Some(buf));
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let (logits, target) = (*logits, *target);
                    if self.needs(logits) {
                        let upstream = g.data()[0];
                        let buf = Self::grad_buf(&mut grads, &self.nodes, logits);
                        kernels::softmax_crossentropy_backward(upstream, probs, target, buf);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.needs(a) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, a);
                        for (d, &s) in buf.iter_mut().zip(g.data()) {
                            *d = *d + s;
                        }
                    }
                    if self.needs(b) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, b);
                        for (d, &s) in buf.iter_mut().zip(g.data()) {
                            *d = *d + s;
                        }
                    }
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    if self.needs(a) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, a);
                        for (d, &s) in buf.iter_mut().zip(g.data()) {
                            *d = *d + factor * s;
                        }
                    }
                }
                Op::Dot { a, b } => {
                    let (a, b) = (*a, *b);
                    let upstream = g.data()[0];
                    if self.needs(a) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, a);
                        for (d, &s) in buf.iter_mut().zip(self.nodes[b].value.data()) {
                            *d = *d + upstream * s;
                        }
                    }
                    if self.needs(b) {
                        let buf = Self::grad_buf(&mut grads, &self.nodes, b);
                        for (d, &s) in buf.iter_mut().zip(self.nodes[a].value.data()) {
                            *d = *d + upstream * s;
                        }
                    }
                }
            }
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::NonFinite {
                        context: format!("gradient of node {i}"),
                    });
                }
            }
        }

        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    /// Gradient of a scalar loss with respect to one watched leaf.
    /// Returns zeros when the loss does not depend on `x`.
    pub fn backward_to_input(&mut self, loss: VarId, x: VarId) -> Result<TensorOf<S>> {
        self.check(x)?;
        if !self.nodes[x.index].needs_grad {
            return Err(Error::InvalidArgument(
                "gradient target was recorded as a constant".into(),
            ));
        }
        let shape = self.nodes[x.index].value.shape().to_vec();
        let grads = self.backward(loss)?;
        Ok(grads
            .get(x)
            .cloned()
            .unwrap_or_else(|| TensorOf::zeros(&shape)))
    }

    fn grad_buf<'a>(
        grads: &'a mut [Option<TensorOf<S>>],
        nodes: &[Node<S>],
        idx: usize,
    ) -> &'a mut [S] {
        grads[idx]
            .get_or_insert_with(|| TensorOf::zeros(nodes[idx].value.shape()))
            .data_mut()
    }
}

/// Adjoints produced by one backward pass; query by leaf handle.
pub struct Gradients<S: Scalar = f64> {
    tape: u64,
    grads: Vec<Option<TensorOf<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: VarId) -> Option<&TensorOf<S>> {
        if id.tape != self.tape {
            return None;
        }
        self.grads.get(id.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: VarId) -> Option<TensorOf<S>> {
        if id.tape != self.tape {
            return None;
        }
        self.grads.get_mut(id.index).and_then(|g| g.take())
    }
}

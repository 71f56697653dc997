//! Append-only computation tape.
//!
//! Every op validates its inputs, computes its output eagerly, records how it
//! was produced, and rejects non-finite results. Because the tape is
//! append-only and ops only reference earlier nodes, a reverse scan of the
//! tape is a reverse topological order, and cycles are impossible by
//! construction. Gradients accumulate additively across fan-out.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::kernels;
use crate::kernels::{ConvGeometry, ConvGrads, GroupNormGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Tanh,
    Silu,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    MaxAbs,
}

enum OpRecord<T> {
    Leaf,
    Conv2d {
        input: TensorId,
        weight: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        padding: usize,
    },
    UpsampleNearest {
        input: TensorId,
        factor: usize,
    },
    Unary {
        input: TensorId,
        kind: UnaryKind,
    },
    Binary {
        lhs: TensorId,
        rhs: TensorId,
        kind: BinaryKind,
    },
    Scale {
        input: TensorId,
        factor: f64,
    },
    Reduce {
        input: TensorId,
        kind: ReduceKind,
        argmax: usize,
    },
    Matmul {
        lhs: TensorId,
        rhs: TensorId,
    },
    Transpose {
        input: TensorId,
    },
    SoftmaxRows {
        input: TensorId,
    },
    Reshape {
        input: TensorId,
    },
    ConcatChannels {
        lhs: TensorId,
        rhs: TensorId,
    },
    SliceChannels {
        input: TensorId,
        from: usize,
    },
    GroupNorm {
        input: TensorId,
        gamma: TensorId,
        beta: TensorId,
        groups: usize,
        saved: Vec<(T, T)>,
    },
    StraightThrough {
        continuous: TensorId,
    },
    Detach,
}

struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    op: OpRecord<T>,
    requires_grad: bool,
}

pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    parallel: bool,
}

/// Per-node gradients produced by a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    sizes: Vec<usize>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of the loss w.r.t. the given node, if any path reached it.
    pub fn get(&self, id: TensorId) -> Option<&[T]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient with unreached nodes materialized as zeros.
    pub fn get_or_zeros(&self, id: TensorId) -> Vec<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![T::ZERO; self.sizes[id.0]],
        }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), parallel: false }
    }

    /// Enable kernel-level threading. Outputs stay bit-identical to the
    /// sequential path; kernels only split disjoint output regions.
    pub fn with_parallel(parallel: bool) -> Self {
        Self { nodes: Vec::new(), parallel }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Overwrite a leaf's values in place (used to re-run a recorded
    /// parameter set; shape must match).
    pub fn set_leaf_data(&mut self, id: TensorId, data: &[T]) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if data.len() != node.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "set_leaf_data",
                detail: format!("expected {} values, got {}", node.data.len(), data.len()),
            });
        }
        node.data.copy_from_slice(data);
        Ok(())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: OpRecord<T>, requires_grad: bool) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node { shape, data, op, requires_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn check_finite(&self, id: TensorId, op: &'static str) -> Result<TensorId> {
        if self.nodes[id.0].data.iter().all(|v| v.is_finite()) {
            Ok(id)
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<TensorId> {
        if numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "leaf",
                detail: format!("shape {:?} holds {} values, got {}", shape, numel(shape), data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFiniteInput { op: "leaf" });
        }
        Ok(self.push(shape.to_vec(), data, OpRecord::Leaf, requires_grad))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<TensorId> {
        self.leaf(shape, data, false)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(vec![], vec![T::from_f64(v)], OpRecord::Leaf, false)
    }

    // ----- convolution and resampling ---------------------------------

    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let in_shape = self.shape(input).to_vec();
        let w_shape = self.shape(weight).to_vec();
        if in_shape.len() != 3 || w_shape.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("want CxHxW input and OxIxKxK weight, got {:?} and {:?}", in_shape, w_shape),
            });
        }
        let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        let (c_out, w_cin, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
        if kh != kw {
            return Err(TensorError::InvalidConv(format!("kernel must be square, got {kh}x{kw}")));
        }
        let k = kh;
        if k % 2 == 0 {
            return Err(TensorError::InvalidConv(format!("kernel size {k} must be odd")));
        }
        if w_cin != c_in {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                detail: format!("weight expects {w_cin} input channels, input has {c_in}"),
            });
        }
        if h < k || w < k {
            return Err(TensorError::InvalidConv(format!("input {h}x{w} smaller than kernel {k}")));
        }
        if stride == 0 {
            return Err(TensorError::InvalidConv("stride must be >= 1".into()));
        }
        if let Some(b) = bias {
            let b_shape = self.shape(b);
            if b_shape != [c_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    detail: format!("bias shape {:?} does not match {c_out} output channels", b_shape),
                });
            }
        }
        let h_out = (h + 2 * padding - k) / stride + 1;
        let w_out = (w + 2 * padding - k) / stride + 1;
        if h_out == 0 || w_out == 0 {
            return Err(TensorError::InvalidConv(format!(
                "empty output for input {h}x{w}, kernel {k}, stride {stride}, padding {padding}"
            )));
        }
        let geom = ConvGeometry {
            c_in,
            h_in: h,
            w_in: w,
            c_out,
            kernel: k,
            stride,
            padding,
            h_out,
            w_out,
        };
        let mut out = vec![T::ZERO; c_out * h_out * w_out];
        kernels::conv2d_forward(
            self.data(input),
            self.data(weight),
            bias.map(|b| self.data(b)),
            &geom,
            self.parallel,
            &mut out,
        );
        let rg = self.requires_grad(input)
            || self.requires_grad(weight)
            || bias.map_or(false, |b| self.requires_grad(b));
        let id = self.push(
            vec![c_out, h_out, w_out],
            out,
            OpRecord::Conv2d { input, weight, bias, stride, padding },
            rg,
        );
        self.check_finite(id, "conv2d")
    }

    pub fn upsample_nearest(&mut self, input: TensorId, factor: usize) -> Result<TensorId> {
        if factor < 1 {
            return Err(TensorError::InvalidUpsampleFactor);
        }
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "upsample_nearest",
                detail: format!("want CxHxW, got {:?}", s),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut out = vec![T::ZERO; c * h * factor * w * factor];
        kernels::upsample_forward(self.data(input), c, h, w, factor, &mut out);
        let rg = self.requires_grad(input);
        let id = self.push(
            vec![c, h * factor, w * factor],
            out,
            OpRecord::UpsampleNearest { input, factor },
            rg,
        );
        self.check_finite(id, "upsample_nearest")
    }

    // ----- elementwise -------------------------------------------------

    fn unary(&mut self, input: TensorId, kind: UnaryKind) -> Result<TensorId> {
        let data: Vec<T> = self.data(input)
            .iter()
            .map(|&x| match kind {
                UnaryKind::Tanh => x.tanh(),
                UnaryKind::Silu => x * sigmoid(x),
                UnaryKind::Abs => x.abs(),
            })
            .collect();
        let shape = self.shape(input).to_vec();
        let rg = self.requires_grad(input);
        let id = self.push(shape, data, OpRecord::Unary { input, kind }, rg);
        self.check_finite(id, "unary")
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, UnaryKind::Tanh)
    }

    pub fn silu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, UnaryKind::Silu)
    }

    pub fn abs(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, UnaryKind::Abs)
    }

    /// Equal shapes, or either side a one-element scalar.
    fn binary(&mut self, lhs: TensorId, rhs: TensorId, kind: BinaryKind) -> Result<TensorId> {
        let (ls, rs) = (self.shape(lhs).to_vec(), self.shape(rhs).to_vec());
        let (ln, rn) = (numel(&ls), numel(&rs));
        let compatible = ls == rs || ln == 1 || rn == 1;
        if !compatible {
            return Err(TensorError::ShapeMismatch {
                op: "binary",
                detail: format!("shapes {:?} and {:?} are neither equal nor scalar-with-tensor", ls, rs),
            });
        }
        let (a, b) = (self.data(lhs), self.data(rhs));
        let out_len = ln.max(rn);
        let mut out = Vec::with_capacity(out_len);
        let apply = |x: T, y: T| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        if ls == rs {
            out.extend(a.iter().zip(b.iter()).map(|(&x, &y)| apply(x, y)));
        } else if rn == 1 {
            let y = b[0];
            out.extend(a.iter().map(|&x| apply(x, y)));
        } else {
            let x = a[0];
            out.extend(b.iter().map(|&y| apply(x, y)));
        }
        let shape = if ln >= rn { ls } else { rs };
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        let id = self.push(shape, out, OpRecord::Binary { lhs, rhs, kind }, rg);
        self.check_finite(id, "binary")
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn scale(&mut self, x: TensorId, factor: f64) -> Result<TensorId> {
        let f = T::from_f64(factor);
        let data: Vec<T> = self.data(x).iter().map(|&v| v * f).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        let id = self.push(shape, data, OpRecord::Scale { input: x, factor }, rg);
        self.check_finite(id, "scale")
    }

    // ----- reductions ----------------------------------------------------

    fn reduce(&mut self, input: TensorId, kind: ReduceKind) -> Result<TensorId> {
        let data = self.data(input);
        if data.is_empty() {
            return Err(TensorError::EmptyTensor { op: "reduce" });
        }
        let mut argmax = 0usize;
        let value = match kind {
            ReduceKind::Sum => {
                let mut s = T::ZERO;
                for &v in data {
                    s += v;
                }
                s
            }
            ReduceKind::Mean => {
                let mut s = T::ZERO;
                for &v in data {
                    s += v;
                }
                s * T::from_f64(1.0 / data.len() as f64)
            }
            ReduceKind::MaxAbs => {
                let mut best = data[0].abs();
                for (i, &v) in data.iter().enumerate() {
                    if v.abs() > best {
                        best = v.abs();
                        argmax = i;
                    }
                }
                best
            }
        };
        let rg = self.requires_grad(input);
        let id = self.push(vec![], vec![value], OpRecord::Reduce { input, kind, argmax }, rg);
        self.check_finite(id, "reduce")
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        self.reduce(x, ReduceKind::Sum)
    }

    pub fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        self.reduce(x, ReduceKind::Mean)
    }

    pub fn max_abs(&mut self, x: TensorId) -> Result<TensorId> {
        self.reduce(x, ReduceKind::MaxAbs)
    }

    // ----- linear algebra ------------------------------------------------

    pub fn matmul(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId> {
        let (ls, rs) = (self.shape(lhs).to_vec(), self.shape(rhs).to_vec());
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                detail: format!("incompatible shapes {:?} x {:?}", ls, rs),
            });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let mut out = vec![T::ZERO; m * n];
        kernels::gemm_nn(self.data(lhs), self.data(rhs), m, k, n, &mut out, self.parallel);
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        let id = self.push(vec![m, n], out, OpRecord::Matmul { lhs, rhs }, rg);
        self.check_finite(id, "matmul")
    }

    pub fn transpose(&mut self, input: TensorId) -> Result<TensorId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose",
                detail: format!("want 2-d, got {:?}", s),
            });
        }
        let (m, n) = (s[0], s[1]);
        let a = self.data(input);
        let mut out = vec![T::ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
        let rg = self.requires_grad(input);
        Ok(self.push(vec![n, m], out, OpRecord::Transpose { input }, rg))
    }

    pub fn softmax_rows(&mut self, input: TensorId) -> Result<TensorId> {
        let s = self.shape(input).to_vec();
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_rows",
                detail: format!("want 2-d, got {:?}", s),
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let mut out = vec![T::ZERO; rows * cols];
        kernels::softmax_rows_forward(self.data(input), rows, cols, &mut out);
        let rg = self.requires_grad(input);
        let id = self.push(s, out, OpRecord::SoftmaxRows { input }, rg);
        self.check_finite(id, "softmax_rows")
    }

    pub fn reshape(&mut self, input: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != self.data(input).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!("cannot view {} values as {:?}", self.data(input).len(), shape),
            });
        }
        let data = self.data(input).to_vec();
        let rg = self.requires_grad(input);
        Ok(self.push(shape.to_vec(), data, OpRecord::Reshape { input }, rg))
    }

    // ----- channel plumbing ----------------------------------------------

    pub fn concat_channels(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId> {
        let (ls, rs) = (self.shape(lhs).to_vec(), self.shape(rhs).to_vec());
        if ls.len() != 3 || rs.len() != 3 || ls[1..] != rs[1..] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                detail: format!("incompatible shapes {:?} and {:?}", ls, rs),
            });
        }
        let mut data = Vec::with_capacity(self.data(lhs).len() + self.data(rhs).len());
        data.extend_from_slice(self.data(lhs));
        data.extend_from_slice(self.data(rhs));
        let shape = vec![ls[0] + rs[0], ls[1], ls[2]];
        let rg = self.requires_grad(lhs) || self.requires_grad(rhs);
        Ok(self.push(shape, data, OpRecord::ConcatChannels { lhs, rhs }, rg))
    }

    pub fn slice_channels(&mut self, input: TensorId, from: usize, to: usize) -> Result<TensorId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 || from >= to || to > s[0] {
            return Err(TensorError::ShapeMismatch {
                op: "slice_channels",
                detail: format!("cannot slice channels {from}..{to} of {:?}", s),
            });
        }
        let plane = s[1] * s[2];
        let data = self.data(input)[from * plane..to * plane].to_vec();
        let shape = vec![to - from, s[1], s[2]];
        let rg = self.requires_grad(input);
        Ok(self.push(shape, data, OpRecord::SliceChannels { input, from }, rg))
    }

    // ----- normalization ---------------------------------------------------

    pub fn group_norm(
        &mut self,
        input: TensorId,
        gamma: TensorId,
        beta: TensorId,
        groups: usize,
        eps: f64,
    ) -> Result<TensorId> {
        let s = self.shape(input).to_vec();
        if s.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "group_norm",
                detail: format!("want CxHxW, got {:?}", s),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::InvalidGroups { groups, channels: c });
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "group_norm",
                detail: format!(
                    "gamma {:?} / beta {:?} do not match {c} channels",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            });
        }
        let mut out = vec![T::ZERO; c * h * w];
        let saved = kernels::group_norm_forward(
            self.data(input),
            self.data(gamma),
            self.data(beta),
            c,
            h * w,
            groups,
            eps,
            &mut out,
        );
        let rg = self.requires_grad(input) || self.requires_grad(gamma) || self.requires_grad(beta);
        let id = self.push(s, out, OpRecord::GroupNorm { input, gamma, beta, groups, saved }, rg);
        self.check_finite(id, "group_norm")
    }

    // ----- quantization glue ------------------------------------------------

    /// Forward takes the quantized values; backward copies the upstream
    /// gradient to the continuous input and sends nothing to the quantized
    /// side.
    pub fn straight_through(&mut self, continuous: TensorId, quantized: TensorId) -> Result<TensorId> {
        if self.shape(continuous) != self.shape(quantized) {
            return Err(TensorError::ShapeMismatch {
                op: "straight_through",
                detail: format!(
                    "continuous {:?} vs quantized {:?}",
                    self.shape(continuous),
                    self.shape(quantized)
                ),
            });
        }
        let data = self.data(quantized).to_vec();
        let shape = self.shape(quantized).to_vec();
        let rg = self.requires_grad(continuous);
        let id = self.push(shape, data, OpRecord::StraightThrough { continuous }, rg);
        self.check_finite(id, "straight_through")
    }

    /// Forward copy that blocks all gradient flow.
    pub fn detach(&mut self, input: TensorId) -> Result<TensorId> {
        let data = self.data(input).to_vec();
        let shape = self.shape(input).to_vec();
        Ok(self.push(shape, data, OpRecord::Detach, false))
    }

    // ----- backward ---------------------------------------------------------

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: TensorId) -> Result<Gradients<T>> {
        if numel(self.shape(loss)) != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.backward_seeded(loss, &[T::ONE])
    }

    /// Reverse pass from any node with a caller-supplied upstream gradient.
    pub fn backward_seeded(&self, node: TensorId, seed: &[T]) -> Result<Gradients<T>> {
        if seed.len() != self.data(node).len() {
            return Err(TensorError::ShapeMismatch {
                op: "backward_seeded",
                detail: format!("seed length {} vs node length {}", seed.len(), self.data(node).len()),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[node.0] = Some(seed.to_vec());

        for id in (0..=node.0).rev() {
            if grads[id].is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let upstream = grads[id].take().unwrap();
            self.dispatch_backward(id, &upstream, &mut grads);
            grads[id] = Some(upstream);
        }

        let sizes = self.nodes.iter().map(|n| n.data.len()).collect();
        Ok(Gradients { grads, sizes })
    }

    fn accum(&self, grads: &mut [Option<Vec<T>>], id: TensorId) -> bool {
        if !self.nodes[id.0].requires_grad {
            return false;
        }
        if grads[id.0].is_none() {
            grads[id.0] = Some(vec![T::ZERO; self.nodes[id.0].data.len()]);
        }
        true
    }

    fn dispatch_backward(&self, id: usize, upstream: &[T], grads: &mut Vec<Option<Vec<T>>>) {
        match &self.nodes[id].op {
            OpRecord::Leaf | OpRecord::Detach => {}
            OpRecord::Conv2d { input, weight, bias, stride, padding } => {
                let in_shape = self.shape(*input);
                let w_shape = self.shape(*weight);
                let out_shape = &self.nodes[id].shape;
                let geom = ConvGeometry {
                    c_in: in_shape[0],
                    h_in: in_shape[1],
                    w_in: in_shape[2],
                    c_out: w_shape[0],
                    kernel: w_shape[2],
                    stride: *stride,
                    padding: *padding,
                    h_out: out_shape[1],
                    w_out: out_shape[2],
                };
                let want_input = self.accum(grads, *input);
                let want_weight = self.accum(grads, *weight);
                let want_bias = bias.map_or(false, |b| self.accum(grads, b));
                if !(want_input || want_weight || want_bias) {
                    return;
                }
                // Split mutable borrows: take buffers out, then put back.
                let mut gi = if want_input { grads[input.0].take() } else { None };
                let mut gw = if want_weight { grads[weight.0].take() } else { None };
                let mut gb = match (want_bias, bias) {
                    (true, Some(b)) => grads[b.0].take(),
                    _ => None,
                };
                kernels::conv2d_backward(
                    self.data(*input),
                    self.data(*weight),
                    upstream,
                    &geom,
                    self.parallel,
                    ConvGrads {
                        d_input: gi.as_deref_mut(),
                        d_weight: gw.as_deref_mut(),
                        d_bias: gb.as_deref_mut(),
                    },
                );
                if let Some(g) = gi {
                    grads[input.0] = Some(g);
                }
                if let Some(g) = gw {
                    grads[weight.0] = Some(g);
                }
                if let (Some(g), Some(b)) = (gb, bias) {
                    grads[b.0] = Some(g);
                }
            }
            OpRecord::UpsampleNearest { input, factor } => {
                if self.accum(grads, *input) {
                    let s = self.shape(*input);
                    let g = grads[input.0].as_mut().unwrap();
                    kernels::upsample_backward(upstream, s[0], s[1], s[2], *factor, g);
                }
            }
            OpRecord::Unary { input, kind } => {
                if self.accum(grads, *input) {
                    let x = self.data(*input);
                    let g = grads[input.0].as_mut().unwrap();
                    match kind {
                        UnaryKind::Tanh => {
                            let y = &self.nodes[id].data;
                            for ((gi, &yi), &u) in g.iter_mut().zip(y.iter()).zip(upstream.iter()) {
                                *gi += u * (T::ONE - yi * yi);
                            }
                        }
                        UnaryKind::Silu => {
                            for ((gi, &xi), &u) in g.iter_mut().zip(x.iter()).zip(upstream.iter()) {
                                let s = sigmoid(xi);
                                *gi += u * s * (T::ONE + xi * (T::ONE - s));
                            }
                        }
                        UnaryKind::Abs => {
                            for ((gi, &xi), &u) in g.iter_mut().zip(x.iter()).zip(upstream.iter()) {
                                *gi += u * sign(xi);
                            }
                        }
                    }
                }
            }
            OpRecord::Binary { lhs, rhs, kind } => {
                let ln = self.data(*lhs).len();
                let rn = self.data(*rhs).len();
                let (lhs, rhs, kind) = (*lhs, *rhs, *kind);
                if self.accum(grads, lhs) {
                    let rhs_data = self.data(rhs);
                    let g = grads[lhs.0].as_mut().unwrap();
                    match kind {
                        BinaryKind::Add | BinaryKind::Sub => {
                            if ln == upstream.len() {
                                for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                                    *gi += u;
                                }
                            } else {
                                let mut s = T::ZERO;
                                for &u in upstream {
                                    s += u;
                                }
                                g[0] += s;
                            }
                        }
                        BinaryKind::Mul => {
                            if ln == upstream.len() {
                                if rn == 1 {
                                    let y = rhs_data[0];
                                    for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                                        *gi = u.mul_add(y, *gi);
                                    }
                                } else {
                                    for ((gi, &u), &y) in
                                        g.iter_mut().zip(upstream.iter()).zip(rhs_data.iter())
                                    {
                                        *gi = u.mul_add(y, *gi);
                                    }
                                }
                            } else {
                                g[0] += kernels::dot(upstream, rhs_data);
                            }
                        }
                    }
                }
                if self.accum(grads, rhs) {
                    let lhs_data = self.data(lhs);
                    let g = grads[rhs.0].as_mut().unwrap();
                    match kind {
                        BinaryKind::Add => {
                            if rn == upstream.len() {
                                for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                                    *gi += u;
                                }
                            } else {
                                let mut s = T::ZERO;
                                for &u in upstream {
                                    s += u;
                                }
                                g[0] += s;
                            }
                        }
                        BinaryKind::Sub => {
                            if rn == upstream.len() {
                                for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                                    *gi -= u;
                                }
                            } else {
                                let mut s = T::ZERO;
                                for &u in upstream {
                                    s += u;
                                }
                                g[0] -= s;
                            }
                        }
                        BinaryKind::Mul => {
                            if rn == upstream.len() {
                                if ln == 1 {
                                    let x = lhs_data[0];
                                    for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                                        *gi = u.mul_add(x, *gi);
                                    }
                                } else {
                                    for ((gi, &u), &x) in
                                        g.iter_mut().zip(upstream.iter()).zip(lhs_data.iter())
                                    {
                                        *gi = u.mul_add(x, *gi);
                                    }
                                }
                            } else {
                                g[0] += kernels::dot(upstream, lhs_data);
                            }
                        }
                    }
                }
            }
            OpRecord::Scale { input, factor } => {
                if self.accum(grads, *input) {
                    let f = T::from_f64(*factor);
                    let g = grads[input.0].as_mut().unwrap();
                    for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                        *gi = u.mul_add(f, *gi);
                    }
                }
            }
            OpRecord::Reduce { input, kind, argmax } => {
                if self.accum(grads, *input) {
                    let u = upstream[0];
                    let g = grads[input.0].as_mut().unwrap();
                    match kind {
                        ReduceKind::Sum => {
                            for gi in g.iter_mut() {
                                *gi += u;
                            }
                        }
                        ReduceKind::Mean => {
                            let f = u * T::from_f64(1.0 / g.len() as f64);
                            for gi in g.iter_mut() {
                                *gi += f;
                            }
                        }
                        ReduceKind::MaxAbs => {
                            let x = self.data(*input)[*argmax];
                            g[*argmax] += u * sign(x);
                        }
                    }
                }
            }
            OpRecord::Matmul { lhs, rhs } => {
                let (m, k) = {
                    let s = self.shape(*lhs);
                    (s[0], s[1])
                };
                let n = self.shape(*rhs)[1];
                if self.accum(grads, *lhs) {
                    let b = self.data(*rhs);
                    let g = grads[lhs.0].as_mut().unwrap();
                    kernels::gemm_nt_add(upstream, b, m, k, n, g);
                }
                if self.accum(grads, *rhs) {
                    let a = self.data(*lhs);
                    let g = grads[rhs.0].as_mut().unwrap();
                    kernels::gemm_tn_add(a, upstream, m, k, n, g);
                }
            }
            OpRecord::Transpose { input } => {
                if self.accum(grads, *input) {
                    let s = self.shape(*input);
                    let (m, n) = (s[0], s[1]);
                    let g = grads[input.0].as_mut().unwrap();
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] += upstream[j * m + i];
                        }
                    }
                }
            }
            OpRecord::SoftmaxRows { input } => {
                if self.accum(grads, *input) {
                    let s = self.shape(*input);
                    let y = &self.nodes[id].data;
                    let g = grads[input.0].as_mut().unwrap();
                    kernels::softmax_rows_backward(y, upstream, s[0], s[1], g);
                }
            }
            OpRecord::Reshape { input } => {
                if self.accum(grads, *input) {
                    let g = grads[input.0].as_mut().unwrap();
                    for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                        *gi += u;
                    }
                }
            }
            OpRecord::ConcatChannels { lhs, rhs } => {
                let ln = self.data(*lhs).len();
                if self.accum(grads, *lhs) {
                    let g = grads[lhs.0].as_mut().unwrap();
                    for (gi, &u) in g.iter_mut().zip(upstream[..ln].iter()) {
                        *gi += u;
                    }
                }
                if self.accum(grads, *rhs) {
                    let g = grads[rhs.0].as_mut().unwrap();
                    for (gi, &u) in g.iter_mut().zip(upstream[ln..].iter()) {
                        *gi += u;
                    }
                }
            }
            OpRecord::SliceChannels { input, from } => {
                if self.accum(grads, *input) {
                    let s = self.shape(*input);
                    let plane = s[1] * s[2];
                    let g = grads[input.0].as_mut().unwrap();
                    for (gi, &u) in g[from * plane..].iter_mut().zip(upstream.iter()) {
                        *gi += u;
                    }
                }
            }
            OpRecord::GroupNorm { input, gamma, beta, groups, saved } => {
                let s = self.shape(*input);
                let (c, spatial) = (s[0], s[1] * s[2]);
                let want_input = self.accum(grads, *input);
                let want_gamma = self.accum(grads, *gamma);
                let want_beta = self.accum(grads, *beta);
                if !(want_input || want_gamma || want_beta) {
                    return;
                }
                let mut gi = if want_input { grads[input.0].take() } else { None };
                let mut gg = if want_gamma { grads[gamma.0].take() } else { None };
                let mut gb = if want_beta { grads[beta.0].take() } else { None };
                kernels::group_norm_backward(
                    self.data(*input),
                    self.data(*gamma),
                    saved,
                    upstream,
                    c,
                    spatial,
                    *groups,
                    GroupNormGrads {
                        d_input: gi.as_deref_mut(),
                        d_gamma: gg.as_deref_mut(),
                        d_beta: gb.as_deref_mut(),
                    },
                );
                if let Some(g) = gi {
                    grads[input.0] = Some(g);
                }
                if let Some(g) = gg {
                    grads[gamma.0] = Some(g);
                }
                if let Some(g) = gb {
                    grads[beta.0] = Some(g);
                }
            }
            OpRecord::StraightThrough { continuous } => {
                if self.accum(grads, *continuous) {
                    let g = grads[continuous.0].as_mut().unwrap();
                    for (gi, &u) in g.iter_mut().zip(upstream.iter()) {
                        *gi += u;
                    }
                }
            }
        }
    }
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline(always)]
fn sigmoid<T: Element>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

#[inline(always)]
fn sign<T: Element>(x: T) -> T {
    if x > T::ZERO {
        T::ONE
    } else if x < T::ZERO {
        -T::ONE
    } else {
        T::ZERO
    }
}

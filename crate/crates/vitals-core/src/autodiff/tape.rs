//! Wengert-list tape: eager forward evaluation, reverse-mode backward.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, ConvGeom};
use super::{TapeError, Tensor};
use crate::fft;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub usize);

/// Zero-padding mode for `conv2d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pad {
    /// Output spatial size = ceil(input / stride); zero padding split evenly
    /// (extra cell goes to the bottom/right).
    Same,
    /// No padding; kernel must fit inside the input.
    Valid,
}

/// How a binary elementwise op lines its operands up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EwPlan {
    Equal,
    LhsScalar,
    RhsScalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize, EwPlan),
    Sub(usize, usize, EwPlan),
    Mul(usize, usize, EwPlan),
    Div(usize, usize, EwPlan),
    Matmul(usize, usize),
    Conv2d { x: usize, w: usize, b: Option<usize>, geom: ConvGeom },
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    SoftmaxLast(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: f64 },
    SumAll(usize),
    MeanAll(usize),
    MeanLast { x: usize, axes: usize },
    Reshape(usize),
    Transpose { x: usize, perm: Vec<usize> },
    Concat { xs: Vec<usize>, axis: usize },
    Slice { x: usize, axis: usize, start: usize },
    Rfft { x: usize, n: usize },
    Irfft { x: usize, n: usize },
    ConjMul(usize, usize),
    MagSq(usize),
    MaxAll { x: usize, argmax: usize },
    Linear { x: usize, w: usize, b: usize },
    AvgPool2(usize),
    Sqrt(usize),
    AttnMaskNorm(usize),
}

/// Append-only record of operations; node ids are insertion indices, so every
/// node's inputs strictly precede it and reverse iteration is a valid
/// backward schedule.
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    needs: Vec<bool>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            needs: Vec::new(),
            backward_done: false,
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, needs: bool) -> Var {
        let id = self.ops.len();
        // gradient buffers stay empty until backward materializes them, so
        // forward-only graphs (inference) pay no gradient memory
        self.grads.push(Vec::new());
        self.values.push(value);
        self.ops.push(op);
        self.needs.push(needs);
        Var(id)
    }

    /// Trainable input: participates in gradient computation.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Non-trainable input: data, masks, fixed coefficients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn scalar_const(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    /// Gradient buffer of a node: empty until `backward` materializes it,
    /// and an untouched (constant-subgraph) node stays all-zero.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }

    pub fn grad_tensor(&self, v: Var) -> Tensor {
        let shape = self.values[v.0].shape.clone();
        if self.grads[v.0].is_empty() {
            return Tensor::zeros(&shape);
        }
        Tensor::new(shape, self.grads[v.0].clone())
    }

    /// Zero all gradients and re-arm `backward`.
    pub fn reset_grads(&mut self) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v = 0.0;
            }
        }
        self.backward_done = false;
    }

    fn needs_of(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.needs[i])
    }

    // ---- elementwise binaries ------------------------------------------------

    fn ew_plan(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(EwPlan, Vec<usize>), TapeError> {
        if a.shape == b.shape {
            return Ok((EwPlan::Equal, a.shape.clone()));
        }
        if b.is_scalar() {
            return Ok((EwPlan::RhsScalar, a.shape.clone()));
        }
        if a.is_scalar() {
            return Ok((EwPlan::LhsScalar, b.shape.clone()));
        }
        Err(TapeError::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
        mk: fn(usize, usize, EwPlan) -> Op,
    ) -> Result<Var, TapeError> {
        let (plan, shape) = Self::ew_plan(name, &self.values[a.0], &self.values[b.0])?;
        let av = &self.values[a.0].data;
        let bv = &self.values[b.0].data;
        let data: Vec<f64> = match plan {
            EwPlan::Equal => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            EwPlan::LhsScalar => bv.iter().map(|&y| f(av[0], y)).collect(),
            EwPlan::RhsScalar => av.iter().map(|&x| f(x, bv[0])).collect(),
        };
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.push(mk(a.0, b.0, plan), Tensor::new(shape, data), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.binary("add", a, b, |x, y| x + y, |a, b, p| Op::Add(a, b, p))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.binary("sub", a, b, |x, y| x - y, |a, b, p| Op::Sub(a, b, p))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.binary("mul", a, b, |x, y| x * y, |a, b, p| Op::Mul(a, b, p))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.binary("div", a, b, |x, y| x / y, |a, b, p| Op::Div(a, b, p))
    }

    // ---- linear algebra ------------------------------------------------------

    /// 2-D `[m,k]·[k,n]` or batched 3-D `[b,m,k]·[b,k,n]` matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let (ash, bsh) = (&self.values[a.0].shape, &self.values[b.0].shape);
        let mismatch = || TapeError::ShapeMismatch {
            op: "matmul",
            lhs: ash.clone(),
            rhs: bsh.clone(),
        };
        let out_shape: Vec<usize> = match (ash.len(), bsh.len()) {
            (2, 2) if ash[1] == bsh[0] => vec![ash[0], bsh[1]],
            (3, 3) if ash[0] == bsh[0] && ash[2] == bsh[1] => vec![ash[0], ash[1], bsh[2]],
            _ => return Err(mismatch()),
        };
        let (av, bv) = (&self.values[a.0].data, &self.values[b.0].data);
        let mut out = vec![0.0; out_shape.iter().product()];
        if ash.len() == 2 {
            ops::matmul_fwd(av, bv, ash[0], ash[1], bsh[1], &mut out);
        } else {
            let (bt, m, k, n) = (ash[0], ash[1], ash[2], bsh[2]);
            for i in 0..bt {
                ops::matmul_fwd(
                    &av[i * m * k..(i + 1) * m * k],
                    &bv[i * k * n..(i + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.push(Op::Matmul(a.0, b.0), Tensor::new(out_shape, out), needs))
    }

    /// `x[..., in] · w[in, out] + b[out]`, batched over all leading axes.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TapeError> {
        let xsh = &self.values[x.0].shape;
        let wsh = &self.values[w.0].shape;
        let bsh = &self.values[b.0].shape;
        let bad = |lhs: &Vec<usize>, rhs: &Vec<usize>| TapeError::ShapeMismatch {
            op: "linear",
            lhs: lhs.clone(),
            rhs: rhs.clone(),
        };
        if wsh.len() != 2 || xsh.is_empty() || *xsh.last().unwrap() != wsh[0] {
            return Err(bad(xsh, wsh));
        }
        if bsh.len() != 1 || bsh[0] != wsh[1] {
            return Err(bad(wsh, bsh));
        }
        let (din, dout) = (wsh[0], wsh[1]);
        let rows = self.values[x.0].numel() / din;
        let mut out = vec![0.0; rows * dout];
        for orow in out.chunks_exact_mut(dout) {
            orow.copy_from_slice(&self.values[b.0].data);
        }
        ops::matmul_fwd(
            &self.values[x.0].data,
            &self.values[w.0].data,
            rows,
            din,
            dout,
            &mut out,
        );
        let mut out_shape = xsh.clone();
        *out_shape.last_mut().unwrap() = dout;
        let needs = self.needs_of(&[x.0, w.0, b.0]);
        Ok(self.push(
            Op::Linear { x: x.0, w: w.0, b: b.0 },
            Tensor::new(out_shape, out),
            needs,
        ))
    }

    /// NCHW convolution; weight `[cout, cin, kh, kw]`, optional bias `[cout]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: Pad,
    ) -> Result<Var, TapeError> {
        let xsh = &self.values[x.0].shape;
        let wsh = &self.values[w.0].shape;
        if xsh.len() != 4 || wsh.len() != 4 || xsh[1] != wsh[1] {
            return Err(TapeError::ShapeMismatch {
                op: "conv2d",
                lhs: xsh.clone(),
                rhs: wsh.clone(),
            });
        }
        if stride != 1 && stride != 2 {
            return Err(TapeError::Unsupported {
                op: "conv2d",
                detail: format!("stride {} (only 1 and 2)", stride),
            });
        }
        let (batch, cin, h, w_in) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let (cout, kh, kw) = (wsh[0], wsh[2], wsh[3]);
        if let Some(bv) = bias {
            let bsh = &self.values[bv.0].shape;
            if bsh.len() != 1 || bsh[0] != cout {
                return Err(TapeError::ShapeMismatch {
                    op: "conv2d",
                    lhs: wsh.clone(),
                    rhs: bsh.clone(),
                });
            }
        }
        let geom = match pad {
            Pad::Same => {
                let out_h = h.div_ceil(stride);
                let out_w = w_in.div_ceil(stride);
                let pad_h = ((out_h - 1) * stride + kh).saturating_sub(h);
                let pad_w = ((out_w - 1) * stride + kw).saturating_sub(w_in);
                ConvGeom {
                    batch,
                    cin,
                    h,
                    w: w_in,
                    cout,
                    kh,
                    kw,
                    stride,
                    pad_top: pad_h / 2,
                    pad_left: pad_w / 2,
                    out_h,
                    out_w,
                }
            }
            Pad::Valid => {
                if h < kh || w_in < kw {
                    return Err(TapeError::Unsupported {
                        op: "conv2d",
                        detail: format!(
                            "valid padding: kernel {}x{} larger than input {}x{}",
                            kh, kw, h, w_in
                        ),
                    });
                }
                ConvGeom {
                    batch,
                    cin,
                    h,
                    w: w_in,
                    cout,
                    kh,
                    kw,
                    stride,
                    pad_top: 0,
                    pad_left: 0,
                    out_h: (h - kh) / stride + 1,
                    out_w: (w_in - kw) / stride + 1,
                }
            }
        };
        let mut out = vec![0.0; geom.batch * geom.cout * geom.out_h * geom.out_w];
        ops::conv2d_fwd(
            &self.values[x.0].data,
            &self.values[w.0].data,
            bias.map(|b| self.values[b.0].data.as_slice()),
            &geom,
            &mut out,
        );
        let shape = geom.out_shape();
        let mut ids = vec![x.0, w.0];
        if let Some(b) = bias {
            ids.push(b.0);
        }
        let needs = self.needs_of(&ids);
        Ok(self.push(
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: bias.map(|b| b.0),
                geom,
            },
            Tensor::new(shape, out),
            needs,
        ))
    }

    // ---- activations ----------------------------------------------------------

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, mk: fn(usize) -> Op) -> Var {
        let t = &self.values[x.0];
        let out = Tensor::new(t.shape.clone(), t.data.iter().map(|&v| f(v)).collect());
        let needs = self.needs[x.0];
        self.push(mk(x.0), out, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + libm::exp(-v)), Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, libm::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, libm::sqrt, Op::Sqrt)
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if t.shape.is_empty() {
            return Err(TapeError::Unsupported {
                op: "softmax_last",
                detail: format!("rank-0 input {:?}", t.shape),
            });
        }
        let last = *t.shape.last().unwrap();
        let mut out = t.data.clone();
        for row in out.chunks_exact_mut(last) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - mx);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let needs = self.needs[x.0];
        let shape = t.shape.clone();
        Ok(self.push(Op::SoftmaxLast(x.0), Tensor::new(shape, out), needs))
    }

    /// Layer normalization over the last axis with learned gain and shift.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if t.shape.is_empty() {
            return Err(TapeError::Unsupported {
                op: "layer_norm",
                detail: format!("rank-0 input {:?}", t.shape),
            });
        }
        let last = *t.shape.last().unwrap();
        let gsh = &self.values[gamma.0].shape;
        let bsh = &self.values[beta.0].shape;
        if gsh != &[last] || bsh != &[last] {
            return Err(TapeError::ShapeMismatch {
                op: "layer_norm",
                lhs: t.shape.clone(),
                rhs: if gsh != &[last] { gsh.clone() } else { bsh.clone() },
            });
        }
        let gv = &self.values[gamma.0].data;
        let bv = &self.values[beta.0].data;
        let mut out = t.data.clone();
        for row in out.chunks_exact_mut(last) {
            let mean = row.iter().sum::<f64>() / last as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / last as f64;
            let inv = 1.0 / libm::sqrt(var + eps);
            for (j, v) in row.iter_mut().enumerate() {
                *v = gv[j] * ((*v - mean) * inv) + bv[j];
            }
        }
        let needs = self.needs_of(&[x.0, gamma.0, beta.0]);
        let shape = t.shape.clone();
        Ok(self.push(
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                eps,
            },
            Tensor::new(shape, out),
            needs,
        ))
    }

    // ---- reductions -----------------------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.values[x.0].data.iter().sum();
        let needs = self.needs[x.0];
        self.push(Op::SumAll(x.0), Tensor::scalar(s), needs)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = &self.values[x.0];
        let m = t.data.iter().sum::<f64>() / t.numel() as f64;
        let needs = self.needs[x.0];
        self.push(Op::MeanAll(x.0), Tensor::scalar(m), needs)
    }

    /// Mean over the trailing `axes` axes (e.g. global average pooling of
    /// NCHW with `axes = 2` gives `[n, c]`).
    pub fn mean_last(&mut self, x: Var, axes: usize) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if axes == 0 || axes > t.rank() {
            return Err(TapeError::Unsupported {
                op: "mean_last",
                detail: format!("cannot reduce {} trailing axes of rank {}", axes, t.rank()),
            });
        }
        let lead_shape = t.shape[..t.rank() - axes].to_vec();
        let block: usize = t.shape[t.rank() - axes..].iter().product();
        let lead: usize = lead_shape.iter().product();
        let mut out = vec![0.0; lead];
        for (l, o) in out.iter_mut().enumerate() {
            *o = t.data[l * block..(l + 1) * block].iter().sum::<f64>() / block as f64;
        }
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::MeanLast { x: x.0, axes },
            Tensor::new(lead_shape, out),
            needs,
        ))
    }

    /// Global max with deterministic tie-breaking (lowest flat index wins);
    /// gradient flows only to the winning element.
    pub fn max_with_argmax(&mut self, x: Var) -> (Var, usize) {
        let t = &self.values[x.0];
        let mut best = 0usize;
        for (i, &v) in t.data.iter().enumerate() {
            if v > t.data[best] {
                best = i;
            }
        }
        let needs = self.needs[x.0];
        let v = self.push(
            Op::MaxAll { x: x.0, argmax: best },
            Tensor::scalar(t.data[best]),
            needs,
        );
        (v, best)
    }

    // ---- shape plumbing ---------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        let n: usize = shape.iter().product();
        if n != t.numel() {
            return Err(TapeError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let out = Tensor::new(shape.to_vec(), t.data.clone());
        let needs = self.needs[x.0];
        Ok(self.push(Op::Reshape(x.0), out, needs))
    }

    pub fn transpose(&mut self, x: Var, perm: &[usize]) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        let rank = t.rank();
        let mut seen = vec![false; rank];
        let valid = perm.len() == rank && perm.iter().all(|&p| p < rank && !core::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(TapeError::Unsupported {
                op: "transpose",
                detail: format!("perm {:?} invalid for rank {}", perm, rank),
            });
        }
        let (shape, data) = ops::transpose_copy(&t.data, &t.shape, perm);
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::Transpose {
                x: x.0,
                perm: perm.to_vec(),
            },
            Tensor::new(shape, data),
            needs,
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var, TapeError> {
        if xs.is_empty() {
            return Err(TapeError::Unsupported {
                op: "concat",
                detail: "no inputs".into(),
            });
        }
        let first = &self.values[xs[0].0].shape;
        if axis >= first.len() {
            return Err(TapeError::Unsupported {
                op: "concat",
                detail: format!("axis {} out of range for rank {}", axis, first.len()),
            });
        }
        let mut total_axis = 0usize;
        for v in xs {
            let sh = &self.values[v.0].shape;
            let compatible = sh.len() == first.len()
                && sh
                    .iter()
                    .zip(first.iter())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TapeError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: sh.clone(),
                });
            }
            total_axis += sh[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total_axis;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; shape.iter().product()];
        let mut off = 0usize;
        for v in xs {
            let t = &self.values[v.0];
            let ext = t.shape[axis];
            for o in 0..outer {
                let src = &t.data[o * ext * inner..(o + 1) * ext * inner];
                let dst_start = (o * total_axis + off) * inner;
                out[dst_start..dst_start + ext * inner].copy_from_slice(src);
            }
            off += ext;
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        let needs = self.needs_of(&ids);
        Ok(self.push(Op::Concat { xs: ids, axis }, Tensor::new(shape, out), needs))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if axis >= t.rank() || start + len > t.shape[axis] || len == 0 {
            return Err(TapeError::Unsupported {
                op: "slice",
                detail: format!(
                    "range {}..{} on axis {} of shape {:?}",
                    start,
                    start + len,
                    axis,
                    t.shape
                ),
            });
        }
        let outer: usize = t.shape[..axis].iter().product();
        let inner: usize = t.shape[axis + 1..].iter().product();
        let ext = t.shape[axis];
        let mut shape = t.shape.clone();
        shape[axis] = len;
        let mut out = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = (o * ext + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&t.data[src..src + len * inner]);
        }
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::Slice {
                x: x.0,
                axis,
                start,
            },
            Tensor::new(shape, out),
            needs,
        ))
    }

    /// 2×2 average pooling with stride 2 on NCHW; odd trailing rows/columns
    /// are dropped (output extents are floored halves).
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if t.rank() != 4 {
            return Err(TapeError::Unsupported {
                op: "avg_pool2",
                detail: format!("need NCHW input, got shape {:?}", t.shape),
            });
        }
        let (n, c, h, w) = (t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(TapeError::Unsupported {
                op: "avg_pool2",
                detail: format!("input {}x{} too small to pool", h, w),
            });
        }
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let xin = &t.data[nc * h * w..(nc + 1) * h * w];
            let xout = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = (2 * oy) * w + 2 * ox;
                    xout[oy * ow + ox] =
                        0.25 * (xin[base] + xin[base + 1] + xin[base + w] + xin[base + w + 1]);
                }
            }
        }
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::AvgPool2(x.0),
            Tensor::new(vec![n, c, oh, ow], out),
            needs,
        ))
    }

    // ---- spectral ops -----------------------------------------------------------

    /// Real FFT of a rank-1 signal: `[n]` → `[n/2+1, 2]` (re, im) bins.
    pub fn rfft(&mut self, x: Var) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if t.rank() != 1 || t.numel() < 2 {
            return Err(TapeError::Unsupported {
                op: "rfft",
                detail: format!("need rank-1 signal of length >= 2, got {:?}", t.shape),
            });
        }
        let n = t.numel();
        let (re, im) = fft::rfft(&t.data);
        let bins = re.len();
        let mut out = vec![0.0; bins * 2];
        for k in 0..bins {
            out[2 * k] = re[k];
            out[2 * k + 1] = im[k];
        }
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::Rfft { x: x.0, n },
            Tensor::new(vec![bins, 2], out),
            needs,
        ))
    }

    /// Inverse real FFT: `[n/2+1, 2]` bins → length-`n` signal.
    pub fn irfft(&mut self, x: Var, n: usize) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        let bins = fft::rfft_bins(n);
        if t.rank() != 2 || t.shape[1] != 2 || t.shape[0] != bins {
            return Err(TapeError::ShapeMismatch {
                op: "irfft",
                lhs: t.shape.clone(),
                rhs: vec![bins, 2],
            });
        }
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        for k in 0..bins {
            re[k] = t.data[2 * k];
            im[k] = t.data[2 * k + 1];
        }
        let out = fft::irfft(&re, &im, n);
        let needs = self.needs[x.0];
        Ok(self.push(
            Op::Irfft { x: x.0, n },
            Tensor::new(vec![n], out),
            needs,
        ))
    }

    /// Complex bin product `a · conj(b)` on `[m, 2]` (re, im) layouts.
    pub fn conj_mul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let ok = ta.rank() == 2 && ta.shape[1] == 2 && ta.shape == tb.shape;
        if !ok {
            return Err(TapeError::ShapeMismatch {
                op: "conj_mul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let m = ta.shape[0];
        let mut out = vec![0.0; m * 2];
        for k in 0..m {
            let (ar, ai) = (ta.data[2 * k], ta.data[2 * k + 1]);
            let (br, bi) = (tb.data[2 * k], tb.data[2 * k + 1]);
            out[2 * k] = ar * br + ai * bi;
            out[2 * k + 1] = ai * br - ar * bi;
        }
        let needs = self.needs_of(&[a.0, b.0]);
        Ok(self.push(
            Op::ConjMul(a.0, b.0),
            Tensor::new(vec![m, 2], out),
            needs,
        ))
    }

    /// Squared magnitude per complex bin: `[m, 2]` → `[m]`.
    pub fn mag_sq(&mut self, x: Var) -> Result<Var, TapeError> {
        let t = &self.values[x.0];
        if t.rank() != 2 || t.shape[1] != 2 {
            return Err(TapeError::Unsupported {
                op: "mag_sq",
                detail: format!("need [m, 2] complex bins, got {:?}", t.shape),
            });
        }
        let m = t.shape[0];
        let mut out = vec![0.0; m];
        for k in 0..m {
            let (r, i) = (t.data[2 * k], t.data[2 * k + 1]);
            out[k] = r * r + i * i;
        }
        let needs = self.needs[x.0];
        Ok(self.push(Op::MagSq(x.0), Tensor::new(vec![m], out), needs))
    }

    /// Spatial attention normalization: for each sample along axis 0 with M
    /// elements, `q = M·z / (2·Σ|z|)`, so the per-sample sum is exactly M/2.
    pub fn attn_mask_norm(&mut self, z: Var) -> Result<Var, TapeError> {
        let t = &self.values[z.0];
        if t.rank() < 2 {
            return Err(TapeError::Unsupported {
                op: "attn_mask_norm",
                detail: format!("need at least rank 2, got {:?}", t.shape),
            });
        }
        let batch = t.shape[0];
        let m = t.numel() / batch;
        let mut out = t.data.clone();
        for sample in out.chunks_exact_mut(m) {
            let s: f64 = sample.iter().map(|v| v.abs()).sum();
            debug_assert!(s > 0.0, "attn_mask_norm: all-zero mask");
            let scale = m as f64 / (2.0 * s);
            for v in sample.iter_mut() {
                *v *= scale;
            }
            #[cfg(debug_assertions)]
            {
                let total: f64 = sample.iter().sum();
                debug_assert!(
                    (total - m as f64 / 2.0).abs() <= 1e-10 * m as f64,
                    "attention mask sum {} deviates from {}",
                    total,
                    m as f64 / 2.0
                );
            }
        }
        let needs = self.needs[z.0];
        let shape = t.shape.clone();
        Ok(self.push(Op::AttnMaskNorm(z.0), Tensor::new(shape, out), needs))
    }

    // ---- backward ---------------------------------------------------------------

    /// Reverse pass: accumulates ∂loss/∂node into every node's grad buffer.
    pub fn backward(&mut self, loss: Var) -> Result<(), TapeError> {
        if self.backward_done {
            return Err(TapeError::BackwardTwice);
        }
        let lt = &self.values[loss.0];
        if lt.numel() != 1 {
            return Err(TapeError::NonScalarLoss {
                shape: lt.shape.clone(),
            });
        }
        self.backward_done = true;
        for i in 0..=loss.0 {
            if (self.needs[i] || i == loss.0) && self.grads[i].is_empty() {
                self.grads[i] = vec![0.0; self.values[i].numel()];
            }
        }
        self.grads[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            if !self.needs[i] {
                continue;
            }
            let op = self.ops[i].clone();
            let (head, tail) = self.grads.split_at_mut(i);
            let gout: &[f64] = &tail[0];
            let values = &self.values;
            let needs = &self.needs;
            match op {
                Op::Leaf => {}
                Op::Add(a, b, plan) => {
                    if needs[a] {
                        acc_to(&mut head[a], gout, plan, Side::Lhs);
                    }
                    if needs[b] {
                        acc_to(&mut head[b], gout, plan, Side::Rhs);
                    }
                }
                Op::Sub(a, b, plan) => {
                    if needs[a] {
                        acc_to(&mut head[a], gout, plan, Side::Lhs);
                    }
                    if needs[b] {
                        acc_neg_to(&mut head[b], gout, plan, Side::Rhs);
                    }
                }
                Op::Mul(a, b, plan) => {
                    let (av, bv) = (&values[a].data, &values[b].data);
                    if needs[a] {
                        acc_scaled(&mut head[a], gout, bv, plan, Side::Lhs);
                    }
                    if needs[b] {
                        acc_scaled(&mut head[b], gout, av, plan, Side::Rhs);
                    }
                }
                Op::Div(a, b, plan) => {
                    let (av, bv) = (&values[a].data, &values[b].data);
                    let pick = |s: &[f64], j: usize, scalar: bool| if scalar { s[0] } else { s[j] };
                    let (a_scalar, b_scalar) = match plan {
                        EwPlan::Equal => (false, false),
                        EwPlan::LhsScalar => (true, false),
                        EwPlan::RhsScalar => (false, true),
                    };
                    for j in 0..gout.len() {
                        let bj = pick(bv, j, b_scalar);
                        if needs[a] {
                            let da = gout[j] / bj;
                            if a_scalar {
                                head[a][0] += da;
                            } else {
                                head[a][j] += da;
                            }
                        }
                        if needs[b] {
                            let aj = pick(av, j, a_scalar);
                            let db = -gout[j] * aj / (bj * bj);
                            if b_scalar {
                                head[b][0] += db;
                            } else {
                                head[b][j] += db;
                            }
                        }
                    }
                }
                Op::Matmul(a, b) => {
                    let ash = &values[a].shape;
                    let bsh = &values[b].shape;
                    let (av, bv) = (&values[a].data, &values[b].data);
                    if ash.len() == 2 {
                        let (m, k, n) = (ash[0], ash[1], bsh[1]);
                        if needs[a] {
                            ops::matmul_bwd_a(gout, bv, m, k, n, &mut head[a]);
                        }
                        if needs[b] {
                            ops::matmul_bwd_b(av, gout, m, k, n, &mut head[b]);
                        }
                    } else {
                        let (bt, m, k, n) = (ash[0], ash[1], ash[2], bsh[2]);
                        for t in 0..bt {
                            let gslice = &gout[t * m * n..(t + 1) * m * n];
                            if needs[a] {
                                ops::matmul_bwd_a(
                                    gslice,
                                    &bv[t * k * n..(t + 1) * k * n],
                                    m,
                                    k,
                                    n,
                                    &mut head[a][t * m * k..(t + 1) * m * k],
                                );
                            }
                            if needs[b] {
                                ops::matmul_bwd_b(
                                    &av[t * m * k..(t + 1) * m * k],
                                    gslice,
                                    m,
                                    k,
                                    n,
                                    &mut head[b][t * k * n..(t + 1) * k * n],
                                );
                            }
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let din = values[w].shape[0];
                    let dout = values[w].shape[1];
                    let rows = values[x].numel() / din;
                    if needs[x] {
                        ops::matmul_bwd_a(gout, &values[w].data, rows, din, dout, &mut head[x]);
                    }
                    if needs[w] {
                        ops::matmul_bwd_b(&values[x].data, gout, rows, din, dout, &mut head[w]);
                    }
                    if needs[b] {
                        for r in 0..rows {
                            for o in 0..dout {
                                head[b][o] += gout[r * dout + o];
                            }
                        }
                    }
                }
                Op::Conv2d { x, w, b, geom } => {
                    let dx = needs[x];
                    let dw = needs[w];
                    let (hx, rest) = split_two(head, x, w);
                    ops::conv2d_bwd(
                        &values[x].data,
                        &values[w].data,
                        gout,
                        &geom,
                        if dx { Some(hx) } else { None },
                        if dw { Some(rest) } else { None },
                        None,
                    );
                    if let Some(bi) = b {
                        if needs[bi] {
                            let oplane = geom.out_h * geom.out_w;
                            for bt in 0..geom.batch {
                                for co in 0..geom.cout {
                                    let base = (bt * geom.cout + co) * oplane;
                                    head[bi][co] += gout[base..base + oplane].iter().sum::<f64>();
                                }
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &values[i].data;
                    for j in 0..gout.len() {
                        head[x][j] += gout[j] * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Tanh(x) => {
                    let y = &values[i].data;
                    for j in 0..gout.len() {
                        head[x][j] += gout[j] * (1.0 - y[j] * y[j]);
                    }
                }
                Op::Relu(x) => {
                    let xin = &values[x].data;
                    for j in 0..gout.len() {
                        if xin[j] > 0.0 {
                            head[x][j] += gout[j];
                        }
                    }
                }
                Op::Sqrt(x) => {
                    let y = &values[i].data;
                    for j in 0..gout.len() {
                        head[x][j] += gout[j] * 0.5 / y[j];
                    }
                }
                Op::SoftmaxLast(x) => {
                    let y = &values[i].data;
                    let last = *values[i].shape.last().unwrap();
                    for r in 0..y.len() / last {
                        let ys = &y[r * last..(r + 1) * last];
                        let gs = &gout[r * last..(r + 1) * last];
                        let dot: f64 = ys.iter().zip(gs).map(|(&yv, &gv)| yv * gv).sum();
                        let hx = &mut head[x][r * last..(r + 1) * last];
                        for j in 0..last {
                            hx[j] += ys[j] * (gs[j] - dot);
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let xin = &values[x].data;
                    let gv = &values[gamma].data;
                    let last = *values[x].shape.last().unwrap();
                    let lastf = last as f64;
                    for r in 0..xin.len() / last {
                        let xs = &xin[r * last..(r + 1) * last];
                        let gs = &gout[r * last..(r + 1) * last];
                        let mean = xs.iter().sum::<f64>() / lastf;
                        let var =
                            xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / lastf;
                        let inv = 1.0 / libm::sqrt(var + eps);
                        let mut mg = 0.0;
                        let mut mgx = 0.0;
                        for j in 0..last {
                            let xh = (xs[j] - mean) * inv;
                            let gy = gs[j] * gv[j];
                            mg += gy;
                            mgx += gy * xh;
                        }
                        mg /= lastf;
                        mgx /= lastf;
                        if needs[x] {
                            for j in 0..last {
                                let xh = (xs[j] - mean) * inv;
                                head[x][r * last + j] += inv * (gs[j] * gv[j] - mg - xh * mgx);
                            }
                        }
                        if needs[gamma] {
                            for j in 0..last {
                                let xh = (xs[j] - mean) * inv;
                                head[gamma][j] += gs[j] * xh;
                            }
                        }
                        if needs[beta] {
                            for j in 0..last {
                                head[beta][j] += gs[j];
                            }
                        }
                    }
                }
                Op::SumAll(x) => {
                    let g = gout[0];
                    for v in head[x].iter_mut() {
                        *v += g;
                    }
                }
                Op::MeanAll(x) => {
                    let g = gout[0] / values[x].numel() as f64;
                    for v in head[x].iter_mut() {
                        *v += g;
                    }
                }
                Op::MeanLast { x, axes } => {
                    let rank = values[x].rank();
                    let block: usize = values[x].shape[rank - axes..].iter().product();
                    let gscale = 1.0 / block as f64;
                    for (l, &g) in gout.iter().enumerate() {
                        let dst = &mut head[x][l * block..(l + 1) * block];
                        for v in dst.iter_mut() {
                            *v += g * gscale;
                        }
                    }
                }
                Op::Reshape(x) => {
                    for (d, &g) in head[x].iter_mut().zip(gout) {
                        *d += g;
                    }
                }
                Op::Transpose { x, perm } => {
                    let mut inv = vec![0usize; perm.len()];
                    for (idx, &p) in perm.iter().enumerate() {
                        inv[p] = idx;
                    }
                    let (_, gt) = ops::transpose_copy(gout, &values[i].shape, &inv);
                    for (d, g) in head[x].iter_mut().zip(gt) {
                        *d += g;
                    }
                }
                Op::Concat { xs, axis } => {
                    let out_shape = &values[i].shape;
                    let outer: usize = out_shape[..axis].iter().product();
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let total = out_shape[axis];
                    let mut off = 0usize;
                    for xi in xs {
                        let ext = values[xi].shape[axis];
                        if needs[xi] {
                            for o in 0..outer {
                                let src = (o * total + off) * inner;
                                let dst = &mut head[xi][o * ext * inner..(o + 1) * ext * inner];
                                for (d, &g) in dst.iter_mut().zip(&gout[src..src + ext * inner]) {
                                    *d += g;
                                }
                            }
                        }
                        off += ext;
                    }
                }
                Op::Slice { x, axis, start } => {
                    let in_shape = &values[x].shape;
                    let outer: usize = in_shape[..axis].iter().product();
                    let inner: usize = in_shape[axis + 1..].iter().product();
                    let ext = in_shape[axis];
                    let len = values[i].shape[axis];
                    for o in 0..outer {
                        let dst = (o * ext + start) * inner;
                        let src = o * len * inner;
                        for j in 0..len * inner {
                            head[x][dst + j] += gout[src + j];
                        }
                    }
                }
                Op::AvgPool2(x) => {
                    let sh = &values[x].shape;
                    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
                    let (oh, ow) = (h / 2, w / 2);
                    for nc in 0..n * c {
                        let gsl = &gout[nc * oh * ow..(nc + 1) * oh * ow];
                        let dst = &mut head[x][nc * h * w..(nc + 1) * h * w];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = 0.25 * gsl[oy * ow + ox];
                                let base = (2 * oy) * w + 2 * ox;
                                dst[base] += g;
                                dst[base + 1] += g;
                                dst[base + w] += g;
                                dst[base + w + 1] += g;
                            }
                        }
                    }
                }
                Op::Rfft { x, n } => {
                    let bins = fft::rfft_bins(n);
                    let mut gre = vec![0.0; bins];
                    let mut gim = vec![0.0; bins];
                    for k in 0..bins {
                        gre[k] = gout[2 * k];
                        gim[k] = gout[2 * k + 1];
                    }
                    let adj = fft::rfft_adjoint(&gre, &gim, n);
                    for (d, g) in head[x].iter_mut().zip(adj) {
                        *d += g;
                    }
                }
                Op::Irfft { x, n } => {
                    let (are, aim) = fft::irfft_adjoint(gout, n);
                    for k in 0..are.len() {
                        head[x][2 * k] += are[k];
                        head[x][2 * k + 1] += aim[k];
                    }
                }
                Op::ConjMul(a, b) => {
                    let (av, bv) = (&values[a].data, &values[b].data);
                    let m = values[i].shape[0];
                    for k in 0..m {
                        let (gr, gi) = (gout[2 * k], gout[2 * k + 1]);
                        let (ar, ai) = (av[2 * k], av[2 * k + 1]);
                        let (br, bi) = (bv[2 * k], bv[2 * k + 1]);
                        if needs[a] {
                            head[a][2 * k] += gr * br - gi * bi;
                            head[a][2 * k + 1] += gr * bi + gi * br;
                        }
                        if needs[b] {
                            head[b][2 * k] += gr * ar + gi * ai;
                            head[b][2 * k + 1] += gr * ai - gi * ar;
                        }
                    }
                }
                Op::MagSq(x) => {
                    let xv = &values[x].data;
                    for k in 0..gout.len() {
                        head[x][2 * k] += 2.0 * xv[2 * k] * gout[k];
                        head[x][2 * k + 1] += 2.0 * xv[2 * k + 1] * gout[k];
                    }
                }
                Op::MaxAll { x, argmax } => {
                    head[x][argmax] += gout[0];
                }
                Op::AttnMaskNorm(x) => {
                    let zv = &values[x].data;
                    let batch = values[x].shape[0];
                    let m = zv.len() / batch;
                    let c = m as f64 / 2.0;
                    for s in 0..batch {
                        let zs = &zv[s * m..(s + 1) * m];
                        let gs = &gout[s * m..(s + 1) * m];
                        let sum: f64 = zs.iter().map(|v| v.abs()).sum();
                        let dot: f64 = gs.iter().zip(zs).map(|(&g, &z)| g * z).sum();
                        let hx = &mut head[x][s * m..(s + 1) * m];
                        for j in 0..m {
                            let sign = if zs[j] >= 0.0 { 1.0 } else { -1.0 };
                            hx[j] += c / sum * gs[j] - c / (sum * sum) * sign * dot;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

enum Side {
    Lhs,
    Rhs,
}

/// Accumulate `gout` into a grad buffer, reducing to one slot when this side
/// was the broadcast scalar.
fn acc_to(dst: &mut [f64], gout: &[f64], plan: EwPlan, side: Side) {
    let scalar = matches!(
        (plan, side),
        (EwPlan::LhsScalar, Side::Lhs) | (EwPlan::RhsScalar, Side::Rhs)
    );
    if scalar {
        dst[0] += gout.iter().sum::<f64>();
    } else {
        for (d, &g) in dst.iter_mut().zip(gout) {
            *d += g;
        }
    }
}

fn acc_neg_to(dst: &mut [f64], gout: &[f64], plan: EwPlan, side: Side) {
    let scalar = matches!(
        (plan, side),
        (EwPlan::LhsScalar, Side::Lhs) | (EwPlan::RhsScalar, Side::Rhs)
    );
    if scalar {
        dst[0] -= gout.iter().sum::<f64>();
    } else {
        for (d, &g) in dst.iter_mut().zip(gout) {
            *d -= g;
        }
    }
}

/// For `mul`: grad of one side is `gout · other side's value`, with scalar
/// broadcast handled on either operand.
fn acc_scaled(dst: &mut [f64], gout: &[f64], other: &[f64], plan: EwPlan, side: Side) {
    let (self_scalar, other_scalar) = match (plan, side) {
        (EwPlan::Equal, _) => (false, false),
        (EwPlan::LhsScalar, Side::Lhs) => (true, false),
        (EwPlan::LhsScalar, Side::Rhs) => (false, true),
        (EwPlan::RhsScalar, Side::Lhs) => (false, true),
        (EwPlan::RhsScalar, Side::Rhs) => (true, false),
    };
    for j in 0..gout.len() {
        let o = if other_scalar { other[0] } else { other[j] };
        if self_scalar {
            dst[0] += gout[j] * o;
        } else {
            dst[j] += gout[j] * o;
        }
    }
}

/// Disjoint mutable borrows of two grad buffers (x != w guaranteed by caller
/// passing distinct node ids).
fn split_two(head: &mut [Vec<f64>], x: usize, w: usize) -> (&mut [f64], &mut [f64]) {
    assert_ne!(x, w, "conv2d: x and w must be distinct nodes");
    if x < w {
        let (a, b) = head.split_at_mut(w);
        (&mut a[x], &mut b[0])
    } else {
        let (a, b) = head.split_at_mut(x);
        let (xs, ws) = (&mut b[0], &mut a[w]);
        (xs, ws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn add_elementwise() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let b = t.leaf(Tensor::from_vec(vec![3.0, 4.0]));
        let c = t.add(a, b).unwrap();
        assert_eq!(t.value(c).data, vec![4.0, 6.0]);
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let eye = t.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let x = t.leaf(Tensor::new(vec![2, 1], vec![5.0, 7.0]));
        let y = t.matmul(eye, x).unwrap();
        assert_eq!(t.value(y).data, vec![5.0, 7.0]);
        assert_eq!(t.value(y).shape, vec![2, 1]);
    }

    #[test]
    fn rfft_dc_only() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 1.0, 1.0, 1.0]));
        let f = t.rfft(x).unwrap();
        let bins = t.value(f);
        assert_eq!(bins.shape, vec![3, 2]);
        assert!((bins.data[0] - 4.0).abs() < 1e-12);
        for &v in &bins.data[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum_all(sq);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[2.0, 4.0]);
    }

    #[test]
    fn backward_constant_loss_leaves_grads_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let _unused = t.sum_all(sq);
        let c = t.constant(Tensor::scalar(3.0));
        t.backward(c).unwrap();
        assert_eq!(t.grad(x), &[0.0, 0.0]);
        assert_eq!(t.grad(c), &[1.0]);
    }

    #[test]
    fn backward_mean_sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![0.0]));
        let s = t.sigmoid(x);
        let loss = t.mean_all(s);
        t.backward(loss).unwrap();
        assert!((t.grad(x)[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_and_double_call() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(
            t.backward(x),
            Err(TapeError::NonScalarLoss { .. })
        ));
        let loss = t.sum_all(x);
        t.backward(loss).unwrap();
        assert_eq!(t.backward(loss), Err(TapeError::BackwardTwice));
        t.reset_grads();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_errors_name_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let b = t.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        match t.add(a, b) {
            Err(TapeError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "add");
                assert_eq!(lhs, vec![2]);
                assert_eq!(rhs, vec![3]);
            }
            other => panic!("expected shape mismatch, got {:?}", other.map(|v| v.0)),
        }
        assert!(t.matmul(a, b).is_err());
    }

    #[test]
    fn scalar_broadcast_forward_and_backward() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let s = t.leaf(Tensor::scalar(2.0));
        let y = t.mul(x, s).unwrap();
        assert_eq!(t.value(y).data, vec![2.0, 4.0, 6.0]);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[2.0, 2.0, 2.0]);
        assert_eq!(t.grad(s), &[6.0]); // sum of x
    }

    #[test]
    fn div_by_scalar_backward() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![2.0, 4.0]));
        let s = t.leaf(Tensor::scalar(2.0));
        let y = t.div(x, s).unwrap();
        assert_eq!(t.value(y).data, vec![1.0, 2.0]);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[0.5, 0.5]);
        // d(sum(x/s))/ds = -sum(x)/s² = -6/4
        assert!((t.grad(s)[0] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn max_ties_break_to_lowest_index() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 7.0, 7.0, 3.0]));
        let (m, idx) = t.max_with_argmax(x);
        assert_eq!(idx, 1);
        assert_eq!(t.value(m).data, vec![7.0]);
        t.backward(m).unwrap();
        assert_eq!(t.grad(x), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip_with_grads() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let b = t.leaf(Tensor::new(vec![2, 1], vec![5.0, 6.0]));
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).shape, vec![2, 3]);
        assert_eq!(t.value(c).data, vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = t.slice(c, 1, 2, 1).unwrap();
        assert_eq!(t.value(back).data, vec![5.0, 6.0]);
        let loss = t.sum_all(back);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(a), &[0.0; 4]);
        assert_eq!(t.grad(b), &[1.0, 1.0]);
    }

    #[test]
    fn concat_same_input_twice_accumulates() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]));
        let c = t.concat(&[a, a], 0).unwrap();
        assert_eq!(t.value(c).shape, vec![2, 2]);
        let loss = t.sum_all(c);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(a), &[2.0, 2.0]);
    }

    #[test]
    fn avg_pool_floors_odd_extents() {
        let mut t = Tape::new();
        // 1x1x3x3: only the top-left 2x2 participates
        let x = t.leaf(Tensor::new(
            vec![1, 1, 3, 3],
            vec![1.0, 2.0, 9.0, 3.0, 4.0, 9.0, 9.0, 9.0, 9.0],
        ));
        let y = t.avg_pool2(x).unwrap();
        assert_eq!(t.value(y).shape, vec![1, 1, 1, 1]);
        assert_eq!(t.value(y).data, vec![2.5]);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(
            t.grad(x),
            &[0.25, 0.25, 0.0, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn attn_mask_norm_constant_map_gives_half() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::new(vec![1, 1, 2, 2], vec![0.3; 4]));
        let q = t.attn_mask_norm(z).unwrap();
        for &v in &t.value(q).data {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn attn_mask_norm_sum_identity_random_maps() {
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..10 {
            let mut t = Tape::new();
            let data: alloc::vec::Vec<f64> = (0..2 * 12).map(|_| rng.next_f64() * 0.98 + 0.01).collect();
            let z = t.leaf(Tensor::new(vec![2, 1, 3, 4], data));
            let q = t.attn_mask_norm(z).unwrap();
            for s in 0..2 {
                let total: f64 = t.value(q).data[s * 12..(s + 1) * 12].iter().sum();
                assert!((total - 6.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]));
        let y = t.softmax_last(x).unwrap();
        for row in t.value(y).data.chunks_exact(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_same_keeps_size_and_valid_shrinks() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 1, 4, 4], vec![1.0; 16]));
        let w = t.leaf(Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]));
        let same = t.conv2d(x, w, None, 1, Pad::Same).unwrap();
        assert_eq!(t.value(same).shape, vec![1, 1, 4, 4]);
        let valid = t.conv2d(x, w, None, 1, Pad::Valid).unwrap();
        assert_eq!(t.value(valid).shape, vec![1, 1, 2, 2]);
        assert_eq!(t.value(valid).data, vec![9.0; 4]);
        let strided = t.conv2d(x, w, None, 2, Pad::Same).unwrap();
        assert_eq!(t.value(strided).shape, vec![1, 1, 2, 2]);
    }

    #[test]
    fn conv2d_bias_feeds_every_output() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 1, 2, 2], vec![0.0; 4]));
        let w = t.leaf(Tensor::new(vec![2, 1, 1, 1], vec![1.0, 1.0]));
        let b = t.leaf(Tensor::from_vec(vec![0.5, -1.0]));
        let y = t.conv2d(x, w, Some(b), 1, Pad::Same).unwrap();
        assert_eq!(t.value(y).data, vec![0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0]);
        let loss = t.sum_all(y);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(b), &[4.0, 4.0]);
    }

    #[test]
    fn linear_applies_bias_per_row() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let w = t.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = t.leaf(Tensor::from_vec(vec![10.0, 20.0, 30.0]));
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.value(y).shape, vec![2, 3]);
        assert_eq!(
            t.value(y).data,
            vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]
        );
    }

    #[test]
    fn irfft_inverts_rfft_on_tape() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5]));
        let f = t.rfft(x).unwrap();
        let back = t.irfft(f, 6).unwrap();
        for (a, b) in t.value(x).data.iter().zip(&t.value(back).data) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

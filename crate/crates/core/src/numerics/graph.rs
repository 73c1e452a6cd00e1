//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every operation pushes a node that
//! holds its forward value and enough context to propagate adjoints.
//! Because nodes are only ever appended, creation order is a valid
//! topological order and [`Graph::backward`] simply walks the tape in
//! reverse.
//!
//! Leaves created with [`Graph::leaf`] accumulate their gradients across
//! calls to `backward` until [`Graph::zero_grad`] is called. Intermediate
//! adjoints are discarded after each pass.

use log::warn;

use super::tensor::{dot, matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

/// Backward rule for an operation implemented outside this module.
///
/// `backward` receives the forward inputs, the forward output and the
/// adjoint of the output, and returns one optional adjoint per input.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor)
        -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    MatMul { a: Var, b: Var },
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Softmax { a: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gather { table: Var, idx: Vec<usize> },
    Sum(Var),
    ScaleRows { x: Var, s: Var },
    SliceRows { x: Var, start: usize },
    PadRows(Var),
    ConcatCols(Vec<Var>),
    Bce { p: Var, labels: Vec<f64> },
    BceLogits { s: Var, labels: Vec<f64> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_raw(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.push_raw(value, op, tracked)
    }

    /// Registers the result of an externally computed operation.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            inputs,
        )
    }

    /// `y = x·Wᵀ + b` with `x: [n × in]`, `W: [out × in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, din) = (xv.rows(), xv.cols());
        if wv.rank() != 2 || wv.cols() != din {
            return Err(Error::dim("linear", xv.shape(), wv.shape()));
        }
        let dout = wv.rows();
        if bv.len() != dout {
            return Err(Error::dim("linear bias", wv.shape(), bv.shape()));
        }
        let mut out = vec![0.0; n * dout];
        for i in 0..n {
            out[i * dout..(i + 1) * dout].copy_from_slice(bv.data());
        }
        matmul_bt_acc(xv.data(), wv.data(), &mut out, n, din, dout);
        let value = Tensor::new(&[n, dout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::dim("add", av.shape(), bv.shape()));
        }
        let mut value = av.clone();
        value.add_assign(bv);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Sums several same-shaped values.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::arg("add_all needs at least one operand"))?;
        rest.iter().try_fold(first, |acc, &p| self.add(acc, p))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::dim("mul", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape(), data)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Activation::Relu => |x| x.max(0.0),
            Activation::Tanh => f64::tanh,
            Activation::Sigmoid => sigmoid,
        };
        let value = self.value(a).map(f);
        self.push(value, Op::Act(a, kind), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// Softmax over `axis` (0 or 1 for matrices, 0 for vectors), computed
    /// with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let av = self.value(a);
        let layout = SliceLayout::new(av.shape(), axis)?;
        let mut out = av.clone();
        for g in 0..layout.groups {
            let idx: Vec<usize> = layout.indices(g).collect();
            let max = idx
                .iter()
                .map(|&i| av.data()[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &i in &idx {
                let e = (av.data()[i] - max).exp();
                out.data_mut()[i] = e;
                total += e;
            }
            for &i in &idx {
                out.data_mut()[i] /= total;
            }
        }
        Ok(self.push(out, Op::Softmax { a, axis }, &[a]))
    }

    /// Row-wise layer normalization with learned `gain` and `bias` of
    /// length `d`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let (n, d) = (xv.rows(), xv.cols());
        if gv.len() != d || bv.len() != d {
            return Err(Error::dim("layer_norm", xv.shape(), gv.shape()));
        }
        let mut out = vec![0.0; n * d];
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[i * d + j] = h;
                out[i * d + j] = gv.data()[j] * h + bv.data()[j];
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Copies rows of `table` into a `[k × d]` matrix. Indices past the end
    /// clamp to the last row.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Var {
        let tv = self.value(table);
        let (v, d) = (tv.rows(), tv.cols());
        let idx: Vec<usize> = indices
            .iter()
            .map(|&i| {
                if i >= v {
                    warn!("embedding index {i} out of range for table of {v} rows; clamped");
                    v - 1
                } else {
                    i
                }
            })
            .collect();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            out.extend_from_slice(tv.row(i));
        }
        let value = Tensor::new(&[idx.len(), d], out).expect("gather shape");
        self.push(value, Op::Gather { table, idx }, &[table])
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    /// Scales row `i` of `x` by `s[i]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.len() != xv.rows() {
            return Err(Error::dim("scale_rows", xv.shape(), sv.shape()));
        }
        let mut value = xv.clone();
        for i in 0..xv.rows() {
            let c = sv.data()[i];
            value.row_mut(i).iter_mut().for_each(|v| *v *= c);
        }
        Ok(self.push(value, Op::ScaleRows { x, s }, &[x, s]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.rows() {
            return Err(Error::dim("slice_rows", xv.shape(), &[start + len]));
        }
        let c = xv.cols();
        let data = xv.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::new(&[len, c], data)?;
        Ok(self.push(value, Op::SliceRows { x, start }, &[x]))
    }

    /// Appends zero rows until the matrix has `total` rows.
    pub fn pad_rows(&mut self, x: Var, total: usize) -> Result<Var> {
        let xv = self.value(x);
        if total < xv.rows() {
            return Err(Error::dim("pad_rows", xv.shape(), &[total]));
        }
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        data.resize(total * c, 0.0);
        let value = Tensor::new(&[total, c], data)?;
        Ok(self.push(value, Op::PadRows(x), &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != n {
                return Err(Error::dim("concat_cols", self.value(parts[0]).shape(), pv.shape()));
            }
            widths.push(pv.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::new(&[n, total], data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Binary cross-entropy on probabilities, summed over entries.
    pub fn bce(&mut self, p: Var, labels: &[f64]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != labels.len() {
            return Err(Error::arg(format!(
                "cross-entropy length mismatch: {} probabilities vs {} labels",
                pv.len(),
                labels.len()
            )));
        }
        let loss: f64 = pv
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                labels: labels.to_vec(),
            },
            &[p],
        ))
    }

    /// Binary cross-entropy on pre-sigmoid scores, summed over entries.
    /// Equal to `bce(sigmoid(s), labels)` but stable for saturated scores.
    pub fn bce_with_logits(&mut self, s: Var, labels: &[f64]) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != labels.len() {
            return Err(Error::arg(format!(
                "cross-entropy length mismatch: {} scores vs {} labels",
                sv.len(),
                labels.len()
            )));
        }
        let loss: f64 = sv
            .data()
            .iter()
            .zip(labels)
            .map(|(&s, &y)| softplus(s) - y * s)
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                s,
                labels: labels.to_vec(),
            },
            &[s],
        ))
    }

    /// Propagates d`loss`/d(node) to every tracked leaf, adding into the
    /// leaf's existing gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (parent, pg) in self.local_grads(i, &g) {
                if !self.nodes[parent.0].tracked {
                    continue;
                }
                match &mut adj[parent.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let gd = g.data();
        match &node.op {
            Op::Leaf => vec![],
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, din, dout) = (xv.rows(), xv.cols(), wv.rows());
                let mut dx = vec![0.0; n * din];
                matmul_acc(gd, wv.data(), &mut dx, n, dout, din);
                let mut dw = vec![0.0; dout * din];
                matmul_at_acc(gd, xv.data(), &mut dw, n, dout, din);
                let mut db = vec![0.0; dout];
                for r in 0..n {
                    for (acc, v) in db.iter_mut().zip(&gd[r * dout..(r + 1) * dout]) {
                        *acc += v;
                    }
                }
                vec![
                    (*x, reshaped(xv, dx)),
                    (*w, reshaped(wv, dw)),
                    (*b, reshaped(val(*b), db)),
                ]
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![0.0; m * k];
                matmul_bt_acc(gd, bv.data(), &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                matmul_at_acc(av.data(), gd, &mut db, m, k, n);
                vec![(*a, reshaped(av, da)), (*b, reshaped(bv, db))]
            }
            Op::Transpose(a) => {
                let t = g.transpose();
                vec![(*a, reshaped(val(*a), t.into_data()))]
            }
            Op::Reshape(a) => vec![(*a, reshaped(val(*a), gd.to_vec()))],
            Op::Add(a, b) => vec![
                (*a, reshaped(val(*a), gd.to_vec())),
                (*b, reshaped(val(*b), gd.to_vec())),
            ],
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let da = gd.iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                let db = gd.iter().zip(av.data()).map(|(g, x)| g * x).collect();
                vec![(*a, reshaped(av, da)), (*b, reshaped(bv, db))]
            }
            Op::Scale(a, c) => vec![(*a, reshaped(val(*a), gd.iter().map(|g| g * c).collect()))],
            Op::Act(a, kind) => {
                let (x, y) = (val(*a).data(), node.value.data());
                let d: Vec<f64> = match kind {
                    Activation::Relu => gd
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect(),
                    Activation::Tanh => gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    Activation::Sigmoid => gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                };
                vec![(*a, reshaped(val(*a), d))]
            }
            Op::Softmax { a, axis } => {
                let y = &node.value;
                let layout = SliceLayout::new(y.shape(), *axis).expect("validated on forward");
                let mut dx = vec![0.0; y.len()];
                for grp in 0..layout.groups {
                    let idx: Vec<usize> = layout.indices(grp).collect();
                    let inner: f64 = idx.iter().map(|&j| y.data()[j] * gd[j]).sum();
                    for &j in &idx {
                        dx[j] = y.data()[j] * (gd[j] - inner);
                    }
                }
                vec![(*a, reshaped(val(*a), dx))]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let xv = val(*x);
                let gainv = val(*gain).data();
                let (n, d) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; n * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..n {
                    let gr = &gd[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let dh: Vec<f64> = gr.iter().zip(gainv).map(|(g, w)| g * w).collect();
                    let mean_dh = dh.iter().sum::<f64>() / d as f64;
                    let mean_dh_h = dot(&dh, hr) / d as f64;
                    for j in 0..d {
                        dx[r * d + j] = inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                    }
                }
                vec![
                    (*x, reshaped(xv, dx)),
                    (*gain, reshaped(val(*gain), dgain)),
                    (*bias, reshaped(val(*bias), dbias)),
                ]
            }
            Op::Gather { table, idx } => {
                let tv = val(*table);
                let d = tv.cols();
                let mut dt = vec![0.0; tv.len()];
                for (r, &row) in idx.iter().enumerate() {
                    for j in 0..d {
                        dt[row * d + j] += gd[r * d + j];
                    }
                }
                vec![(*table, reshaped(tv, dt))]
            }
            Op::Sum(a) => {
                let av = val(*a);
                vec![(*a, Tensor::full(av.shape(), gd[0]))]
            }
            Op::ScaleRows { x, s } => {
                let (xv, sv) = (val(*x), val(*s));
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                let mut ds = vec![0.0; sv.len()];
                for r in 0..xv.rows() {
                    let gr = &gd[r * c..(r + 1) * c];
                    for j in 0..c {
                        dx[r * c + j] = gr[j] * sv.data()[r];
                    }
                    ds[r] = dot(gr, xv.row(r));
                }
                vec![(*x, reshaped(xv, dx)), (*s, reshaped(sv, ds))]
            }
            Op::SliceRows { x, start } => {
                let xv = val(*x);
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                dx[start * c..start * c + gd.len()].copy_from_slice(gd);
                vec![(*x, reshaped(xv, dx))]
            }
            Op::PadRows(x) => {
                let xv = val(*x);
                vec![(*x, reshaped(xv, gd[..xv.len()].to_vec()))]
            }
            Op::ConcatCols(parts) => {
                let n = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for &p in parts {
                    let pv = val(p);
                    let w = pv.cols();
                    let mut dp = Vec::with_capacity(pv.len());
                    for r in 0..n {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    out.push((p, reshaped(pv, dp)));
                }
                out
            }
            Op::Bce { p, labels } => {
                let pv = val(*p);
                let dp = pv
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| gd[0] * (-y / p + (1.0 - y) / (1.0 - p)))
                    .collect();
                vec![(*p, reshaped(pv, dp))]
            }
            Op::BceLogits { s, labels } => {
                let sv = val(*s);
                let ds = sv
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&s, &y)| gd[0] * (sigmoid(s) - y))
                    .collect();
                vec![(*s, reshaped(sv, ds))]
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                let grads = op.backward(&ins, &node.value, g);
                inputs
                    .iter()
                    .zip(grads)
                    .filter_map(|(v, g)| g.map(|g| (*v, g)))
                    .collect()
            }
        }
    }
}

fn reshaped(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape(), data).expect("gradient shape matches value")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Index layout of the 1-D slices a reduction along `axis` runs over.
struct SliceLayout {
    groups: usize,
    len: usize,
    stride: usize,
    group_step: usize,
}

impl SliceLayout {
    fn new(shape: &[usize], axis: usize) -> Result<Self> {
        match (shape.len(), axis) {
            (0, 0) => Ok(Self { groups: 1, len: 1, stride: 1, group_step: 0 }),
            (1, 0) => Ok(Self { groups: 1, len: shape[0], stride: 1, group_step: 0 }),
            (2, 1) => Ok(Self { groups: shape[0], len: shape[1], stride: 1, group_step: shape[1] }),
            (2, 0) => Ok(Self { groups: shape[1], len: shape[0], stride: shape[1], group_step: 1 }),
            _ => Err(Error::arg(format!("softmax axis {axis} invalid for shape {shape:?}"))),
        }
    }

    fn indices(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        let base = group * self.group_step;
        (0..self.len).map(move |k| base + k * self.stride)
    }
}

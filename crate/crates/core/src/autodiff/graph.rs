//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, which is already a
//! topological order, so [`Graph::backward`] is a single reverse sweep over
//! the tape. Nodes are addressed by the copyable [`Var`] handle.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MaskRows {
        x: Var,
        mask: Vec<bool>,
    },
    MaskedSoftmax {
        x: Var,
        mask: Vec<bool>,
    },
    Elu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        scale: Vec<f64>,
    },
    AvgPool {
        x: Var,
        mask: Vec<bool>,
        count: f64,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Gather {
        table: Var,
        ids: Vec<Option<usize>>,
    },
    SoftmaxCe {
        logits: Var,
        gold: usize,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Splits a shape into (outer, axis, inner) extents around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    let (m, k) = match a.len() {
        1 => (1, a[0]),
        2 => (a[0], a[1]),
        _ => return Err(Error::shape(format!("matmul lhs {a:?}"))),
    };
    if b.len() != 2 || b[0] != k {
        return Err(Error::shape(format!("matmul {a:?} x {b:?}")));
    }
    Ok((m, k, b[1]))
}

fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), r))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Error::shape(format!(
                "mul {:?} * {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), r))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let r = self.req(&[a]);
        self.push(out, Op::Scale(a, k), r)
    }

    /// Adds a vector along the last axis of `x` (broadcast over rows).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(b));
        let c = vx.cols();
        if vb.len() != c || vb.ndim() != 1 {
            return Err(Error::shape(format!(
                "bias {:?} for input {:?}",
                vb.shape(),
                vx.shape()
            )));
        }
        let mut out = vx.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += vb.data()[i % c];
        }
        let r = self.req(&[x, b]);
        Ok(self.push(out, Op::AddBias(x, b), r))
    }

    /// `[m,k] x [k,n] -> [m,n]`; a 1-D lhs of length k yields a length-n vector.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = matmul_dims(va.shape(), vb.shape())?;
        let mut out = vec![0.0; m * n];
        gemm(va.data(), vb.data(), &mut out, m, k, n);
        let shape = if va.ndim() == 1 { vec![n] } else { vec![m, n] };
        let out = Tensor::new(shape, out)?;
        let r = self.req(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), r))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.ndim() != 2 {
            return Err(Error::shape(format!("transpose of {:?}", va.shape())));
        }
        let (m, n) = (va.rows(), va.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = va.data()[i * n + j];
            }
        }
        let out = Tensor::matrix(n, m, out)?;
        let r = self.req(&[a]);
        Ok(self.push(out, Op::Transpose(a), r))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(format!("concat axis {axis} on {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(format!("concat {base:?} with {s:?}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let w = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        let out = Tensor::new(shape, out)?;
        let r = self.req(parts);
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            r,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start > end || end > s[axis] {
            return Err(Error::shape(format!(
                "slice {start}..{end} on axis {axis} of {s:?}"
            )));
        }
        let (outer, dim, inner) = split_axis(&s, axis);
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            out.extend_from_slice(&v[base + start * inner..base + end * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let out = Tensor::new(shape, out)?;
        let r = self.req(&[x]);
        Ok(self.push(out, Op::Slice { x, axis, start }, r))
    }

    /// "Same" 1-D convolution along rows. `x: [l, c_in]`, `w: [k, c_in, c_out]`
    /// with odd `k`, optional bias `[c_out]`; out-of-range taps read zeros.
    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        if vx.ndim() != 2 || vw.ndim() != 3 {
            return Err(Error::shape(format!(
                "conv1d input {:?} filters {:?}",
                vx.shape(),
                vw.shape()
            )));
        }
        let (l, cin) = (vx.rows(), vx.cols());
        let (k, wc, cout) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
        if wc != cin || k % 2 == 0 {
            return Err(Error::shape(format!(
                "conv1d input {:?} filters {:?}",
                vx.shape(),
                vw.shape()
            )));
        }
        let mut out = vec![0.0; l * cout];
        if let Some(b) = b {
            let vb = self.value(b);
            if vb.shape() != [cout] {
                return Err(Error::shape(format!("conv1d bias {:?}", vb.shape())));
            }
            for t in 0..l {
                out[t * cout..(t + 1) * cout].copy_from_slice(vb.data());
            }
        }
        let half = k / 2;
        let (xd, wd) = (vx.data(), vw.data());
        for t in 0..l {
            let orow = &mut out[t * cout..(t + 1) * cout];
            for tap in 0..k {
                let src = t + tap;
                if src < half || src - half >= l {
                    continue;
                }
                let xrow = &xd[(src - half) * cin..(src - half + 1) * cin];
                for (c, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &wd[(tap * cin + c) * cout..(tap * cin + c + 1) * cout];
                    for (o, wv) in orow.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
        let out = Tensor::matrix(l, cout, out)?;
        let mut deps = vec![x, w];
        deps.extend(b);
        let r = self.req(&deps);
        Ok(self.push(out, Op::Conv1d { x, w, b }, r))
    }

    /// Zeroes the rows of `x` whose mask entry is false.
    pub fn mask_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() != 2 || vx.rows() != mask.len() {
            return Err(Error::shape(format!(
                "row mask of length {} for {:?}",
                mask.len(),
                vx.shape()
            )));
        }
        let c = vx.cols();
        let mut out = vx.clone();
        for (r, &keep) in mask.iter().enumerate() {
            if !keep {
                out.data_mut()[r * c..(r + 1) * c].fill(0.0);
            }
        }
        let req = self.req(&[x]);
        Ok(self.push(
            out,
            Op::MaskRows {
                x,
                mask: mask.to_vec(),
            },
            req,
        ))
    }

    /// Row-wise softmax of a square score matrix restricted to valid columns.
    /// Masked columns get exactly zero weight and masked query rows are zero.
    pub fn masked_softmax(&mut self, s: Var, mask: &[bool]) -> Result<Var> {
        let vs = self.value(s);
        let n = mask.len();
        if vs.shape() != [n, n] {
            return Err(Error::shape(format!(
                "masked_softmax scores {:?} with mask of length {n}",
                vs.shape()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyMask);
        }
        let mut out = vec![0.0; n * n];
        for i in (0..n).filter(|&i| mask[i]) {
            let row = vs.row(i);
            let max = (0..n)
                .filter(|&j| mask[j])
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in (0..n).filter(|&j| mask[j]) {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                out[i * n + j] /= z;
            }
        }
        let out = Tensor::matrix(n, n, out)?;
        let r = self.req(&[s]);
        Ok(self.push(
            out,
            Op::MaskedSoftmax {
                x: s,
                mask: mask.to_vec(),
            },
            r,
        ))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(elu);
        let r = self.req(&[x]);
        self.push(out, Op::Elu(x), r)
    }

    /// Per-row normalization to zero mean and unit variance, then `gain * x + shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        let c = vx.cols();
        if vx.ndim() != 2 || self.shape(gain) != [c] || self.shape(shift) != [c] {
            return Err(Error::shape(format!(
                "layer_norm input {:?} gain {:?} shift {:?}",
                vx.shape(),
                self.shape(gain),
                self.shape(shift)
            )));
        }
        let rows = vx.rows();
        let mut xhat = vec![0.0; rows * c];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                xhat[r * c + j] = (row[j] - mean) * is;
            }
        }
        let (g, s) = (self.value(gain).data(), self.value(shift).data());
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, v)| v * g[i % c] + s[i % c])
            .collect();
        let out = Tensor::matrix(rows, c, out)?;
        let r = self.req(&[x, gain, shift]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            },
            r,
        ))
    }

    /// Inverted dropout; the identity when `train` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R, train: bool) -> Var {
        if !train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let scale: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let vx = self.value(x);
        let data = vx.data().iter().zip(&scale).map(|(a, s)| a * s).collect();
        let out = Tensor::new(vx.shape().to_vec(), data).expect("same shape");
        let r = self.req(&[x]);
        self.push(out, Op::Dropout { x, scale }, r)
    }

    /// Mean over the rows whose mask entry is true; returns a length-`c` vector.
    pub fn masked_avg_pool(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() != 2 || vx.rows() != mask.len() {
            return Err(Error::shape(format!(
                "pool mask of length {} for {:?}",
                mask.len(),
                vx.shape()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        let c = vx.cols();
        let mut out = vec![0.0; c];
        for r in (0..mask.len()).filter(|&r| mask[r]) {
            for (o, v) in out.iter_mut().zip(vx.row(r)) {
                *o += v;
            }
        }
        let count = count as f64;
        for o in &mut out {
            *o /= count;
        }
        let req = self.req(&[x]);
        Ok(self.push(
            Tensor::vector(out),
            Op::AvgPool {
                x,
                mask: mask.to_vec(),
                count,
            },
            req,
        ))
    }

    /// Column-wise max over valid rows.
    pub fn masked_max_pool(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let vx = self.value(x);
        if vx.ndim() != 2 || vx.rows() != mask.len() {
            return Err(Error::shape(format!(
                "pool mask of length {} for {:?}",
                mask.len(),
                vx.shape()
            )));
        }
        let valid: Vec<usize> = (0..mask.len()).filter(|&r| mask[r]).collect();
        let Some(&first) = valid.first() else {
            return Err(Error::EmptyMask);
        };
        let c = vx.cols();
        let mut argmax = vec![first; c];
        for &r in &valid[1..] {
            for j in 0..c {
                if vx.at(r, j) > vx.at(argmax[j], j) {
                    argmax[j] = r;
                }
            }
        }
        let out = (0..c).map(|j| vx.at(argmax[j], j)).collect();
        let req = self.req(&[x]);
        Ok(self.push(Tensor::vector(out), Op::MaxPool { x, argmax }, req))
    }

    /// Selects rows of `table`; `None` yields a zero row.
    pub fn gather_rows(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        let vt = self.value(table);
        if vt.ndim() != 2 {
            return Err(Error::shape(format!("gather from {:?}", vt.shape())));
        }
        let (n, c) = (vt.rows(), vt.cols());
        let mut out = vec![0.0; ids.len() * c];
        for (r, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                if id >= n {
                    return Err(Error::shape(format!("row {id} of {n}")));
                }
                out[r * c..(r + 1) * c].copy_from_slice(vt.row(id));
            }
        }
        let out = Tensor::matrix(ids.len(), c, out)?;
        let req = self.req(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            req,
        ))
    }

    /// Cross-entropy of softmax(`logits`) against class `gold`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if gold >= z.len() || self.value(logits).rows() != 1 {
            return Err(Error::shape(format!(
                "class {gold} for logits {:?}",
                self.shape(logits)
            )));
        }
        let probs = softmax(z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[gold];
        let r = self.req(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                gold,
                probs,
            },
            r,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let r = self.req(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), r)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward from non-scalar {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = Tensor::new(self.shape(loss).to_vec(), vec![1.0])?;
        grads[loss.0] = Some(seed);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), data).expect("gradient shape")
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let ga = gd.iter().zip(vb).map(|(g, y)| g * y).collect();
                let gb = gd.iter().zip(va).map(|(g, x)| g * x).collect();
                self.accumulate(grads, *a, self.like(*a, ga));
                self.accumulate(grads, *b, self.like(*b, gb));
            }
            Op::Scale(a, k) => {
                self.accumulate(grads, *a, g.map(|v| v * k));
            }
            Op::AddBias(x, b) => {
                let c = self.value(*b).len();
                let mut gb = vec![0.0; c];
                for (i, v) in gd.iter().enumerate() {
                    gb[i % c] += v;
                }
                self.accumulate(grads, *x, g.clone());
                self.accumulate(grads, *b, self.like(*b, gb));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = matmul_dims(va.shape(), vb.shape()).expect("checked");
                if self.nodes[a.0].requires_grad {
                    // dA = G · Bᵀ
                    let mut ga = vec![0.0; m * k];
                    let bd = vb.data();
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] = gd[i * n..(i + 1) * n]
                                .iter()
                                .zip(brow)
                                .map(|(x, y)| x * y)
                                .sum();
                        }
                    }
                    self.accumulate(grads, *a, self.like(*a, ga));
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · G
                    let mut gb = vec![0.0; k * n];
                    let ad = va.data();
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                    self.accumulate(grads, *b, self.like(*b, gb));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (out.rows(), out.cols());
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[j * m + i] = gd[i * n + j];
                    }
                }
                self.accumulate(grads, *a, self.like(*a, ga));
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[*axis];
                    let mut gp = Vec::with_capacity(outer * w * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        gp.extend_from_slice(&gd[base..base + w * inner]);
                    }
                    offset += w;
                    self.accumulate(grads, *p, self.like(*p, gp));
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_axis(self.shape(*x), *axis);
                let w = out.shape()[*axis];
                let mut gx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    gx[dst..dst + w * inner].copy_from_slice(&gd[o * w * inner..(o + 1) * w * inner]);
                }
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::Conv1d { x, w, b } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let (l, cin) = (vx.rows(), vx.cols());
                let (k, cout) = (vw.shape()[0], vw.shape()[2]);
                let half = k / 2;
                let mut gx = vec![0.0; l * cin];
                let mut gw = vec![0.0; k * cin * cout];
                let (xd, wd) = (vx.data(), vw.data());
                for t in 0..l {
                    let grow = &gd[t * cout..(t + 1) * cout];
                    for tap in 0..k {
                        let src = t + tap;
                        if src < half || src - half >= l {
                            continue;
                        }
                        let s = src - half;
                        for c in 0..cin {
                            let widx = (tap * cin + c) * cout;
                            let wrow = &wd[widx..widx + cout];
                            gx[s * cin + c] +=
                                grow.iter().zip(wrow).map(|(g, w)| g * w).sum::<f64>();
                            let xv = xd[s * cin + c];
                            if xv != 0.0 {
                                for (o, gv) in gw[widx..widx + cout].iter_mut().zip(grow) {
                                    *o += xv * gv;
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, self.like(*x, gx));
                self.accumulate(grads, *w, self.like(*w, gw));
                if let Some(b) = b {
                    let mut gb = vec![0.0; cout];
                    for (i, v) in gd.iter().enumerate() {
                        gb[i % cout] += v;
                    }
                    self.accumulate(grads, *b, self.like(*b, gb));
                }
            }
            Op::MaskRows { x, mask } => {
                let c = out.cols();
                let mut gx = gd.to_vec();
                for (r, &keep) in mask.iter().enumerate() {
                    if !keep {
                        gx[r * c..(r + 1) * c].fill(0.0);
                    }
                }
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::MaskedSoftmax { x, mask } => {
                let n = mask.len();
                let y = out.data();
                let mut gx = vec![0.0; n * n];
                for i in (0..n).filter(|&i| mask[i]) {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &gd[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::Elu(x) => {
                let vx = self.value(*x).data();
                let gx = gd
                    .iter()
                    .zip(vx)
                    .zip(out.data())
                    .map(|((g, &xv), &yv)| if xv > 0.0 { *g } else { g * (yv + 1.0) })
                    .collect();
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            } => {
                let c = out.cols();
                let rows = out.rows();
                let gain_v = self.value(*gain).data();
                let mut ggain = vec![0.0; c];
                let mut gshift = vec![0.0; c];
                let mut gx = vec![0.0; rows * c];
                for r in 0..rows {
                    let gr = &gd[r * c..(r + 1) * c];
                    let xr = &xhat[r * c..(r + 1) * c];
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..c {
                        ggain[j] += gr[j] * xr[j];
                        gshift[j] += gr[j];
                        let d = gr[j] * gain_v[j];
                        sum_d += d;
                        sum_dx += d * xr[j];
                    }
                    let cf = c as f64;
                    for j in 0..c {
                        let d = gr[j] * gain_v[j];
                        gx[r * c + j] = inv_std[r] / cf * (cf * d - sum_d - xr[j] * sum_dx);
                    }
                }
                self.accumulate(grads, *x, self.like(*x, gx));
                self.accumulate(grads, *gain, self.like(*gain, ggain));
                self.accumulate(grads, *shift, self.like(*shift, gshift));
            }
            Op::Dropout { x, scale } => {
                let gx = gd.iter().zip(scale).map(|(g, s)| g * s).collect();
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::AvgPool { x, mask, count } => {
                let c = out.len();
                let mut gx = vec![0.0; mask.len() * c];
                for r in (0..mask.len()).filter(|&r| mask[r]) {
                    for j in 0..c {
                        gx[r * c + j] = gd[j] / count;
                    }
                }
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::MaxPool { x, argmax } => {
                let c = out.len();
                let mut gx = vec![0.0; self.value(*x).len()];
                for (j, &r) in argmax.iter().enumerate() {
                    gx[r * c + j] += gd[j];
                }
                self.accumulate(grads, *x, self.like(*x, gx));
            }
            Op::Gather { table, ids } => {
                let c = out.cols();
                let mut gt = vec![0.0; self.value(*table).len()];
                for (r, id) in ids.iter().enumerate() {
                    if let Some(id) = *id {
                        for j in 0..c {
                            gt[id * c + j] += gd[r * c + j];
                        }
                    }
                }
                self.accumulate(grads, *table, self.like(*table, gt));
            }
            Op::SoftmaxCe {
                logits,
                gold,
                probs,
            } => {
                let g0 = gd[0];
                let gz = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| g0 * (p - if j == *gold { 1.0 } else { 0.0 }))
                    .collect();
                self.accumulate(grads, *logits, self.like(*logits, gz));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, self.like(*x, vec![gd[0]; n]));
            }
        }
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as it is evaluated. `backward` walks
//! the tape in reverse, accumulating gradients into every node that
//! (transitively) depends on a parameter or a gradient-tracked leaf.

use crate::error::{Error, Result};

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Strided, StridedMut, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        probs: Vec<f64>,
    },
    ConcatCols(Var, Var),
    AddSeqBroadcast {
        x: Var,
        per_seq: Var,
        seq_len: usize,
    },
    L1Loss {
        pred: Var,
        target: Tensor,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
    grad: Option<Tensor>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    no_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that never tracks gradients (inference). Parameters enter as
    /// constants and no backward caches are kept.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            no_grad: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            tracked: tracked && !self.no_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is recorded (used by gradient checks).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::MatMul(a, b), t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Add(a, b), t))
    }

    /// Adds a `1 × n` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::ShapeMismatch(format!("bias {:?} for input {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let t = self.tracked(x) || self.tracked(bias);
        Ok(self.push(out, Op::AddBias(x, bias), t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::Mul(a, b), t))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let t = self.tracked(x);
        self.push(out, Op::Scale(x, s), t)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        let t = self.tracked(x);
        self.push(out, Op::Gelu(x), t)
    }

    /// Row-wise layer normalization with `1 × n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        for p in [gain, bias] {
            if self.value(p).shape() != [1, cols] {
                return Err(Error::ShapeMismatch(format!(
                    "layer norm parameter {:?} for width {cols}",
                    self.value(p).shape()
                )));
            }
        }
        let mut xhat = Tensor::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            rstd.push(s);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        let t = self.tracked(x) || self.tracked(gain) || self.tracked(bias);
        let (xhat, rstd) = if t && !self.no_grad { (xhat, rstd) } else { (Tensor::zeros(0, 0), Vec::new()) };
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            t,
        ))
    }

    /// Multi-head scaled dot-product attention. Rows are grouped into
    /// independent sequences of `seq_len` consecutive rows; columns are
    /// split evenly across `heads`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq_len: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(Error::ShapeMismatch(format!(
                "attention q {:?} k {:?} v {:?}",
                qv.shape(),
                kv.shape(),
                vv.shape()
            )));
        }
        let (rows, width) = (qv.rows(), qv.cols());
        if heads == 0 || width % heads != 0 || seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::ShapeMismatch(format!(
                "attention width {width} / {heads} heads, {rows} rows / sequence length {seq_len}"
            )));
        }
        let dh = width / heads;
        let n_seq = rows / seq_len;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(rows, width);
        let mut probs = vec![0.0; n_seq * heads * seq_len * seq_len];
        for s in 0..n_seq {
            let base = s * seq_len * width;
            for h in 0..heads {
                let p = &mut probs[(s * heads + h) * seq_len * seq_len..][..seq_len * seq_len];
                let off = base + h * dh;
                // S = Q_h K_hᵀ
                gemm(
                    seq_len,
                    dh,
                    seq_len,
                    scale,
                    Strided {
                        data: &qv.data()[off..],
                        rs: width,
                        cs: 1,
                    },
                    Strided {
                        data: &kv.data()[off..],
                        rs: 1,
                        cs: width,
                    },
                    0.0,
                    StridedMut::row_major(p, seq_len),
                );
                for row in p.chunks_mut(seq_len) {
                    softmax_in_place(row);
                }
                gemm(
                    seq_len,
                    seq_len,
                    dh,
                    1.0,
                    Strided::row_major(p, seq_len),
                    Strided {
                        data: &vv.data()[off..],
                        rs: width,
                        cs: 1,
                    },
                    0.0,
                    StridedMut {
                        data: &mut out.data_mut()[off..],
                        rs: width,
                        cs: 1,
                    },
                );
            }
        }
        let t = self.tracked(q) || self.tracked(k) || self.tracked(v);
        let probs = if t && !self.no_grad { probs } else { Vec::new() };
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            },
            t,
        ))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::ShapeMismatch(format!("concat {:?} with {:?}", av.shape(), bv.shape())));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut out = Tensor::zeros(av.rows(), ca + cb);
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..ca].copy_from_slice(av.row(r));
            row[ca..].copy_from_slice(bv.row(r));
        }
        let t = self.tracked(a) || self.tracked(b);
        Ok(self.push(out, Op::ConcatCols(a, b), t))
    }

    /// Adds row `s` of `per_seq` to every row of sequence `s` in `x`.
    pub fn add_seq_broadcast(&mut self, x: Var, per_seq: Var, seq_len: usize) -> Result<Var> {
        let (xv, ev) = (self.value(x), self.value(per_seq));
        if seq_len == 0 || ev.cols() != xv.cols() || ev.rows() * seq_len != xv.rows() {
            return Err(Error::ShapeMismatch(format!(
                "broadcast {:?} over {:?} with sequence length {seq_len}",
                ev.shape(),
                xv.shape()
            )));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let e = ev.row(r / seq_len);
            for (o, v) in out.row_mut(r).iter_mut().zip(e) {
                *o += v;
            }
        }
        let t = self.tracked(x) || self.tracked(per_seq);
        Ok(self.push(out, Op::AddSeqBroadcast { x, per_seq, seq_len }, t))
    }

    /// Mean absolute error against a constant target.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let pv = self.value(pred);
        pv.expect_same_shape(target)?;
        if pv.is_empty() {
            return Err(Error::Empty("L1 loss over an empty tensor"));
        }
        let loss = pv.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pv.len() as f64;
        let t = self.tracked(pred);
        let target = if t && !self.no_grad { target.clone() } else { Tensor::zeros(0, 0) };
        Ok(self.push(Tensor::scalar(loss), Op::L1Loss { pred, target }, t))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let t = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), t)
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.tracked {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    /// Reverse pass from a scalar `loss`. Gradients of earlier calls are
    /// discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.tracked(loss) {
            return Err(Error::Detached("the loss does not depend on any parameter".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.backward_op(&op, &g)?;
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn backward_op(&mut self, op: &Op, g: &Tensor) -> Result<()> {
        match *op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.tracked(a) {
                    let bv = self.value(b);
                    let mut da = Tensor::zeros(g.rows(), bv.rows());
                    gemm(
                        g.rows(),
                        g.cols(),
                        bv.rows(),
                        1.0,
                        Strided::row_major(g.data(), g.cols()),
                        Strided::transposed(bv.data(), bv.cols()),
                        0.0,
                        StridedMut::row_major(da.data_mut(), bv.rows()),
                    );
                    self.accumulate(a, da);
                }
                if self.tracked(b) {
                    let av = self.value(a);
                    let mut db = Tensor::zeros(av.cols(), g.cols());
                    gemm(
                        av.cols(),
                        av.rows(),
                        g.cols(),
                        1.0,
                        Strided::transposed(av.data(), av.cols()),
                        Strided::row_major(g.data(), g.cols()),
                        0.0,
                        StridedMut::row_major(db.data_mut(), g.cols()),
                    );
                    self.accumulate(b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::AddBias(x, b) => {
                self.accumulate(x, g.clone());
                if self.tracked(b) {
                    self.accumulate(b, column_sums(g));
                }
            }
            Op::Mul(a, b) => {
                if self.tracked(a) {
                    let d = g.zip_map(self.value(b), |gv, bv| gv * bv)?;
                    self.accumulate(a, d);
                }
                if self.tracked(b) {
                    let d = g.zip_map(self.value(a), |gv, av| gv * av)?;
                    self.accumulate(b, d);
                }
            }
            Op::Scale(x, s) => self.accumulate(x, g.map(|v| v * s)),
            Op::Gelu(x) => {
                let d = g.zip_map(self.value(x), |gv, xv| gv * gelu_grad(xv))?;
                self.accumulate(x, d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                ref xhat,
                ref rstd,
            } => {
                let (rows, cols) = (xhat.rows(), xhat.cols());
                if self.tracked(gain) {
                    let dg = g.zip_map(xhat, |a, b| a * b)?;
                    self.accumulate(gain, column_sums(&dg));
                }
                if self.tracked(bias) {
                    self.accumulate(bias, column_sums(g));
                }
                if self.tracked(x) {
                    let gv = self.value(gain).data().to_vec();
                    let mut dx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let (gr, xr) = (g.row(r), xhat.row(r));
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for c in 0..cols {
                            let d = gr[c] * gv[c];
                            m1 += d;
                            m2 += d * xr[c];
                        }
                        m1 /= cols as f64;
                        m2 /= cols as f64;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd[r] * (gr[c] * gv[c] - m1 - xr[c] * m2);
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                ref probs,
            } => {
                let (dq, dk, dv) = self.attention_backward(q, k, v, heads, seq_len, probs, g);
                self.accumulate(q, dq);
                self.accumulate(k, dk);
                self.accumulate(v, dv);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols();
                let cb = self.value(b).cols();
                let da = Tensor::from_fn(g.rows(), ca, |r, c| g.get(r, c));
                let db = Tensor::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c));
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::AddSeqBroadcast { x, per_seq, seq_len } => {
                self.accumulate(x, g.clone());
                if self.tracked(per_seq) {
                    let mut de = Tensor::zeros(g.rows() / seq_len, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in de.row_mut(r / seq_len).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(per_seq, de);
                }
            }
            Op::L1Loss { pred, ref target } => {
                let n = target.len() as f64;
                let gs = g.item() / n;
                let d = self.value(pred).zip_map(target, |p, t| {
                    if p > t {
                        gs
                    } else if p < t {
                        -gs
                    } else {
                        0.0
                    }
                })?;
                self.accumulate(pred, d);
            }
            Op::Sum(x) => {
                let shape = self.value(x).shape();
                self.accumulate(x, Tensor::filled(shape[0], shape[1], g.item()));
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        probs: &[f64],
        g: &Tensor,
    ) -> (Tensor, Tensor, Tensor) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = (qv.rows(), qv.cols());
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Tensor::zeros(rows, width);
        let mut dk = Tensor::zeros(rows, width);
        let mut dv = Tensor::zeros(rows, width);
        let mut dp = vec![0.0; seq_len * seq_len];
        for s in 0..rows / seq_len {
            let base = s * seq_len * width;
            for h in 0..heads {
                let p = &probs[(s * heads + h) * seq_len * seq_len..][..seq_len * seq_len];
                let off = base + h * dh;
                fn view(t: &Tensor, off: usize, width: usize) -> Strided<'_> {
                    Strided {
                        data: &t.data()[off..],
                        rs: width,
                        cs: 1,
                    }
                }
                // dV_h = Pᵀ dO_h
                gemm(
                    seq_len,
                    seq_len,
                    dh,
                    1.0,
                    Strided::transposed(p, seq_len),
                    view(g, off, width),
                    0.0,
                    StridedMut {
                        data: &mut dv.data_mut()[off..],
                        rs: width,
                        cs: 1,
                    },
                );
                // dP = dO_h V_hᵀ
                gemm(
                    seq_len,
                    dh,
                    seq_len,
                    1.0,
                    view(g, off, width),
                    Strided {
                        data: &vv.data()[off..],
                        rs: 1,
                        cs: width,
                    },
                    0.0,
                    StridedMut::row_major(&mut dp, seq_len),
                );
                // dS = P ⊙ (dP − rowdot(P, dP)), folded with the logit scale.
                for i in 0..seq_len {
                    let pr = &p[i * seq_len..(i + 1) * seq_len];
                    let dr = &mut dp[i * seq_len..(i + 1) * seq_len];
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for (d, pv) in dr.iter_mut().zip(pr) {
                        *d = scale * pv * (*d - dot);
                    }
                }
                gemm(
                    seq_len,
                    seq_len,
                    dh,
                    1.0,
                    Strided::row_major(&dp, seq_len),
                    view(kv, off, width),
                    0.0,
                    StridedMut {
                        data: &mut dq.data_mut()[off..],
                        rs: width,
                        cs: 1,
                    },
                );
                gemm(
                    seq_len,
                    seq_len,
                    dh,
                    1.0,
                    Strided::transposed(&dp, seq_len),
                    view(qv, off, width),
                    0.0,
                    StridedMut {
                        data: &mut dk.data_mut()[off..],
                        rs: width,
                        cs: 1,
                    },
                );
            }
        }
        (dq, dk, dv)
    }

    /// Gradients of every parameter used in the graph, summed over repeated
    /// uses and ordered by parameter id.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = Vec::new();
        for n in &self.nodes {
            if let (Op::Param(id), Some(g)) = (&n.op, &n.grad) {
                match out.iter_mut().find(|(i, _)| i == id) {
                    Some((_, acc)) => acc.add_assign(g),
                    None => out.push((*id, g.clone())),
                }
            }
        }
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for r in 0..t.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

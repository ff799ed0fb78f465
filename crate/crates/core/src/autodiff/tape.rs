//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every op appends a node holding its output value and enough context to
//! run its vector-Jacobian product. [`Tape::backward`] walks the nodes in
//! exact reverse recording order, so re-running an identical tape yields
//! bit-identical gradients.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, sigmoid, Tensor};

use super::ParamStore;

/// Score clamp used by [`Tape::bce_loss`].
pub const BCE_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    SumRows(Var),
    Sum(Var),
    SelectRows(Var, Cow<'a, [usize]>),
    ScatterAddRows(Var, Cow<'a, [usize]>),
    EdgeConv {
        h: Var,
        wg: Var,
        bg: Var,
        edges: EdgeList<'a>,
    },
    Bce {
        scores: Var,
        labels: Cow<'a, [f64]>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op<'a>,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Typed edge list consumed by [`Tape::edge_conv`].
#[derive(Clone, Copy, Debug)]
pub struct EdgeList<'a> {
    pub src: &'a [usize],
    pub dst: &'a [usize],
    pub feats: &'a Tensor,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros of the right shape if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take_or_zeros(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op<'a>, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Borrowed leaf; `trainable` leaves receive gradients.
    pub fn leaf(&mut self, t: &'a Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf.
    pub fn leaf_owned(&mut self, t: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf_owned(t, false)
    }

    /// Registers every tensor in `store` as a leaf, in store order.
    pub fn bind(&mut self, store: &'a ParamStore, trainable: bool) -> Vec<Var> {
        store.tensors().iter().map(|t| self.leaf(t, trainable)).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((n, k), (k2, m)) = (ta.shape(), tb.shape());
        if k != k2 {
            return Err(Error::shape("matmul", format!("{n}x{k} * {k2}x{m}")));
        }
        let mut out = Tensor::zeros(n, m);
        gemm_nn(ta.data(), tb.data(), out.data_mut(), n, k, m);
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::MatMul(a, b), ng, "matmul")
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((n, k), (m, k2)) = (ta.shape(), tb.shape());
        if k != k2 {
            return Err(Error::shape("matmul_t", format!("{n}x{k} * ({m}x{k2})^T")));
        }
        let mut out = Tensor::zeros(n, m);
        gemm_nt(ta.data(), tb.data(), out.data_mut(), n, k, m);
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::MatMulT(a, b), ng, "matmul_t")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::Add(a, b), ng, "add")
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(Error::shape("add_row", format!("{:?} + row {:?}", ta.shape(), tb.shape())));
        }
        let mut out = ta.clone();
        let bias = tb.data();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::AddRow(a, b), ng, "add_row")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("{:?} * {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        let ng = self.ng(a) || self.ng(b);
        self.push(Cow::Owned(out), Op::Mul(a, b), ng, "mul")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * k);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Scale(a, k), ng, "scale")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::Sigmoid(a), ng, "sigmoid")
    }

    /// Horizontal concatenation in argument order.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::hcat(&tensors).map_err(|_| {
            Error::shape(
                "concat_cols",
                format!("row counts {:?}", tensors.iter().map(|t| t.rows()).collect::<Vec<_>>()),
            )
        })?;
        let ng = parts.iter().any(|&v| self.ng(v));
        self.push(Cow::Owned(out), Op::ConcatCols(parts.to_vec()), ng, "concat_cols")
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut out = Tensor::zeros(1, ta.cols());
        for r in 0..ta.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(ta.row(r)) {
                *o += v;
            }
        }
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::SumRows(a), ng, "sum_rows")
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Cow::Owned(Tensor::scalar(s)), Op::Sum(a), ng, "sum")
    }

    pub fn select_rows(&mut self, a: Var, idx: impl Into<Cow<'a, [usize]>>) -> Result<Var> {
        let idx = idx.into();
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(Error::shape("select_rows", format!("row {bad} of {}", ta.rows())));
        }
        let out = ta.select_rows(&idx);
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::SelectRows(a, idx), ng, "select_rows")
    }

    /// `out[idx[i]] += a[i]` into an `n_out x cols` zero matrix.
    pub fn scatter_add_rows(&mut self, a: Var, idx: impl Into<Cow<'a, [usize]>>, n_out: usize) -> Result<Var> {
        let idx = idx.into();
        let ta = self.value(a);
        if idx.len() != ta.rows() {
            return Err(Error::shape(
                "scatter_add_rows",
                format!("{} indices for {} rows", idx.len(), ta.rows()),
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(Error::shape("scatter_add_rows", format!("target row {bad} of {n_out}")));
        }
        let mut out = Tensor::zeros(n_out, ta.cols());
        for (i, &t) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(t).iter_mut().zip(ta.row(i)) {
                *o += v;
            }
        }
        let ng = self.ng(a);
        self.push(Cow::Owned(out), Op::ScatterAddRows(a, idx), ng, "scatter_add_rows")
    }

    /// Edge-conditioned message passing fused with gather and scatter:
    /// `out[dst[e]] += G_e h[src[e]]`, where `G_e` is `wg * feats[e] + bg`
    /// reshaped row-major to `d_out x d_in`.
    ///
    /// Shapes: `h: n_src x d_in`, `feats: m x c`, `wg: (d_out*d_in) x c`,
    /// `bg: (d_out*d_in) x 1`. Output: `n_out x d_out`.
    pub fn edge_conv(&mut self, h: Var, wg: Var, bg: Var, edges: EdgeList<'a>, d_out: usize, n_out: usize) -> Result<Var> {
        let (th, tw, tb) = (self.value(h), self.value(wg), self.value(bg));
        let (n_src, d_in) = th.shape();
        let EdgeList { src, dst, feats } = edges;
        let (m, c) = feats.shape();
        if src.len() != m || dst.len() != m || tw.shape() != (d_out * d_in, c) || tb.shape() != (d_out * d_in, 1) {
            return Err(Error::shape(
                "edge_conv",
                format!(
                    "h {:?}, {} src, {} dst, feats {:?}, wg {:?}, bg {:?}, d_out {d_out}",
                    th.shape(),
                    src.len(),
                    dst.len(),
                    feats.shape(),
                    tw.shape(),
                    tb.shape()
                ),
            ));
        }
        if src.iter().any(|&u| u >= n_src) || dst.iter().any(|&v| v >= n_out) {
            return Err(Error::shape("edge_conv", "edge endpoint out of range"));
        }
        let agg = edge_aggregate(th, edges, n_out);
        let mix = edge_mixing(tw.data(), tb.data(), d_out, d_in, c);
        let mut out = Tensor::zeros(n_out, d_out);
        gemm_nt(agg.data(), &mix, out.data_mut(), n_out, d_in * (c + 1), d_out);
        let ng = self.ng(h) || self.ng(wg) || self.ng(bg);
        self.push(Cow::Owned(out), Op::EdgeConv { h, wg, bg, edges }, ng, "edge_conv")
    }

    /// Mean binary cross-entropy `-(1/n) Σ [y ln p + (1-y) ln(1-p)]` with `p`
    /// clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce_loss(&mut self, scores: Var, labels: impl Into<Cow<'a, [f64]>>) -> Result<Var> {
        let labels = labels.into();
        let ts = self.value(scores);
        if ts.cols() != 1 || ts.rows() != labels.len() {
            return Err(Error::shape(
                "bce_loss",
                format!("scores {:?}, {} labels", ts.shape(), labels.len()),
            ));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("bce_loss over zero examples".into()));
        }
        let n = labels.len() as f64;
        let mut total = 0.0;
        for (&p, &y) in ts.data().iter().zip(labels.iter()) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            total += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let ng = self.ng(scores);
        self.push(Cow::Owned(Tensor::scalar(-total / n)), Op::Bce { scores, labels }, ng, "bce_loss")
    }

    /// Reverse pass from the scalar `loss`, seeded with `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let shapes: Vec<(usize, usize)> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            let (before, rest) = grads.split_at_mut(i);
            self.vjp(node, &gout, before)?;
            rest[0] = Some(gout);
        }
        Ok(Gradients { grads, shapes })
    }

    fn vjp(&self, node: &Node<'a>, gout: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let nodes = &self.nodes;
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };
        let wants = |v: Var| nodes[v.0].needs_grad;
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                let (r, c) = nodes[v.0].value.shape();
                grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c))
            }};
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ((n, k), m) = (ta.shape(), tb.cols());
                if wants(*a) {
                    gemm_nt(gout.data(), tb.data(), acc!(*a).data_mut(), n, m, k);
                }
                if wants(*b) {
                    gemm_tn(ta.data(), gout.data(), acc!(*b).data_mut(), n, k, m);
                }
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ((n, k), m) = (ta.shape(), tb.rows());
                if wants(*a) {
                    gemm_nn(gout.data(), tb.data(), acc!(*a).data_mut(), n, m, k);
                }
                if wants(*b) {
                    gemm_tn(gout.data(), ta.data(), acc!(*b).data_mut(), n, m, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        add_into(acc!(v).data_mut(), gout.data());
                    }
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    add_into(acc!(*a).data_mut(), gout.data());
                }
                if wants(*b) {
                    let gb = acc!(*b);
                    for r in 0..gout.rows() {
                        add_into(gb.data_mut(), gout.row(r));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if wants(*a) {
                    for ((g, o), y) in acc!(*a).data_mut().iter_mut().zip(gout.data()).zip(tb.data()) {
                        *g += o * y;
                    }
                }
                if wants(*b) {
                    for ((g, o), x) in acc!(*b).data_mut().iter_mut().zip(gout.data()).zip(ta.data()) {
                        *g += o * x;
                    }
                }
            }
            Op::Scale(a, k) => {
                for (g, o) in acc!(*a).data_mut().iter_mut().zip(gout.data()) {
                    *g += k * o;
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                for ((g, o), s) in acc!(*a).data_mut().iter_mut().zip(gout.data()).zip(y.data()) {
                    *g += o * s * (1.0 - s);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        let gp = acc!(p);
                        for r in 0..gout.rows() {
                            add_into(gp.row_mut(r), &gout.row(r)[off..off + w]);
                        }
                    }
                    off += w;
                }
            }
            Op::SumRows(a) => {
                let ga = acc!(*a);
                for r in 0..ga.rows() {
                    add_into(ga.row_mut(r), gout.data());
                }
            }
            Op::Sum(a) => {
                let s = gout.data()[0];
                for g in acc!(*a).data_mut() {
                    *g += s;
                }
            }
            Op::SelectRows(a, idx) => {
                let ga = acc!(*a);
                for (i, &src) in idx.iter().enumerate() {
                    add_into(ga.row_mut(src), gout.row(i));
                }
            }
            Op::ScatterAddRows(a, idx) => {
                let ga = acc!(*a);
                for (i, &t) in idx.iter().enumerate() {
                    add_into(ga.row_mut(i), gout.row(t));
                }
            }
            Op::EdgeConv { h, wg, bg, edges } => {
                let (th, tw, tb) = (val(*h), val(*wg), val(*bg));
                let d_in = th.cols();
                let EdgeList { src, dst, feats } = *edges;
                let n_out = gout.rows();
                let d_out = gout.cols();
                let c = feats.cols();
                let k = d_in * (c + 1);
                if wants(*wg) || wants(*bg) {
                    let agg = edge_aggregate(th, *edges, n_out);
                    let mut gmix = vec![0.0; d_out * k];
                    gemm_tn(gout.data(), agg.data(), &mut gmix, n_out, d_out, k);
                    for i in 0..d_out {
                        for j in 0..d_in {
                            let ij = i * d_in + j;
                            let row = &gmix[i * k + j * (c + 1)..i * k + (j + 1) * (c + 1)];
                            if wants(*wg) {
                                add_into(&mut acc!(*wg).data_mut()[ij * c..(ij + 1) * c], &row[..c]);
                            }
                            if wants(*bg) {
                                acc!(*bg).data_mut()[ij] += row[c];
                            }
                        }
                    }
                }
                if wants(*h) {
                    let mix = edge_mixing(tw.data(), tb.data(), d_out, d_in, c);
                    let mut gagg = vec![0.0; n_out * k];
                    gemm_nn(gout.data(), &mix, &mut gagg, n_out, d_out, k);
                    let gh = acc!(*h);
                    for e in 0..src.len() {
                        let r = feats.row(e);
                        let ga = &gagg[dst[e] * k..(dst[e] + 1) * k];
                        let ghr = gh.row_mut(src[e]);
                        for (j, x) in ghr.iter_mut().enumerate() {
                            let blk = &ga[j * (c + 1)..(j + 1) * (c + 1)];
                            *x += blk[c] + blk[..c].iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            Op::Bce { scores, labels } => {
                let ts = val(*scores);
                let n = labels.len() as f64;
                let s = gout.data()[0];
                let gs = acc!(*scores);
                for ((g, &p), &y) in gs.data_mut().iter_mut().zip(ts.data()).zip(labels.iter()) {
                    if p <= BCE_EPS || p >= 1.0 - BCE_EPS {
                        continue;
                    }
                    *g += -s / n * (y / p - (1.0 - y) / (1.0 - p));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Per target node, `Σ_e h[src_e] ⊗ [r_e, 1]` flattened as `j * (c + 1) + k`.
fn edge_aggregate(h: &Tensor, edges: EdgeList, n_out: usize) -> Tensor {
    let d_in = h.cols();
    let c = edges.feats.cols();
    let k = d_in * (c + 1);
    let mut agg = Tensor::zeros(n_out, k);
    for e in 0..edges.src.len() {
        let r = edges.feats.row(e);
        let hr = h.row(edges.src[e]);
        let row = agg.row_mut(edges.dst[e]);
        for (j, &hv) in hr.iter().enumerate() {
            let blk = &mut row[j * (c + 1)..(j + 1) * (c + 1)];
            for (a, &rv) in blk.iter_mut().zip(r) {
                *a += hv * rv;
            }
            blk[c] += hv;
        }
    }
    agg
}

/// `[W_g | b_g]` rearranged to `d_out x (d_in * (c + 1))` so that the message
/// of a node is its aggregate times this matrix transposed.
fn edge_mixing(w: &[f64], b: &[f64], d_out: usize, d_in: usize, c: usize) -> Vec<f64> {
    let mut mix = Vec::with_capacity(d_out * d_in * (c + 1));
    for ij in 0..d_out * d_in {
        mix.extend_from_slice(&w[ij * c..(ij + 1) * c]);
        mix.push(b[ij]);
    }
    mix
}

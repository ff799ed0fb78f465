//! Loss changes under a parameter increment, propagated through the network
//! in difference form. Subtracting two losses near 0.7 leaves about 1e-16 of
//! absolute noise, which swamps the 1e-15 changes a central difference with
//! h = 1e-6 produces for deep-layer parameters. Here every intermediate
//! increment is computed directly (sigmoid steps through `expm1`, log steps
//! through `ln_1p`), so `f(θ + δ) - f(θ)` keeps its relative precision
//! however small δ is.

use std::collections::BTreeMap;

use crate::autodiff::{ParamStore, BCE_EPS};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

use super::forward::needed_types;
use super::layout::Layout;
use super::{GraphInput, ModelConfig, ModelInput, ModelKind};

/// Nonzero entries of a parameter increment: (flat index, value).
type Sparse = Vec<(usize, f64)>;

struct BlockState {
    z: Tensor,
    s: Tensor,
}

struct TypeState {
    blocks: Vec<BlockState>,
    /// Concatenated second sigmoids of the blocks (concatenation aggregator).
    cat: Option<Tensor>,
    z: Tensor,
    h: Tensor,
}

enum Base {
    Graph {
        /// Representations entering each layer.
        inputs: Vec<Vec<Tensor>>,
        states: Vec<Vec<Option<TypeState>>>,
        /// Per layer and meta-step, the `m x (d * d_in)` edge gates of HMPNN.
        gates: Vec<Vec<Option<Tensor>>>,
        last: Tensor,
    },
    Entity {
        /// Input of every dense layer and of the head.
        inputs: Vec<Tensor>,
        zs: Vec<Tensor>,
    },
}

/// Base point of a loss-increment evaluation.
pub(crate) struct LossIncrement<'a> {
    layout: &'a Layout,
    config: &'a ModelConfig,
    input: &'a ModelInput<'a>,
    params: &'a ParamStore,
    idx: &'a [usize],
    targets: &'a [f64],
    base: Base,
    head_z: Tensor,
}

impl<'a> LossIncrement<'a> {
    pub(crate) fn new(
        layout: &'a Layout,
        config: &'a ModelConfig,
        params: &'a ParamStore,
        input: &'a ModelInput<'a>,
        idx: &'a [usize],
        targets: &'a [f64],
    ) -> Result<Self> {
        if idx.len() != targets.len() || idx.is_empty() {
            return Err(Error::shape(
                "loss_increment",
                format!("{} rows, {} targets", idx.len(), targets.len()),
            ));
        }
        let (base, last) = match input {
            ModelInput::Graph(g) => graph_base(layout, config, params, g)?,
            ModelInput::Entity(e) => {
                let mut inputs = vec![e.features.clone()];
                let mut zs = Vec::new();
                for &(w, b) in &layout.dense {
                    let mut z = matmul_t(inputs.last().expect("nonempty"), params.get(w));
                    add_row(&mut z, params.get(b));
                    inputs.push(z.map(sigmoid));
                    zs.push(z);
                }
                let last = inputs.last().expect("nonempty").clone();
                (Base::Entity { inputs, zs }, last)
            }
        };
        let (w, b) = layout.head;
        let mut head_z = matmul_t(&last, params.get(w));
        add_row(&mut head_z, params.get(b));
        if idx.iter().any(|&i| i >= head_z.rows()) {
            return Err(Error::shape("loss_increment", "row index out of range"));
        }
        Ok(LossIncrement {
            layout,
            config,
            input,
            params,
            idx,
            targets,
            base,
            head_z,
        })
    }

    /// `loss(moved) - loss(base)`.
    pub(crate) fn change(&self, moved: &ParamStore) -> Result<f64> {
        if moved.len() != self.params.len() {
            return Err(Error::shape("loss_increment", "parameter count differs from the base"));
        }
        let mut delta: Vec<Sparse> = Vec::with_capacity(moved.len());
        for (a, b) in moved.tensors().iter().zip(self.params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::shape("loss_increment", "parameter shape differs from the base"));
            }
            delta.push(
                a.data()
                    .iter()
                    .zip(b.data())
                    .enumerate()
                    .filter(|(_, (x, y))| x != y)
                    .map(|(i, (x, y))| (i, x - y))
                    .collect(),
            );
        }
        if delta.iter().all(|d| d.is_empty()) {
            return Ok(0.0);
        }
        let (last, dlast) = match (&self.base, self.input) {
            (Base::Graph { inputs, states, gates, last }, ModelInput::Graph(g)) => {
                (last, self.graph_delta(g, moved, &delta, inputs, states, gates))
            }
            (Base::Entity { inputs, zs }, ModelInput::Entity(_)) => {
                let mut dh: Option<Tensor> = None;
                for (l, &(w, b)) in self.layout.dense.iter().enumerate() {
                    let dz = lin(&inputs[l], dh.as_ref(), moved.get(w), &delta[w]);
                    let dz = add_row_delta(dz, &delta[b], inputs[l].rows(), moved.get(w).rows());
                    dh = sig_delta(&zs[l], dz.as_ref());
                }
                (inputs.last().expect("nonempty"), dh)
            }
            _ => unreachable!("base built from the same input"),
        };
        let (w, b) = self.layout.head;
        let dz = lin(last, dlast.as_ref(), moved.get(w), &delta[w]);
        let dz = add_row_delta(dz, &delta[b], last.rows(), 1);
        Ok(self.bce_delta(dz.as_ref()))
    }

    fn graph_delta(
        &self,
        g: &GraphInput,
        moved: &ParamStore,
        delta: &[Sparse],
        inputs: &[Vec<Tensor>],
        states: &[Vec<Option<TypeState>>],
        gates: &[Vec<Option<Tensor>>],
    ) -> Option<Tensor> {
        let graph = g.graph;
        let schema = graph.schema();
        let d = self.config.hidden_dim;
        let mut dh: Vec<Option<Tensor>> = vec![None; inputs[0].len()];
        for (k, layer) in states.iter().enumerate() {
            let h = &inputs[k];
            let mut next = dh.clone();
            for (nu, state) in layer.iter().enumerate() {
                let Some(state) = state else { continue };
                let incoming = schema.steps_into(nu);
                if incoming.is_empty() {
                    next[nu] = None;
                    continue;
                }
                let n = graph.num_nodes(nu);
                let mut dblocks = Vec::with_capacity(incoming.len());
                for (bi, &si) in incoming.iter().enumerate() {
                    let step = schema.meta_steps()[si];
                    let slots = self.layout.steps[k][si];
                    let es = graph.edge_set(si);
                    let dself = lin(&h[nu], dh[nu].as_ref(), moved.get(slots.self_w), &delta[slots.self_w]);
                    let dmsg = match self.config.kind {
                        ModelKind::Hgraphsage => {
                            lin(&h[step.source], dh[step.source].as_ref(), moved.get(slots.msg), &delta[slots.msg])
                                .map(|dp| scatter(&dp, es.src(), es.dst(), n))
                        }
                        _ => {
                            let bias = slots.bias.expect("HMPNN steps carry a message bias");
                            edge_conv_delta(
                                &h[step.source],
                                dh[step.source].as_ref(),
                                gates[k][si].as_ref().expect("gates cached for used steps"),
                                &delta[slots.msg],
                                &delta[bias],
                                &g.edge_features[si],
                                es.src(),
                                es.dst(),
                                d,
                                n,
                            )
                        }
                    };
                    let dz = add_opt(dself, dmsg);
                    dblocks.push(sig_delta(&state.blocks[bi].z, dz.as_ref()));
                }
                let dagg = match self.config.kind {
                    ModelKind::HmpnnCt => {
                        let w = self.layout.wct[k][nu].expect("Wct exists for types with incoming steps");
                        let dinner: Vec<Option<Tensor>> = dblocks
                            .iter()
                            .zip(&state.blocks)
                            .map(|(db, b)| sig_delta(&b.s, db.as_ref()))
                            .collect();
                        let dcat = if dinner.iter().all(Option::is_none) {
                            None
                        } else {
                            let mut c = Tensor::zeros(n, d * dinner.len());
                            for (bi, di) in dinner.iter().enumerate() {
                                if let Some(di) = di {
                                    for r in 0..n {
                                        c.row_mut(r)[bi * d..(bi + 1) * d].copy_from_slice(di.row(r));
                                    }
                                }
                            }
                            Some(c)
                        };
                        lin(state.cat.as_ref().expect("cat stored"), dcat.as_ref(), moved.get(w), &delta[w])
                    }
                    _ => dblocks.into_iter().fold(None, add_opt),
                };
                next[nu] = sig_delta(&state.z, dagg.as_ref());
            }
            dh = next;
        }
        dh[g.labeled_type].take()
    }

    fn bce_delta(&self, dz: Option<&Tensor>) -> f64 {
        let Some(dz) = dz else { return 0.0 };
        let mut total = 0.0;
        for (&i, &y) in self.idx.iter().zip(self.targets) {
            let z = self.head_z.get(i, 0);
            let dzi = dz.get(i, 0);
            if dzi == 0.0 {
                continue;
            }
            let p0 = sigmoid(z);
            let q0 = sigmoid(-z);
            let dp = sig_step(z, dzi);
            let p1 = p0 + dp;
            let inside = |p: f64| (BCE_EPS..=1.0 - BCE_EPS).contains(&p);
            total += if inside(p0) && inside(p1) {
                y * (dp / p0).ln_1p() + (1.0 - y) * (-dp / q0).ln_1p()
            } else {
                let term = |p: f64| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    y * p.ln() + (1.0 - y) * (1.0 - p).ln()
                };
                term(sigmoid(z + dzi)) - term(p0)
            };
        }
        -total / self.idx.len() as f64
    }
}

fn graph_base(layout: &Layout, config: &ModelConfig, params: &ParamStore, g: &GraphInput) -> Result<(Base, Tensor)> {
    let graph = g.graph;
    let schema = graph.schema();
    let d = config.hidden_dim;
    let needed = needed_types(g, config.layers);
    let mut h: Vec<Tensor> = g.node_features.clone();
    let mut inputs = Vec::with_capacity(config.layers);
    let mut states = Vec::with_capacity(config.layers);
    let mut gates = Vec::with_capacity(config.layers);
    for (k, need) in needed.iter().enumerate() {
        let mut layer_states: Vec<Option<TypeState>> = (0..h.len()).map(|_| None).collect();
        let mut layer_gates: Vec<Option<Tensor>> = vec![None; schema.meta_steps().len()];
        for nu in 0..h.len() {
            if !need[nu] {
                continue;
            }
            let n = graph.num_nodes(nu);
            let incoming = schema.steps_into(nu);
            if incoming.is_empty() {
                let c = Tensor::filled(n, d, 0.5);
                layer_states[nu] = Some(TypeState {
                    blocks: Vec::new(),
                    cat: None,
                    z: c.clone(),
                    h: c,
                });
                continue;
            }
            let mut blocks = Vec::with_capacity(incoming.len());
            for &si in &incoming {
                let step = schema.meta_steps()[si];
                let slots = layout.steps[k][si];
                let es = graph.edge_set(si);
                let mut z = matmul_t(&h[nu], params.get(slots.self_w));
                let msg = match config.kind {
                    ModelKind::Hgraphsage => scatter(&matmul_t(&h[step.source], params.get(slots.msg)), es.src(), es.dst(), n),
                    _ => {
                        let bias = slots.bias.expect("HMPNN steps carry a message bias");
                        let gt = edge_gates(params.get(slots.msg), params.get(bias), &g.edge_features[si]);
                        let m = gated_messages(&gt, &h[step.source], es.src(), es.dst(), d, n);
                        layer_gates[si] = Some(gt);
                        m
                    }
                };
                for (a, b) in z.data_mut().iter_mut().zip(msg.data()) {
                    *a += b;
                }
                let s = z.map(sigmoid);
                blocks.push(BlockState { z, s });
            }
            let (cat, z) = match config.kind {
                ModelKind::HmpnnCt => {
                    let inner: Vec<Tensor> = blocks.iter().map(|b| b.s.map(sigmoid)).collect();
                    let cat = Tensor::hcat(&inner.iter().collect::<Vec<_>>())?;
                    let w = layout.wct[k][nu].expect("Wct exists for types with incoming steps");
                    let z = matmul_t(&cat, params.get(w));
                    (Some(cat), z)
                }
                _ => {
                    let mut z = Tensor::zeros(n, d);
                    for b in &blocks {
                        for (a, v) in z.data_mut().iter_mut().zip(b.s.data()) {
                            *a += v;
                        }
                    }
                    (None, z)
                }
            };
            let hn = z.map(sigmoid);
            layer_states[nu] = Some(TypeState { blocks, cat, z, h: hn });
        }
        inputs.push(h.clone());
        for (t, st) in layer_states.iter().enumerate() {
            if let Some(st) = st {
                h[t] = st.h.clone();
            }
        }
        states.push(layer_states);
        gates.push(layer_gates);
    }
    let last = h[g.labeled_type].clone();
    Ok((
        Base::Graph {
            inputs,
            states,
            gates,
            last: last.clone(),
        },
        last,
    ))
}

/// `x Wᵀ`.
fn matmul_t(x: &Tensor, w: &Tensor) -> Tensor {
    let (n, din) = x.shape();
    let dout = w.rows();
    let mut out = Tensor::zeros(n, dout);
    for r in 0..n {
        let xr = x.row(r);
        let o = out.row_mut(r);
        for (i, oi) in o.iter_mut().enumerate() {
            *oi = w.row(i).iter().zip(xr).map(|(a, b)| a * b).sum();
        }
        debug_assert_eq!(xr.len(), din);
    }
    out
}

fn add_row(z: &mut Tensor, b: &Tensor) {
    for r in 0..z.rows() {
        for (a, v) in z.row_mut(r).iter_mut().zip(b.data()) {
            *a += v;
        }
    }
}

fn scatter(per_src: &Tensor, src: &[usize], dst: &[usize], n: usize) -> Tensor {
    let mut out = Tensor::zeros(n, per_src.cols());
    for (&u, &v) in src.iter().zip(dst) {
        for (a, b) in out.row_mut(v).iter_mut().zip(per_src.row(u)) {
            *a += b;
        }
    }
    out
}

/// Per-edge gate vectors `Wg r + bg`, one row per edge.
fn edge_gates(wg: &Tensor, bg: &Tensor, feats: &Tensor) -> Tensor {
    let m = feats.rows();
    let flat = wg.rows();
    let mut out = Tensor::zeros(m, flat);
    for e in 0..m {
        let r = feats.row(e);
        for (row, o) in out.row_mut(e).iter_mut().enumerate() {
            *o = bg.data()[row] + wg.row(row).iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

fn gated_messages(gates: &Tensor, h: &Tensor, src: &[usize], dst: &[usize], d: usize, n: usize) -> Tensor {
    let din = h.cols();
    let mut out = Tensor::zeros(n, d);
    for (e, (&u, &v)) in src.iter().zip(dst).enumerate() {
        let ge = gates.row(e);
        let hu = h.row(u);
        let o = out.row_mut(v);
        for (i, oi) in o.iter_mut().enumerate() {
            *oi += ge[i * din..(i + 1) * din].iter().zip(hu).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Increment of `x Wᵀ` given the increment of `x` and of `W`; `w1` is the
/// moved `W`.
fn lin(x: &Tensor, dx: Option<&Tensor>, w1: &Tensor, dw: &Sparse) -> Option<Tensor> {
    if dx.is_none() && dw.is_empty() {
        return None;
    }
    let n = x.rows();
    let din = w1.cols();
    let mut out = Tensor::zeros(n, w1.rows());
    if let Some(dx) = dx {
        for r in 0..n {
            let dxr = dx.row(r);
            let o = out.row_mut(r);
            for (j, &v) in dxr.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (i, oi) in o.iter_mut().enumerate() {
                    *oi += v * w1.data()[i * din + j];
                }
            }
        }
    }
    for &(f, v) in dw {
        let (i, j) = (f / din, f % din);
        for r in 0..n {
            let a = x.get(r, j) * v;
            out.row_mut(r)[i] += a;
        }
    }
    Some(out)
}

fn add_row_delta(dz: Option<Tensor>, db: &Sparse, n: usize, cols: usize) -> Option<Tensor> {
    if db.is_empty() {
        return dz;
    }
    let mut out = dz.unwrap_or_else(|| Tensor::zeros(n, cols));
    for &(j, v) in db {
        for r in 0..n {
            out.row_mut(r)[j] += v;
        }
    }
    Some(out)
}

fn add_opt(a: Option<Tensor>, b: Option<Tensor>) -> Option<Tensor> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(mut a), Some(b)) => {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
            Some(a)
        }
    }
}

/// `σ(z + δ) - σ(z) = σ(z + δ) σ(-z) (1 - e^{-δ})`.
fn sig_step(z: f64, dz: f64) -> f64 {
    if dz == 0.0 {
        return 0.0;
    }
    sigmoid(z + dz) * sigmoid(-z) * -(-dz).exp_m1()
}

fn sig_delta(z: &Tensor, dz: Option<&Tensor>) -> Option<Tensor> {
    let dz = dz?;
    let mut out = Tensor::zeros(z.rows(), z.cols());
    for ((o, &a), &b) in out.data_mut().iter_mut().zip(z.data()).zip(dz.data()) {
        *o = sig_step(a, b);
    }
    Some(out)
}

#[allow(clippy::too_many_arguments)]
fn edge_conv_delta(
    h: &Tensor,
    dh: Option<&Tensor>,
    gates: &Tensor,
    dwg: &Sparse,
    dbg: &Sparse,
    feats: &Tensor,
    src: &[usize],
    dst: &[usize],
    d: usize,
    n: usize,
) -> Option<Tensor> {
    if dh.is_none() && dwg.is_empty() && dbg.is_empty() {
        return None;
    }
    let din = h.cols();
    let c = feats.cols();
    // gate rows touched by the increment: row -> (feature weights, bias)
    let mut touched: BTreeMap<usize, (Vec<(usize, f64)>, f64)> = BTreeMap::new();
    for &(f, v) in dwg {
        touched.entry(f / c).or_default().0.push((f % c, v));
    }
    for &(row, v) in dbg {
        touched.entry(row).or_default().1 += v;
    }
    let mut out = Tensor::zeros(n, d);
    let mut dg: Vec<(usize, f64)> = Vec::with_capacity(touched.len());
    for (e, (&u, &v)) in src.iter().zip(dst).enumerate() {
        let r = feats.row(e);
        dg.clear();
        for (&row, (ws, b)) in &touched {
            dg.push((row, b + ws.iter().map(|&(col, w)| w * r[col]).sum::<f64>()));
        }
        let o = out.row_mut(v);
        if let Some(dh) = dh {
            let dhu = dh.row(u);
            if dhu.iter().any(|&x| x != 0.0) {
                let ge = gates.row(e);
                for (i, oi) in o.iter_mut().enumerate() {
                    *oi += ge[i * din..(i + 1) * din].iter().zip(dhu).map(|(a, b)| a * b).sum::<f64>();
                }
                for &(row, g) in &dg {
                    o[row / din] += g * dhu[row % din];
                }
            }
        }
        let hu = h.row(u);
        for &(row, g) in &dg {
            o[row / din] += g * hu[row % din];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble_feature_table, FeatureConfig};
    use crate::graph::AmlIds;
    use crate::harness::build_input;
    use crate::models::Model;
    use crate::synth::{generate, GenConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [ModelKind; 5] = [
        ModelKind::Logreg,
        ModelKind::Mlp,
        ModelKind::Hgraphsage,
        ModelKind::HmpnnSum,
        ModelKind::HmpnnCt,
    ];

    #[test]
    fn matches_plain_difference_for_moderate_steps() {
        let g = generate(&GenConfig::tiny(1)).unwrap();
        let ind = AmlIds::resolve(g.graph.schema()).unwrap().ind;
        let table = assemble_feature_table(&g.graph, &FeatureConfig::default()).unwrap().matrix;
        let idx: Vec<usize> = (0..g.labels.labels().len()).collect();
        let y: Vec<f64> = g.labels.labels().iter().map(|&v| v as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in KINDS {
            for k in 1..=3 {
                let mc = ModelConfig::new(kind, k);
                if mc.validate().is_err() {
                    continue;
                }
                let input = build_input(&g.graph, ind, &mc, Some(&table)).unwrap();
                let model = Model::new(&input, &mc).unwrap();
                let inc = LossIncrement::new(&model.layout, &model.config, &model.params, &input, &idx, &y).unwrap();
                assert_eq!(inc.change(&model.params).unwrap(), 0.0);
                let mut moved = model.params.clone();
                for t in moved.tensors_mut() {
                    for v in t.data_mut() {
                        *v += rng.random_range(-1e-2..1e-2);
                    }
                }
                let plain = model.loss_with(&moved, &input, &idx, &y).unwrap() - model.loss_with(&model.params, &input, &idx, &y).unwrap();
                let got = inc.change(&moved).unwrap();
                assert!((got - plain).abs() < 1e-12, "{kind:?} K={k}: {got} vs {plain}");
            }
        }
    }

    #[test]
    fn clamped_scores_fall_back_to_plain_difference() {
        let x = Tensor::from_vec(2, 1, vec![1.0, -1.0]).unwrap();
        let input = ModelInput::Entity(crate::models::EntityInput::raw(x));
        let mc = ModelConfig::new(ModelKind::Logreg, 1);
        let mut model = Model::new(&input, &mc).unwrap();
        model.params.get_mut(0).data_mut()[0] = 40.0;
        let (idx, y) = ([0, 1], [0.0, 1.0]);
        let inc = LossIncrement::new(&model.layout, &model.config, &model.params, &input, &idx, &y).unwrap();
        let mut moved = model.params.clone();
        moved.get_mut(0).data_mut()[0] = 20.0;
        let plain = model.loss_with(&moved, &input, &idx, &y).unwrap() - model.loss_with(&model.params, &input, &idx, &y).unwrap();
        assert!((inc.change(&moved).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_step_keeps_relative_precision() {
        let (z, dz) = (0.3, 1e-12);
        let s = sigmoid(z);
        let want = s * (1.0 - s) * dz;
        assert!(((sig_step(z, dz) - want) / want).abs() < 1e-9);
    }
}

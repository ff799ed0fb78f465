use std::borrow::Cow;

use crate::autodiff::{EdgeList, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::layout::Layout;
use super::{GraphInput, ModelConfig, ModelInput, ModelKind};

/// Records the model on `tape` and returns the `n x 1` score column.
pub(crate) fn forward<'a>(
    tape: &mut Tape<'a>,
    layout: &Layout,
    config: &ModelConfig,
    params: &[Var],
    input: &'a ModelInput,
) -> Result<Var> {
    match input {
        ModelInput::Graph(g) => {
            let needed = needed_types(g, config.layers);
            let states = layers(tape, layout, config, params, g, &needed)?;
            let h = states
                .last()
                .and_then(|layer| layer[g.labeled_type])
                .expect("labeled type is computed at the last layer");
            head(tape, layout, params, h)
        }
        ModelInput::Entity(e) => {
            let mut h = tape.leaf(&e.features, false);
            for &(w, b) in &layout.dense {
                let z = tape.matmul_t(h, params[w])?;
                let z = tape.add_row(z, params[b])?;
                h = tape.sigmoid(z)?;
            }
            head(tape, layout, params, h)
        }
    }
}

/// All node types at all layers, for diagnostics.
pub(crate) fn graph_states<'a>(
    tape: &mut Tape<'a>,
    layout: &Layout,
    config: &ModelConfig,
    params: &[Var],
    input: &'a GraphInput,
) -> Result<Vec<Vec<Var>>> {
    let all = vec![vec![true; input.node_features.len()]; config.layers];
    let states = layers(tape, layout, config, params, input, &all)?;
    Ok(states
        .into_iter()
        .map(|layer| layer.into_iter().map(|v| v.expect("every type computed")).collect())
        .collect())
}

fn head(tape: &mut Tape<'_>, layout: &Layout, params: &[Var], h: Var) -> Result<Var> {
    let (w, b) = layout.head;
    let z = tape.matmul_t(h, params[w])?;
    let z = tape.add_row(z, params[b])?;
    tape.sigmoid(z)
}

/// `needed[k][t]`: whether type `t` must be computed at layer `k + 1` for
/// the labeled type's final representation.
pub(super) fn needed_types(input: &GraphInput, layers: usize) -> Vec<Vec<bool>> {
    let schema = input.graph.schema();
    let nt = schema.num_node_types();
    let mut needed = vec![vec![false; nt]; layers];
    needed[layers - 1][input.labeled_type] = true;
    for k in (0..layers - 1).rev() {
        let mut cur = needed[k + 1].clone();
        for s in schema.meta_steps() {
            if needed[k + 1][s.target] {
                cur[s.source] = true;
            }
        }
        needed[k] = cur;
    }
    needed
}

fn layers<'a>(
    tape: &mut Tape<'a>,
    layout: &Layout,
    config: &ModelConfig,
    params: &[Var],
    input: &'a GraphInput,
    needed: &[Vec<bool>],
) -> Result<Vec<Vec<Option<Var>>>> {
    let graph = input.graph;
    let schema = graph.schema();
    let d = config.hidden_dim;
    for (t, x) in input.node_features.iter().enumerate() {
        if x.rows() != graph.num_nodes(t) || x.cols() != layout.node_dims()[t] {
            return Err(Error::shape(
                "forward",
                format!(
                    "type {t} features {:?}, expected {}x{}",
                    x.shape(),
                    graph.num_nodes(t),
                    layout.node_dims()[t]
                ),
            ));
        }
    }
    let mut h: Vec<Var> = input.node_features.iter().map(|x| tape.leaf(x, false)).collect();
    let mut out = Vec::with_capacity(config.layers);

    for (k, need) in needed.iter().enumerate() {
        let mut next: Vec<Option<Var>> = vec![None; h.len()];
        for (nu, slot) in next.iter_mut().enumerate() {
            if !need[nu] {
                continue;
            }
            let n = graph.num_nodes(nu);
            let incoming = schema.steps_into(nu);
            if incoming.is_empty() {
                *slot = Some(tape.constant(Tensor::filled(n, d, 0.5)));
                continue;
            }
            let mut blocks = Vec::with_capacity(incoming.len());
            for &si in &incoming {
                let step = schema.meta_steps()[si];
                let slots = layout.steps[k][si];
                let es = graph.edge_set(si);
                let self_term = tape.matmul_t(h[nu], params[slots.self_w])?;
                let pre = if es.is_empty() {
                    self_term
                } else {
                    let msg = match config.kind {
                        ModelKind::Hgraphsage => {
                            let proj = tape.matmul_t(h[step.source], params[slots.msg])?;
                            let per_edge = tape.select_rows(proj, Cow::Borrowed(es.src()))?;
                            tape.scatter_add_rows(per_edge, Cow::Borrowed(es.dst()), n)?
                        }
                        _ => {
                            let edges = EdgeList {
                                src: es.src(),
                                dst: es.dst(),
                                feats: &input.edge_features[si],
                            };
                            let bias = slots.bias.expect("HMPNN steps carry a message bias");
                            tape.edge_conv(h[step.source], params[slots.msg], params[bias], edges, d, n)?
                        }
                    };
                    tape.add(msg, self_term)?
                };
                blocks.push(tape.sigmoid(pre)?);
            }
            let agg = match config.kind {
                ModelKind::HmpnnCt => {
                    let inner = blocks.iter().map(|&b| tape.sigmoid(b)).collect::<Result<Vec<_>>>()?;
                    let cat = tape.concat_cols(&inner)?;
                    let w = layout.wct[k][nu].expect("Wct exists for types with incoming steps");
                    tape.matmul_t(cat, params[w])?
                }
                _ => {
                    let mut acc = blocks[0];
                    for &b in &blocks[1..] {
                        acc = tape.add(acc, b)?;
                    }
                    acc
                }
            };
            *slot = Some(tape.sigmoid(agg)?);
        }
        for (t, v) in next.iter().enumerate() {
            if let Some(v) = v {
                h[t] = *v;
            }
        }
        out.push(next);
    }
    Ok(out)
}

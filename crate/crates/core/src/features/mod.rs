//! Entity features for individuals: neighbourhood degree summaries, weighted
//! (amount) summaries, metapath2vec embeddings and the assembled table.

mod skipgram;
mod table;
mod walks;

pub use skipgram::{pair_loss, skipgram_train, EmbeddingTable, SkipGramConfig};
pub use table::{assemble_feature_table, FeatureConfig, FeatureTable, TABLE_A2_PATHS};
pub use walks::{metapath_walks, validate_corpus, MetaPath, WalkCorpus};

use crate::error::{Error, Result};
use crate::graph::{AmlIds, Direction, HeteroGraph, HeteroSchema};
use crate::tensor::Tensor;

/// Column index of the amount feature on txn edges.
pub const AMOUNT: usize = 1;

pub const UNWEIGHTED_COLUMNS: [&str; 11] = [
    "out_txn_individual",
    "out_txn_organization",
    "out_txn_external",
    "in_txn_individual",
    "in_txn_organization",
    "in_txn_external",
    "out_role_organization",
    "in_degree",
    "out_degree",
    "degree",
    "distinct_meta_steps",
];

pub const WEIGHTED_COLUMNS: [&str; 8] = [
    "w_out_txn_individual",
    "w_out_txn_organization",
    "w_out_txn_external",
    "w_in_txn_individual",
    "w_in_txn_organization",
    "w_in_txn_external",
    "w_in_degree",
    "w_out_degree",
];

/// The `(meta-step, direction)` pairs an individual touches, in the order
/// out-txn to ind/org/ext, in-txn from ind/org/ext, out-role to org.
fn individual_slots(ids: &AmlIds) -> Result<[(usize, Direction); 7]> {
    let step = |a, b| {
        ids.txn(a, b)
            .ok_or_else(|| Error::Schema("transaction schema is missing a txn meta-step".into()))
    };
    Ok([
        (step(0, 0)?, Direction::Out),
        (step(0, 1)?, Direction::Out),
        (step(0, 2)?, Direction::Out),
        (step(0, 0)?, Direction::In),
        (step(1, 0)?, Direction::In),
        (step(2, 0)?, Direction::In),
        (ids.role_step, Direction::Out),
    ])
}

/// Per-node weighted (or unit) degree along one meta-step.
fn step_degrees(graph: &HeteroGraph, step: usize, dir: Direction, weight: Option<usize>) -> Vec<f64> {
    let es = graph.edge_set(step);
    let s = graph.schema().meta_steps()[step];
    let (ends, ty) = match dir {
        Direction::In => (es.dst(), s.target),
        Direction::Out => (es.src(), s.source),
    };
    let mut out = vec![0.0; graph.num_nodes(ty)];
    for (e, &v) in ends.iter().enumerate() {
        out[v] += match weight {
            Some(c) => es.features().get(e, c),
            None => 1.0,
        };
    }
    out
}

/// Eleven unweighted degree columns per individual (see [`UNWEIGHTED_COLUMNS`]).
/// The last column counts distinct meta-steps with any incident edge, so an
/// individual both sending and receiving individual-to-individual txns
/// counts that meta-step once.
pub fn unweighted_summary(graph: &HeteroGraph) -> Result<Tensor> {
    let ids = AmlIds::resolve(graph.schema())?;
    let slots = individual_slots(&ids)?;
    let n = graph.num_nodes(ids.ind);
    let cols: Vec<Vec<f64>> = slots.iter().map(|&(s, d)| step_degrees(graph, s, d, None)).collect();
    let mut out = Tensor::zeros(n, 11);
    for v in 0..n {
        let row = out.row_mut(v);
        for (c, col) in cols.iter().enumerate() {
            row[c] = col[v];
        }
        let ins = row[3] + row[4] + row[5];
        let outs = row[0] + row[1] + row[2] + row[6];
        row[7] = ins;
        row[8] = outs;
        row[9] = ins + outs;
        let mut steps: Vec<usize> = slots
            .iter()
            .zip(cols.iter())
            .filter(|(_, col)| col[v] > 0.0)
            .map(|((s, _), _)| *s)
            .collect();
        steps.sort_unstable();
        steps.dedup();
        row[10] = steps.len() as f64;
    }
    Ok(out)
}

/// Eight amount-weighted columns per individual (see [`WEIGHTED_COLUMNS`]).
pub fn weighted_summary(graph: &HeteroGraph, amount_index: usize) -> Result<Tensor> {
    let ids = AmlIds::resolve(graph.schema())?;
    check_amount(graph.schema(), &ids, amount_index)?;
    let slots = individual_slots(&ids)?;
    let n = graph.num_nodes(ids.ind);
    let cols: Vec<Vec<f64>> = slots[..6]
        .iter()
        .map(|&(s, d)| step_degrees(graph, s, d, Some(amount_index)))
        .collect();
    let mut out = Tensor::zeros(n, 8);
    for v in 0..n {
        let row = out.row_mut(v);
        for (c, col) in cols.iter().enumerate() {
            row[c] = col[v];
        }
        row[6] = row[3] + row[4] + row[5];
        row[7] = row[0] + row[1] + row[2];
    }
    Ok(out)
}

fn check_amount(schema: &HeteroSchema, ids: &AmlIds, amount_index: usize) -> Result<()> {
    let dim = schema.edge_dim(ids.txn);
    if amount_index >= dim {
        return Err(Error::InvalidArgument(format!(
            "amount feature index {amount_index} out of range for txn edges of dimension {dim}"
        )));
    }
    Ok(())
}

/// Per node type, the txn `(meta-step, direction)` pairs that make up its
/// extra degree columns: for each txn meta-step in declaration order, `In`
/// if it ends at the type, then `Out` if it starts there.
pub fn extra_degree_layout(schema: &HeteroSchema) -> Result<Vec<Vec<(usize, Direction)>>> {
    let ids = AmlIds::resolve(schema)?;
    let mut out = vec![Vec::new(); schema.num_node_types()];
    for (si, s) in schema.meta_steps().iter().enumerate() {
        if s.edge != ids.txn {
            continue;
        }
        out[s.target].push((si, Direction::In));
        out[s.source].push((si, Direction::Out));
    }
    Ok(out)
}

/// Amount-weighted txn in/out degrees for every node type.
pub fn extra_degree_features(graph: &HeteroGraph, amount_index: usize) -> Result<Vec<Tensor>> {
    let schema = graph.schema();
    let ids = AmlIds::resolve(schema)?;
    check_amount(schema, &ids, amount_index)?;
    extra_degree_layout(schema)?
        .into_iter()
        .enumerate()
        .map(|(t, slots)| {
            let n = graph.num_nodes(t);
            let cols: Vec<Vec<f64>> = slots
                .iter()
                .map(|&(s, d)| step_degrees(graph, s, d, Some(amount_index)))
                .collect();
            let mut m = Tensor::zeros(n, cols.len());
            for v in 0..n {
                for (c, col) in cols.iter().enumerate() {
                    m.set(v, c, col[v]);
                }
            }
            Ok(m)
        })
        .collect()
}

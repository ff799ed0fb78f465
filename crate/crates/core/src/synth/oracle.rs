//! Hand-written motif detector used to confirm the planted signal is
//! recoverable from the graph and depends on transaction amounts.

use crate::error::Result;
use crate::features::AMOUNT;
use crate::graph::{AmlIds, HeteroGraph};

const COUNT: usize = 0;

/// Same graph with every txn amount set to zero.
pub fn zero_amounts(graph: &HeteroGraph) -> Result<HeteroGraph> {
    let ids = AmlIds::resolve(graph.schema())?;
    Ok(graph.map_edge_features(ids.txn, |c, v| if c == AMOUNT { 0.0 } else { v }))
}

/// One score per individual: the number of motif patterns it matches.
///
/// * many single transfers just under 10 000 from other individuals;
/// * a payer that forwards 90 to 100 percent of a single large transfer it
///   received from an individual;
/// * an organization the individual holds a role in, which pays out most of
///   several single large transfers received from externals.
pub fn oracle_scores(graph: &HeteroGraph) -> Result<Vec<f64>> {
    let ids = AmlIds::resolve(graph.schema())?;
    let n = graph.num_nodes(ids.ind);
    let ind_ind = graph.edge_set(ids.txn(0, 0).expect("txn step"));
    let ind_ext = graph.edge_set(ids.txn(0, 2).expect("txn step"));
    let ext_ind = graph.edge_set(ids.txn(2, 0).expect("txn step"));
    let ext_org = graph.edge_set(ids.txn(2, 1).expect("txn step"));
    let org_ind = graph.edge_set(ids.txn(1, 0).expect("txn step"));
    let role = graph.edge_set(ids.role_step);
    let single = |f: &crate::tensor::Tensor, e: usize| f.get(e, COUNT) == 1.0;

    let mut scores = vec![0.0; n];
    for (v, score) in scores.iter_mut().enumerate() {
        let f = ind_ind.features();
        let smurfs = ind_ind
            .incoming(v)
            .iter()
            .filter(|&&e| single(f, e) && (8000.0..10_000.0).contains(&f.get(e, AMOUNT)))
            .count();
        if smurfs >= 3 {
            *score += 1.0;
        }

        let layered = ext_ind.incoming(v).iter().any(|&e| {
            let w = ext_ind.src()[e];
            let out = ext_ind.features().get(e, AMOUNT);
            ind_ext.incoming(w).iter().any(|&x| {
                let a = ind_ext.features().get(x, AMOUNT);
                single(ind_ext.features(), x) && a >= 8000.0 && out >= 0.9 * a && out <= a
            })
        });
        if layered {
            *score += 1.0;
        }

        let abused = role.outgoing(v).iter().any(|&r| {
            let o = role.dst()[r];
            let fed: Vec<f64> = ext_org
                .incoming(o)
                .iter()
                .filter(|&&x| single(ext_org.features(), x) && ext_org.features().get(x, AMOUNT) >= 5000.0)
                .map(|&x| ext_org.features().get(x, AMOUNT))
                .collect();
            let total: f64 = fed.iter().sum();
            fed.len() >= 3
                && org_ind
                    .outgoing(o)
                    .iter()
                    .any(|&p| org_ind.dst()[p] == v && org_ind.features().get(p, AMOUNT) >= 0.8 * total)
        });
        if abused {
            *score += 1.0;
        }
    }
    Ok(scores)
}

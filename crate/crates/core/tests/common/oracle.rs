//! Naive reference implementations used as test oracles. They share no code
//! with the library beyond plain data accessors.

use hmpnn::autodiff::ParamStore;
use hmpnn::models::{GraphInput, ModelKind};
use hmpnn::Tensor;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ROC AUC by counting every (positive, negative) pair; ties count half.
pub fn roc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &sp) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision: walk the ranking (descending score, earlier rows
/// first among ties) and average the precision at each positive.
pub fn ap_rank_walk(scores: &[f64], labels: &[u8]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // insertion sort keeps the oracle independent of library sort helpers
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && scores[order[j - 1]] < scores[order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let total = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1.0;
            sum += hits / (rank + 1) as f64;
        }
    }
    sum / total
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| (0..w.cols()).map(|j| w.get(i, j) * x[j]).sum())
        .collect()
}

fn param<'a>(p: &'a ParamStore, name: &str) -> &'a Tensor {
    p.by_name(name).unwrap_or_else(|| panic!("missing parameter {name}"))
}

/// Scores of the labeled type computed one node and one edge at a time.
pub fn graph_scores(input: &GraphInput, params: &ParamStore, kind: ModelKind, layers: usize, d: usize) -> Vec<f64> {
    let graph = input.graph;
    let schema = graph.schema();
    let nt = schema.num_node_types();
    let mut h: Vec<Vec<Vec<f64>>> = (0..nt)
        .map(|t| {
            let x = &input.node_features[t];
            (0..x.rows()).map(|i| x.row(i).to_vec()).collect()
        })
        .collect();
    for k in 1..=layers {
        let mut next = Vec::with_capacity(nt);
        for t in 0..nt {
            let n = graph.num_nodes(t);
            let steps: Vec<usize> = (0..schema.meta_steps().len())
                .filter(|&s| schema.meta_steps()[s].target == t)
                .collect();
            if steps.is_empty() {
                next.push(vec![vec![0.5; d]; n]);
                continue;
            }
            let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
            for &s in &steps {
                let step = schema.meta_steps()[s];
                let prefix = format!("layer{k}/{}", schema.step_name(step));
                let b = param(params, &format!("{prefix}/B"));
                let es = graph.edge_set(s);
                let mut pre: Vec<Vec<f64>> = (0..n).map(|v| matvec(b, &h[t][v])).collect();
                for e in 0..es.len() {
                    let (u, v) = (es.src()[e], es.dst()[e]);
                    let hu = &h[step.source][u];
                    let msg = match kind {
                        ModelKind::Hgraphsage => matvec(param(params, &format!("{prefix}/W")), hu),
                        _ => {
                            let wg = param(params, &format!("{prefix}/Wg"));
                            let bg = param(params, &format!("{prefix}/bg"));
                            let r = input.edge_features[s].row(e);
                            let din = hu.len();
                            let mut out = vec![0.0; d];
                            for (i, o) in out.iter_mut().enumerate() {
                                for (j, &x) in hu.iter().enumerate() {
                                    let row = i * din + j;
                                    let g: f64 = bg.get(row, 0)
                                        + r.iter().enumerate().map(|(c, &rc)| wg.get(row, c) * rc).sum::<f64>();
                                    *o += g * x;
                                }
                            }
                            out
                        }
                    };
                    for (a, m) in pre[v].iter_mut().zip(msg) {
                        *a += m;
                    }
                }
                blocks.push(pre.into_iter().map(|z| z.into_iter().map(sig).collect()).collect());
            }
            let mut out = Vec::with_capacity(n);
            for v in 0..n {
                let z: Vec<f64> = match kind {
                    ModelKind::HmpnnCt => {
                        let cat: Vec<f64> = blocks.iter().flat_map(|b| b[v].iter().map(|&x| sig(x))).collect();
                        let name = &schema.node_types()[t].name;
                        matvec(param(params, &format!("layer{k}/{name}/Wct")), &cat)
                    }
                    _ => (0..d).map(|i| blocks.iter().map(|b| b[v][i]).sum()).collect(),
                };
                out.push(z.into_iter().map(sig).collect());
            }
            next.push(out);
        }
        h = next;
    }
    head(params, &h[input.labeled_type])
}

/// Logistic regression / feed-forward network scores, row by row.
pub fn entity_scores(x: &Tensor, params: &ParamStore, layers: usize) -> Vec<f64> {
    let mut h: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    for k in 1..layers {
        let w = param(params, &format!("layer{k}/W"));
        let b = param(params, &format!("layer{k}/b"));
        h = h
            .iter()
            .map(|row| matvec(w, row).iter().zip(b.data()).map(|(z, bb)| sig(z + bb)).collect())
            .collect();
    }
    head(params, &h)
}

fn head(params: &ParamStore, h: &[Vec<f64>]) -> Vec<f64> {
    let w = param(params, "head/W");
    let b = param(params, "head/b").get(0, 0);
    h.iter().map(|row| sig(matvec(w, row)[0] + b)).collect()
}

//! Model inputs and the shared feature scaling.
//!
//! Raw amounts and counts are heavy-tailed, so every column is passed through
//! `sign(x) * ln(1 + |x|)` first. Node columns of graph models are then
//! rescaled to `[0, 1]`, the range of every later hidden state, since
//! messages are products with the source representation. Edge columns and
//! entity tables are standardized; edge columns are pooled over all
//! meta-steps sharing an edge type.

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeTypeId};
use crate::tensor::Tensor;

pub fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Standardizes each column to zero mean and unit variance, pooling
/// statistics over every tensor in `parts` (all must share a width).
/// Constant columns are only centered.
pub fn standardize(parts: &mut [&mut Tensor]) {
    let Some(cols) = parts.first().map(|t| t.cols()) else {
        return;
    };
    let n: usize = parts.iter().map(|t| t.rows()).sum();
    if n == 0 {
        return;
    }
    for c in 0..cols {
        let mean = parts
            .iter()
            .flat_map(|t| (0..t.rows()).map(move |r| t.get(r, c)))
            .sum::<f64>()
            / n as f64;
        let var = parts
            .iter()
            .flat_map(|t| (0..t.rows()).map(move |r| (t.get(r, c) - mean).powi(2)))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        for t in parts.iter_mut() {
            for r in 0..t.rows() {
                let v = t.get(r, c);
                t.set(r, c, (v - mean) * scale);
            }
        }
    }
}

/// Maps each column linearly onto `[0, 1]`. Constant columns become 0.
pub fn rescale_unit(t: &mut Tensor) {
    for c in 0..t.cols() {
        let (lo, hi) = (0..t.rows())
            .map(|r| t.get(r, c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let scale = if hi - lo > 1e-12 { 1.0 / (hi - lo) } else { 0.0 };
        for r in 0..t.rows() {
            let v = t.get(r, c);
            t.set(r, c, (v - lo) * scale);
        }
    }
}

fn log_all(parts: &mut [&mut Tensor]) {
    for t in parts.iter_mut() {
        for v in t.data_mut() {
            *v = signed_log1p(*v);
        }
    }
}

fn log_standardize(parts: &mut [&mut Tensor]) {
    log_all(parts);
    standardize(parts);
}

/// Graph plus the node and edge feature matrices a graph model consumes.
#[derive(Clone, Debug)]
pub struct GraphInput<'g> {
    pub graph: &'g HeteroGraph,
    pub labeled_type: NodeTypeId,
    /// Per node type, `n_t x d_t`.
    pub node_features: Vec<Tensor>,
    /// Per meta-step, `m_s x c_e`.
    pub edge_features: Vec<Tensor>,
}

impl<'g> GraphInput<'g> {
    /// Features exactly as stored in the graph.
    pub fn raw(graph: &'g HeteroGraph, labeled_type: NodeTypeId) -> Self {
        GraphInput {
            graph,
            labeled_type,
            node_features: graph.all_node_features().to_vec(),
            edge_features: graph.edge_sets().iter().map(|e| e.features().clone()).collect(),
        }
    }

    /// Scaled features, optionally widened with `extra` per-type columns
    /// (appended after the intrinsic ones, before scaling).
    pub fn prepare(graph: &'g HeteroGraph, labeled_type: NodeTypeId, extra: Option<&[Tensor]>) -> Result<Self> {
        let schema = graph.schema();
        if labeled_type >= schema.num_node_types() {
            return Err(Error::InvalidArgument(format!("labeled type {labeled_type} out of range")));
        }
        let mut node_features = Vec::with_capacity(schema.num_node_types());
        for t in 0..schema.num_node_types() {
            let x = graph.node_features(t);
            let mut x = match extra {
                Some(extra) => {
                    let e = extra.get(t).ok_or_else(|| Error::shape("prepare", "missing extra block"))?;
                    Tensor::hcat(&[x, e])?
                }
                None => x.clone(),
            };
            log_all(&mut [&mut x]);
            rescale_unit(&mut x);
            node_features.push(x);
        }
        let mut edge_features: Vec<Tensor> = graph.edge_sets().iter().map(|e| e.features().clone()).collect();
        for et in 0..schema.edge_types().len() {
            let mut group: Vec<&mut Tensor> = edge_features
                .iter_mut()
                .zip(schema.meta_steps())
                .filter(|(_, s)| s.edge == et)
                .map(|(t, _)| t)
                .collect();
            log_standardize(&mut group);
        }
        Ok(GraphInput {
            graph,
            labeled_type,
            node_features,
            edge_features,
        })
    }

    pub fn num_labeled(&self) -> usize {
        self.graph.num_nodes(self.labeled_type)
    }
}

/// Entity feature table for logistic regression and feed-forward networks.
#[derive(Clone, Debug)]
pub struct EntityInput {
    pub features: Tensor,
}

impl EntityInput {
    pub fn raw(features: Tensor) -> Self {
        EntityInput { features }
    }

    pub fn prepare(mut features: Tensor) -> Self {
        log_standardize(&mut [&mut features]);
        EntityInput { features }
    }
}

#[derive(Clone, Debug)]
pub enum ModelInput<'g> {
    Graph(GraphInput<'g>),
    Entity(EntityInput),
}

impl ModelInput<'_> {
    /// Rows that receive a score.
    pub fn num_scored(&self) -> usize {
        match self {
            ModelInput::Graph(g) => g.num_labeled(),
            ModelInput::Entity(e) => e.features.rows(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_standardization() {
        let mut a = Tensor::from_vec(2, 2, vec![1.0, 5.0, 3.0, 5.0]).unwrap();
        let mut b = Tensor::from_vec(2, 2, vec![5.0, 5.0, 7.0, 5.0]).unwrap();
        standardize(&mut [&mut a, &mut b]);
        let col0: Vec<f64> = [a.get(0, 0), a.get(1, 0), b.get(0, 0), b.get(1, 0)].to_vec();
        let mean: f64 = col0.iter().sum::<f64>() / 4.0;
        let var: f64 = col0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        // constant column is centered to zero
        assert_eq!([a.get(0, 1), b.get(1, 1)], [0.0, 0.0]);
    }

    #[test]
    fn unit_rescaling() {
        let mut t = Tensor::from_vec(3, 2, vec![-2.0, 4.0, 0.0, 4.0, 6.0, 4.0]).unwrap();
        rescale_unit(&mut t);
        assert_eq!(t.data(), &[0.0, 0.0, 0.25, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn signed_log_is_odd() {
        assert_eq!(signed_log1p(0.0), 0.0);
        assert!((signed_log1p(-3.0) + signed_log1p(3.0)).abs() < 1e-15);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{EdgeTypeId, HeteroGraph, HeteroSchema, MetaStep, NodeTypeId};
use crate::util::derive_seed;

/// Alternating node/edge type pattern `ν0 ε1 ν1 ... εL νL`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    nodes: Vec<NodeTypeId>,
    edges: Vec<EdgeTypeId>,
}

impl MetaPath {
    /// Every consecutive triple must be an allowed meta-step in one of its
    /// two orientations, since walks ignore edge direction.
    pub fn new(schema: &HeteroSchema, nodes: Vec<NodeTypeId>, edges: Vec<EdgeTypeId>) -> Result<Self> {
        if edges.is_empty() || nodes.len() != edges.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "meta-path needs L >= 1 edges and L + 1 node types, got {} and {}",
                edges.len(),
                nodes.len()
            )));
        }
        for (i, &e) in edges.iter().enumerate() {
            let fwd = MetaStep::new(nodes[i], e, nodes[i + 1]);
            let back = MetaStep::new(nodes[i + 1], e, nodes[i]);
            if schema.step_index(fwd).is_none() && schema.step_index(back).is_none() {
                return Err(Error::Schema(format!("meta-path step {i} is not an allowed meta-step")));
            }
        }
        Ok(MetaPath { nodes, edges })
    }

    /// Parses `individual-txn-organization-txn-individual`.
    pub fn parse(schema: &HeteroSchema, text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('-').collect();
        if parts.len() < 3 || parts.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("malformed meta-path `{text}`")));
        }
        let nodes = parts.iter().step_by(2).map(|n| schema.node_type_id(n)).collect::<Result<_>>()?;
        let edges = parts.iter().skip(1).step_by(2).map(|e| schema.edge_type_id(e)).collect::<Result<_>>()?;
        MetaPath::new(schema, nodes, edges)
    }

    pub fn reversed(&self) -> MetaPath {
        MetaPath {
            nodes: self.nodes.iter().rev().copied().collect(),
            edges: self.edges.iter().rev().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn start_type(&self) -> NodeTypeId {
        self.nodes[0]
    }

    pub fn is_cyclic(&self) -> bool {
        self.nodes[0] == *self.nodes.last().expect("non-empty")
    }

    /// Node type at walk position `i`, cycling the pattern when it closes.
    pub fn type_at(&self, i: usize) -> NodeTypeId {
        if self.is_cyclic() {
            self.nodes[i % self.len()]
        } else {
            self.nodes[i]
        }
    }

    fn edge_at(&self, i: usize) -> EdgeTypeId {
        if self.is_cyclic() {
            self.edges[i % self.len()]
        } else {
            self.edges[i]
        }
    }

    /// Longest walk (in nodes) the pattern allows.
    fn max_nodes(&self) -> usize {
        if self.is_cyclic() {
            usize::MAX
        } else {
            self.nodes.len()
        }
    }

    pub fn display(&self, schema: &HeteroSchema) -> String {
        let mut s = schema.node_types()[self.nodes[0]].name.clone();
        for (e, n) in self.edges.iter().zip(&self.nodes[1..]) {
            s.push('-');
            s.push_str(&schema.edge_types()[*e].name);
            s.push('-');
            s.push_str(&schema.node_types()[*n].name);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkCorpus {
    pub path: MetaPath,
    /// Per-type node indices; the type at position `i` is `path.type_at(i)`.
    pub walks: Vec<Vec<usize>>,
}

impl WalkCorpus {
    pub fn num_pairs(&self, context_size: usize) -> usize {
        self.walks.iter().map(|w| window_pairs(w.len(), context_size)).sum()
    }
}

/// `(center, context)` position pairs of a walk of `len` nodes. Windows of
/// `context_size` nodes start at every position where a full window fits
/// (or once at 0 for shorter walks); each pairs its first node with the rest.
pub(crate) fn window_positions(len: usize, context_size: usize) -> impl Iterator<Item = (usize, usize)> {
    let starts = if len < 2 || context_size < 2 {
        0
    } else {
        len.saturating_sub(context_size) + 1
    };
    (0..starts).flat_map(move |j| ((j + 1)..(j + context_size).min(len)).map(move |c| (j, c)))
}

pub(crate) fn window_pairs(len: usize, context_size: usize) -> usize {
    window_positions(len, context_size).count()
}

/// `walks_per_node` walks of at most `walk_length` nodes from every node of
/// the path's start type. Each step moves along an edge of the next edge
/// type, in either direction, to a node of the next node type, chosen
/// uniformly among qualifying incident edges; a walk halts early when none
/// exists.
pub fn metapath_walks(
    graph: &HeteroGraph,
    path: &MetaPath,
    walk_length: usize,
    walks_per_node: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    let schema = graph.schema();
    MetaPath::new(schema, path.nodes.clone(), path.edges.clone())?;
    if walk_length == 0 {
        return Err(Error::InvalidArgument("walk_length must be at least 1".into()));
    }
    let stream = path_stream(path);
    // For each pattern position: (forward step, backward step).
    let hops: Vec<(Option<usize>, Option<usize>)> = (0..path.len())
        .map(|i| {
            let (a, e, b) = (path.nodes[i], path.edges[i], path.nodes[i + 1]);
            let fwd = schema.step_index(MetaStep::new(a, e, b));
            let back = schema.step_index(MetaStep::new(b, e, a));
            (fwd, back)
        })
        .collect();
    let limit = walk_length.min(path.max_nodes());
    let n = graph.num_nodes(path.start_type());
    let per_node: Vec<Vec<Vec<usize>>> = (0..n)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ start as u64, stream));
            (0..walks_per_node)
                .map(|_| {
                    let mut walk = Vec::with_capacity(limit);
                    walk.push(start);
                    let mut cur = start;
                    while walk.len() < limit {
                        let pos = (walk.len() - 1) % path.len();
                        let (fwd, back) = hops[pos];
                        let out_edges = fwd.map_or(&[][..], |s| graph.edge_set(s).outgoing(cur));
                        let in_edges = back.map_or(&[][..], |s| graph.edge_set(s).incoming(cur));
                        let total = out_edges.len() + in_edges.len();
                        if total == 0 {
                            break;
                        }
                        let r = rng.random_range(0..total);
                        cur = if r < out_edges.len() {
                            graph.edge_set(fwd.unwrap()).dst()[out_edges[r]]
                        } else {
                            graph.edge_set(back.unwrap()).src()[in_edges[r - out_edges.len()]]
                        };
                        walk.push(cur);
                    }
                    walk
                })
                .collect()
        })
        .collect();
    Ok(WalkCorpus {
        path: path.clone(),
        walks: per_node.into_iter().flatten().collect(),
    })
}

fn path_stream(path: &MetaPath) -> u64 {
    path.nodes
        .iter()
        .chain(&path.edges)
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &x| (h ^ x as u64).wrapping_mul(0x100_0000_01b3))
}

/// Checks every transition of every walk against the schema and graph.
pub fn validate_corpus(graph: &HeteroGraph, corpus: &WalkCorpus) -> bool {
    let schema = graph.schema();
    let path = &corpus.path;
    corpus.walks.iter().all(|w| {
        w.windows(2).enumerate().all(|(i, pair)| {
            let (a, b) = (path.type_at(i), path.type_at(i + 1));
            let e = path.edge_at(i);
            let connects = |s: MetaStep, u: usize, v: usize| {
                schema
                    .step_index(s)
                    .is_some_and(|si| graph.edge_set(si).outgoing(u).iter().any(|&x| graph.edge_set(si).dst()[x] == v))
            };
            connects(MetaStep::new(a, e, b), pair[0], pair[1]) || connects(MetaStep::new(b, e, a), pair[1], pair[0])
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EdgeTableBuilder, HeteroSchema, INDIVIDUAL, ORGANIZATION, TXN};
    use crate::tensor::Tensor;

    fn chain() -> HeteroGraph {
        // ind0 -> org0 -> ind1, single edges
        let s = HeteroSchema::aml();
        let mut a = EdgeTableBuilder::new(s.step_by_names(INDIVIDUAL, TXN, ORGANIZATION).unwrap(), 2);
        a.push(0, 0, &[1.0, 1.0]);
        let mut b = EdgeTableBuilder::new(s.step_by_names(ORGANIZATION, TXN, INDIVIDUAL).unwrap(), 2);
        b.push(0, 1, &[1.0, 1.0]);
        let nodes = vec![Tensor::zeros(3, 11), Tensor::zeros(1, 8), Tensor::zeros(0, 2)];
        build_graph(s, nodes, vec![a.finish(), b.finish()]).unwrap()
    }

    #[test]
    fn stuck_walker_and_unique_chain() {
        let g = chain();
        let p = MetaPath::parse(g.schema(), "individual-txn-organization-txn-individual").unwrap();
        let c = metapath_walks(&g, &p, 5, 2, 1).unwrap();
        assert_eq!(c.walks.len(), 6);
        // ind0: org0 has two incident edges (ind0 in, ind1 out), so step two
        // returns to ind0 or reaches ind1.
        for w in &c.walks[..2] {
            assert_eq!(&w[..2], &[0, 0]);
        }
        // ind2 is isolated.
        assert_eq!(c.walks[4], vec![2]);
        assert_eq!(c.walks[5], vec![2]);
        assert!(validate_corpus(&g, &c));
        assert_eq!(c, metapath_walks(&g, &p, 5, 2, 1).unwrap());
    }

    #[test]
    fn one_pass_pattern_is_reproduced() {
        let g = chain();
        let p = MetaPath::parse(g.schema(), "individual-txn-organization").unwrap();
        let c = metapath_walks(&g, &p, 20, 1, 9).unwrap();
        assert_eq!(c.walks[0], vec![0, 0]);
        assert_eq!(c.walks[1], vec![1, 0]);
    }

    #[test]
    fn rejects_unknown_steps() {
        let s = HeteroSchema::aml();
        assert!(MetaPath::parse(&s, "external-txn-external").is_err());
        assert!(MetaPath::parse(&s, "individual-role-external").is_err());
        assert!(MetaPath::parse(&s, "individual-txn").is_err());
    }

    #[test]
    fn pair_counts() {
        assert_eq!(window_pairs(1, 10), 0);
        assert_eq!(window_pairs(3, 10), 2);
        assert_eq!(window_pairs(20, 10), 11 * 9);
        assert_eq!(window_positions(4, 3).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2), (1, 3)]);
    }
}

//! Typed heterogeneous directed multigraph.
//!
//! Nodes are identified by `(node type, dense index)`. Edges are stored per
//! meta-step with a feature row each, and indexed by target (incoming, the
//! access pattern of message passing) and by source.

mod io;
mod schema;

use std::collections::VecDeque;

pub use io::{read_container, write_container, Container};
pub use schema::{
    meta_steps, AmlIds, EdgeTypeId, HeteroSchema, MetaStep, NodeTypeId, SchemaFile, StepNames, TypeDef,
    EXTERNAL, INDIVIDUAL, ORGANIZATION, ROLE, TXN,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct NodeRef {
    pub ty: NodeTypeId,
    pub index: usize,
}

impl NodeRef {
    pub fn new(ty: NodeTypeId, index: usize) -> Self {
        NodeRef { ty, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

/// Raw edge list for one meta-step, as handed to [`build_graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTable {
    pub step: MetaStep,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub features: Tensor,
}

impl EdgeTable {
    pub fn new(step: MetaStep, feature_dim: usize) -> Self {
        EdgeTable {
            step,
            src: Vec::new(),
            dst: Vec::new(),
            features: Tensor::zeros(0, feature_dim),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Accumulates rows for an [`EdgeTable`] without repeated reallocation of the
/// feature tensor.
#[derive(Clone, Debug)]
pub struct EdgeTableBuilder {
    step: MetaStep,
    dim: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    feats: Vec<f64>,
}

impl EdgeTableBuilder {
    pub fn new(step: MetaStep, dim: usize) -> Self {
        EdgeTableBuilder {
            step,
            dim,
            src: Vec::new(),
            dst: Vec::new(),
            feats: Vec::new(),
        }
    }

    pub fn push(&mut self, src: usize, dst: usize, features: &[f64]) {
        assert_eq!(features.len(), self.dim, "edge feature width");
        self.src.push(src);
        self.dst.push(dst);
        self.feats.extend_from_slice(features);
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn finish(self) -> EdgeTable {
        let n = self.src.len();
        EdgeTable {
            step: self.step,
            src: self.src,
            dst: self.dst,
            features: Tensor::from_vec(n, self.dim, self.feats).expect("consistent widths"),
        }
    }
}

/// Compressed index: for each node, a contiguous range of edge ids.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    offsets: Vec<usize>,
    edges: Vec<usize>,
}

impl Csr {
    /// Counting sort by key; edges with equal keys keep their input order.
    fn build(keys: &[usize], n: usize) -> Csr {
        let mut offsets = vec![0usize; n + 1];
        for &k in keys {
            offsets[k + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut edges = vec![0usize; keys.len()];
        for (e, &k) in keys.iter().enumerate() {
            edges[cursor[k]] = e;
            cursor[k] += 1;
        }
        Csr { offsets, edges }
    }

    #[inline]
    fn range(&self, node: usize) -> &[usize] {
        &self.edges[self.offsets[node]..self.offsets[node + 1]]
    }
}

/// All edges of one meta-step.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSet {
    src: Vec<usize>,
    dst: Vec<usize>,
    features: Tensor,
    incoming: Csr,
    outgoing: Csr,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Edge ids whose target is `node`, in insertion order.
    pub fn incoming(&self, node: usize) -> &[usize] {
        self.incoming.range(node)
    }

    /// Edge ids whose source is `node`, in insertion order.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        self.outgoing.range(node)
    }

    /// Per-target range offsets of the incoming index (`n_target + 1` entries).
    pub fn incoming_offsets(&self) -> &[usize] {
        &self.incoming.offsets
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    schema: HeteroSchema,
    node_features: Vec<Tensor>,
    edges: Vec<EdgeSet>,
}

/// Builds a graph from per-type node feature tables and per-meta-step edge
/// tables. Several tables may target the same meta-step; they are appended in
/// the order given. An empty `node_tables` means zero nodes of every type.
pub fn build_graph(
    schema: HeteroSchema,
    node_tables: Vec<Tensor>,
    edge_tables: Vec<EdgeTable>,
) -> Result<HeteroGraph> {
    let node_tables = if node_tables.is_empty() {
        schema
            .node_types()
            .iter()
            .map(|t| Tensor::zeros(0, t.dim))
            .collect()
    } else {
        node_tables
    };
    if node_tables.len() != schema.num_node_types() {
        return Err(Error::Schema(format!(
            "{} node tables for {} node types",
            node_tables.len(),
            schema.num_node_types()
        )));
    }
    for (t, table) in node_tables.iter().enumerate() {
        let def = &schema.node_types()[t];
        if table.cols() != def.dim {
            return Err(Error::Table {
                table: format!("nodes_{}", def.name),
                row: 0,
                msg: format!("{} feature columns, schema declares {}", table.cols(), def.dim),
            });
        }
    }

    let steps = schema.meta_steps().to_vec();
    let mut src: Vec<Vec<usize>> = vec![Vec::new(); steps.len()];
    let mut dst: Vec<Vec<usize>> = vec![Vec::new(); steps.len()];
    let mut feats: Vec<Vec<f64>> = vec![Vec::new(); steps.len()];
    for table in &edge_tables {
        let name = format!(
            "edges_{}",
            describe_step(&schema, table.step)
        );
        let Some(si) = schema.step_index(table.step) else {
            return Err(Error::Table {
                table: name,
                row: 0,
                msg: "meta-step is not allowed by the schema".into(),
            });
        };
        let step = table.step;
        let c = schema.edge_dim(step.edge);
        if table.features.cols() != c {
            return Err(Error::Table {
                table: name,
                row: 0,
                msg: format!("{} edge feature columns, schema declares {c}", table.features.cols()),
            });
        }
        if table.src.len() != table.dst.len() || table.features.rows() != table.src.len() {
            return Err(Error::Table {
                table: name,
                row: table.src.len().min(table.dst.len()).min(table.features.rows()),
                msg: format!(
                    "{} sources, {} targets, {} feature rows",
                    table.src.len(),
                    table.dst.len(),
                    table.features.rows()
                ),
            });
        }
        let (ns, nt) = (node_tables[step.source].rows(), node_tables[step.target].rows());
        for (row, (&s, &d)) in table.src.iter().zip(&table.dst).enumerate() {
            if s >= ns {
                return Err(Error::Table {
                    table: name,
                    row,
                    msg: format!("source index {s} out of range (n = {ns})"),
                });
            }
            if d >= nt {
                return Err(Error::Table {
                    table: name,
                    row,
                    msg: format!("target index {d} out of range (n = {nt})"),
                });
            }
        }
        src[si].extend_from_slice(&table.src);
        dst[si].extend_from_slice(&table.dst);
        feats[si].extend_from_slice(table.features.data());
    }

    let edges = steps
        .iter()
        .enumerate()
        .map(|(si, step)| {
            let s = std::mem::take(&mut src[si]);
            let d = std::mem::take(&mut dst[si]);
            let m = s.len();
            let features = Tensor::from_vec(m, schema.edge_dim(step.edge), std::mem::take(&mut feats[si]))?;
            let incoming = Csr::build(&d, node_tables[step.target].rows());
            let outgoing = Csr::build(&s, node_tables[step.source].rows());
            Ok(EdgeSet {
                src: s,
                dst: d,
                features,
                incoming,
                outgoing,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(HeteroGraph {
        schema,
        node_features: node_tables,
        edges,
    })
}

fn describe_step(schema: &HeteroSchema, step: MetaStep) -> String {
    let n = schema.node_types();
    let e = schema.edge_types();
    let name = |v: &[TypeDef], i: usize| v.get(i).map_or_else(|| format!("#{i}"), |t| t.name.clone());
    format!("{}__{}__{}", name(n, step.source), name(e, step.edge), name(n, step.target))
}

impl HeteroGraph {
    pub fn schema(&self) -> &HeteroSchema {
        &self.schema
    }

    pub fn num_nodes(&self, ty: NodeTypeId) -> usize {
        self.node_features[ty].rows()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.node_features.iter().map(Tensor::rows).collect()
    }

    pub fn total_nodes(&self) -> usize {
        self.node_features.iter().map(Tensor::rows).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(EdgeSet::len).sum()
    }

    pub fn node_features(&self, ty: NodeTypeId) -> &Tensor {
        &self.node_features[ty]
    }

    pub fn all_node_features(&self) -> &[Tensor] {
        &self.node_features
    }

    /// Edge set of the meta-step at `step_index` in schema order.
    pub fn edge_set(&self, step_index: usize) -> &EdgeSet {
        &self.edges[step_index]
    }

    pub fn edge_sets(&self) -> &[EdgeSet] {
        &self.edges
    }

    fn step_idx(&self, step: MetaStep) -> Result<usize> {
        self.schema.step_index(step).ok_or_else(|| {
            Error::Schema(format!(
                "meta-step {} is not allowed by the schema",
                describe_step(&self.schema, step)
            ))
        })
    }

    fn check_node(&self, v: NodeRef) -> Result<()> {
        if v.ty >= self.schema.num_node_types() || v.index >= self.num_nodes(v.ty) {
            return Err(Error::InvalidArgument(format!("node {v:?} does not exist")));
        }
        Ok(())
    }

    /// `N_μ^ε(v)`: the sources of meta-step `step` edges pointing at `v`,
    /// each with its edge feature row, in insertion order.
    pub fn incoming_neighborhood(&self, v: NodeRef, step: MetaStep) -> Result<Vec<(usize, &[f64])>> {
        let si = self.step_idx(step)?;
        if v.ty != step.target {
            return Err(Error::TypeMismatch(format!(
                "node of type `{}` queried with meta-step ending at `{}`",
                self.schema.node_types()[v.ty].name,
                self.schema.node_types()[step.target].name
            )));
        }
        self.check_node(v)?;
        let es = &self.edges[si];
        Ok(es
            .incoming(v.index)
            .iter()
            .map(|&e| (es.src[e], es.features.row(e)))
            .collect())
    }

    pub fn degree(&self, v: NodeRef, step: MetaStep, direction: Direction) -> Result<usize> {
        let si = self.step_idx(step)?;
        let expected = match direction {
            Direction::In => step.target,
            Direction::Out => step.source,
        };
        if v.ty != expected {
            return Err(Error::TypeMismatch(format!(
                "node of type `{}` has no {:?} edges under {}",
                self.schema.node_types()[v.ty].name,
                direction,
                describe_step(&self.schema, step)
            )));
        }
        self.check_node(v)?;
        let es = &self.edges[si];
        Ok(match direction {
            Direction::In => es.incoming(v.index).len(),
            Direction::Out => es.outgoing(v.index).len(),
        })
    }

    /// Re-checks every structural invariant. Graphs produced by
    /// [`build_graph`] always pass; this exists for loaded or generated data.
    pub fn validate(&self) -> Result<()> {
        if self.edges.len() != self.schema.meta_steps().len() {
            return Err(Error::Schema("edge sets do not match meta-steps".into()));
        }
        for (t, x) in self.node_features.iter().enumerate() {
            if x.cols() != self.schema.node_dim(t) {
                return Err(Error::Schema(format!("node type {t} has wrong feature width")));
            }
        }
        for (si, (step, es)) in self.schema.meta_steps().iter().zip(&self.edges).enumerate() {
            let name = describe_step(&self.schema, *step);
            if es.features.rows() != es.len() || es.features.cols() != self.schema.edge_dim(step.edge) {
                return Err(Error::Schema(format!("edge features of {name} have wrong shape")));
            }
            let (ns, nt) = (self.num_nodes(step.source), self.num_nodes(step.target));
            if es.src.iter().any(|&s| s >= ns) || es.dst.iter().any(|&d| d >= nt) {
                return Err(Error::Schema(format!("edge endpoint out of range in {name}")));
            }
            let mut seen = vec![false; es.len()];
            for v in 0..nt {
                for &e in es.incoming(v) {
                    if es.dst[e] != v || std::mem::replace(&mut seen[e], true) {
                        return Err(Error::Schema(format!("incoming index of step {si} is corrupt")));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Schema(format!("incoming index of step {si} misses edges")));
            }
        }
        Ok(())
    }

    /// Copy of the graph with `f(column, value)` applied to every feature of
    /// edges of type `edge`.
    pub fn map_edge_features(&self, edge: EdgeTypeId, f: impl Fn(usize, f64) -> f64) -> HeteroGraph {
        let mut g = self.clone();
        for (step, es) in g.schema.meta_steps().iter().zip(g.edges.iter_mut()) {
            if step.edge != edge {
                continue;
            }
            let c = es.features.cols();
            for (i, v) in es.features.data_mut().iter_mut().enumerate() {
                *v = f(i % c, *v);
            }
        }
        g
    }

    /// Edge tables equivalent to this graph's contents (for serialization or
    /// rebuilding with modifications).
    pub fn edge_tables(&self) -> Vec<EdgeTable> {
        self.schema
            .meta_steps()
            .iter()
            .zip(&self.edges)
            .map(|(step, es)| EdgeTable {
                step: *step,
                src: es.src.clone(),
                dst: es.dst.clone(),
                features: es.features.clone(),
            })
            .collect()
    }

    /// Induced subgraph on the nodes within `hops` undirected steps of `v`
    /// along edges of type `edge_type`; only edges of that type are kept.
    pub fn egonet(&self, v: NodeRef, hops: usize, edge_type: EdgeTypeId) -> Result<Egonet> {
        self.check_node(v)?;
        let nt = self.schema.num_node_types();
        let mut dist: Vec<Vec<Option<usize>>> = (0..nt).map(|t| vec![None; self.num_nodes(t)]).collect();
        dist[v.ty][v.index] = Some(0);
        let mut queue = VecDeque::from([v]);
        let typed: Vec<(usize, MetaStep)> = self
            .schema
            .meta_steps()
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, s)| s.edge == edge_type)
            .collect();
        while let Some(u) = queue.pop_front() {
            let d = dist[u.ty][u.index].expect("queued nodes are visited");
            if d == hops {
                continue;
            }
            for &(si, step) in &typed {
                let es = &self.edges[si];
                let mut visit = |w: NodeRef, dist: &mut Vec<Vec<Option<usize>>>| {
                    if dist[w.ty][w.index].is_none() {
                        dist[w.ty][w.index] = Some(d + 1);
                        queue.push_back(w);
                    }
                };
                if step.source == u.ty {
                    for &e in es.outgoing(u.index) {
                        visit(NodeRef::new(step.target, es.dst[e]), &mut dist);
                    }
                }
                if step.target == u.ty {
                    for &e in es.incoming(u.index) {
                        visit(NodeRef::new(step.source, es.src[e]), &mut dist);
                    }
                }
            }
        }

        let node_map: Vec<Vec<usize>> = dist
            .iter()
            .map(|d| (0..d.len()).filter(|&i| d[i].is_some()).collect())
            .collect();
        let mut remap: Vec<Vec<usize>> = (0..nt).map(|t| vec![usize::MAX; self.num_nodes(t)]).collect();
        for (t, nodes) in node_map.iter().enumerate() {
            for (new, &old) in nodes.iter().enumerate() {
                remap[t][old] = new;
            }
        }
        let node_tables = node_map
            .iter()
            .enumerate()
            .map(|(t, nodes)| self.node_features[t].select_rows(nodes))
            .collect();
        let mut tables = Vec::new();
        for &(si, step) in &typed {
            let es = &self.edges[si];
            let mut b = EdgeTableBuilder::new(step, es.features.cols());
            for e in 0..es.len() {
                let (s, d) = (remap[step.source][es.src[e]], remap[step.target][es.dst[e]]);
                if s != usize::MAX && d != usize::MAX {
                    b.push(s, d, es.features.row(e));
                }
            }
            tables.push(b.finish());
        }
        let graph = build_graph(self.schema.clone(), node_tables, tables)?;
        let center = NodeRef::new(v.ty, remap[v.ty][v.index]);
        Ok(Egonet {
            graph,
            node_map,
            center,
        })
    }
}

/// Result of [`HeteroGraph::egonet`]: the subgraph plus, per node type, the
/// original index of each retained node.
#[derive(Clone, Debug)]
pub struct Egonet {
    pub graph: HeteroGraph,
    pub node_map: Vec<Vec<usize>>,
    pub center: NodeRef,
}

/// Binary labels for the nodes of one type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTable {
    labeled_type: NodeTypeId,
    labels: Vec<u8>,
}

impl LabelTable {
    pub fn new(labeled_type: NodeTypeId, labels: Vec<u8>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Table {
                table: "labels".into(),
                row: i,
                msg: format!("label {} is not 0 or 1", labels[i]),
            });
        }
        Ok(LabelTable { labeled_type, labels })
    }

    /// Checks the table against a graph's node count for the labeled type.
    pub fn check_against(&self, graph: &HeteroGraph) -> Result<()> {
        let n = graph.num_nodes(self.labeled_type);
        if self.labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {n} nodes of the labeled type",
                self.labels.len()
            )));
        }
        Ok(())
    }

    pub fn labeled_type(&self) -> NodeTypeId {
        self.labeled_type
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

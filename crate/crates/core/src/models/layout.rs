//! Parameter names, shapes and the index tables forward passes use.

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::graph::HeteroSchema;

use super::{glorot, init_rng, ModelConfig, ModelInput, ModelKind};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub zero_init: bool,
}

impl ParamSpec {
    fn weight(name: String, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Self {
        ParamSpec {
            name,
            rows,
            cols,
            fan_in,
            fan_out,
            zero_init: false,
        }
    }

    fn bias(name: String, rows: usize, cols: usize) -> Self {
        ParamSpec {
            name,
            rows,
            cols,
            fan_in: 0,
            fan_out: 0,
            zero_init: true,
        }
    }
}

/// Parameter slots of one meta-step at one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct StepSlots {
    /// `Wg` for HMPNN, `W` for HGraphSage.
    pub msg: usize,
    /// `bg` for HMPNN.
    pub bias: Option<usize>,
    pub self_w: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    kind: ModelKind,
    specs: Vec<ParamSpec>,
    node_dims: Vec<usize>,
    entity_dim: usize,
    pub(crate) steps: Vec<Vec<StepSlots>>,
    pub(crate) wct: Vec<Vec<Option<usize>>>,
    pub(crate) dense: Vec<(usize, usize)>,
    pub(crate) head: (usize, usize),
}

impl Layout {
    pub fn for_input(input: &ModelInput, config: &ModelConfig) -> Result<Self> {
        match (input, config.kind.is_graph()) {
            (ModelInput::Graph(g), true) => {
                let dims: Vec<usize> = g.node_features.iter().map(|t| t.cols()).collect();
                Layout::graph(g.graph.schema(), &dims, config)
            }
            (ModelInput::Entity(e), false) => Layout::entity(e.features.cols(), config),
            _ => Err(Error::InvalidArgument(format!(
                "model `{}` cannot consume this input",
                config.variant()
            ))),
        }
    }

    pub fn graph(schema: &HeteroSchema, node_dims: &[usize], config: &ModelConfig) -> Result<Self> {
        if !config.kind.is_graph() {
            return Err(Error::InvalidArgument(format!("`{}` is not a graph model", config.variant())));
        }
        if node_dims.len() != schema.num_node_types() {
            return Err(Error::shape(
                "layout",
                format!("{} node dims for {} node types", node_dims.len(), schema.num_node_types()),
            ));
        }
        let d = config.hidden_dim;
        let mut specs = Vec::new();
        let mut steps = Vec::new();
        let mut wct = Vec::new();
        for k in 1..=config.layers {
            let d_in = |t: usize| if k == 1 { node_dims[t] } else { d };
            let mut layer = Vec::new();
            for step in schema.meta_steps() {
                let prefix = format!("layer{k}/{}", schema.step_name(*step));
                let (din_src, din_dst) = (d_in(step.source), d_in(step.target));
                let slots = if config.kind == ModelKind::Hgraphsage {
                    specs.push(ParamSpec::weight(format!("{prefix}/W"), d, din_src, din_src, d));
                    let msg = specs.len() - 1;
                    specs.push(ParamSpec::weight(format!("{prefix}/B"), d, din_dst, din_dst, d));
                    StepSlots {
                        msg,
                        bias: None,
                        self_w: specs.len() - 1,
                    }
                } else {
                    let c = schema.edge_dim(step.edge);
                    let flat = d * din_src;
                    specs.push(ParamSpec::weight(format!("{prefix}/Wg"), flat, c, c, flat));
                    let msg = specs.len() - 1;
                    specs.push(ParamSpec::bias(format!("{prefix}/bg"), flat, 1));
                    let bias = Some(specs.len() - 1);
                    specs.push(ParamSpec::weight(format!("{prefix}/B"), d, din_dst, din_dst, d));
                    StepSlots {
                        msg,
                        bias,
                        self_w: specs.len() - 1,
                    }
                };
                layer.push(slots);
            }
            steps.push(layer);

            let mut per_type = vec![None; schema.num_node_types()];
            if config.kind == ModelKind::HmpnnCt {
                for (t, def) in schema.node_types().iter().enumerate() {
                    let arity = schema.steps_into(t).len();
                    if arity == 0 {
                        continue;
                    }
                    let width = d * arity;
                    specs.push(ParamSpec::weight(format!("layer{k}/{}/Wct", def.name), d, width, width, d));
                    per_type[t] = Some(specs.len() - 1);
                }
            }
            wct.push(per_type);
        }
        let head = push_head(&mut specs, d);
        Ok(Layout {
            kind: config.kind,
            specs,
            node_dims: node_dims.to_vec(),
            entity_dim: 0,
            steps,
            wct,
            dense: Vec::new(),
            head,
        })
    }

    /// Logistic regression (`K = 1`) or a network with `K - 1` sigmoid hidden
    /// layers as wide as the input, every layer biased.
    pub fn entity(dim: usize, config: &ModelConfig) -> Result<Self> {
        if config.kind.is_graph() {
            return Err(Error::InvalidArgument(format!("`{}` is a graph model", config.variant())));
        }
        let mut specs = Vec::new();
        let mut dense = Vec::new();
        for k in 1..config.layers {
            specs.push(ParamSpec::weight(format!("layer{k}/W"), dim, dim, dim, dim));
            specs.push(ParamSpec::bias(format!("layer{k}/b"), 1, dim));
            dense.push((specs.len() - 2, specs.len() - 1));
        }
        let head = push_head(&mut specs, dim);
        Ok(Layout {
            kind: config.kind,
            specs,
            node_dims: Vec::new(),
            entity_dim: dim,
            steps: Vec::new(),
            wct: Vec::new(),
            dense,
            head,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn node_dims(&self) -> &[usize] {
        &self.node_dims
    }

    pub fn entity_dim(&self) -> usize {
        self.entity_dim
    }

    pub fn num_scalars(&self) -> usize {
        self.specs.iter().map(|s| s.rows * s.cols).sum()
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        let mut rng = init_rng(seed);
        let mut store = ParamStore::new();
        for spec in &self.specs {
            store.push(spec.name.clone(), glorot(spec, &mut rng));
        }
        store
    }
}

fn push_head(specs: &mut Vec<ParamSpec>, width: usize) -> (usize, usize) {
    specs.push(ParamSpec::weight("head/W".into(), 1, width, width, 1));
    specs.push(ParamSpec::bias("head/b".into(), 1, 1));
    (specs.len() - 2, specs.len() - 1)
}

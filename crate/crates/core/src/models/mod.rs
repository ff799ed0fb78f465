//! Model zoo: HMPNN with sum or concatenation aggregation, HGraphSage,
//! logistic regression and feed-forward networks.

mod forward;
mod increment;
mod input;
mod layout;

pub use input::{rescale_unit, signed_log1p, standardize, EntityInput, GraphInput, ModelInput};
pub use layout::{Layout, ParamSpec};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, glorot_uniform, Checkpoint, CheckpointMeta, GradCheckReport, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::graph::HeteroSchema;
use crate::tensor::Tensor;
use crate::util::derive_seed;

pub const DEFAULT_HIDDEN_DIM: usize = 8;
const INIT_STREAM: u64 = 0x1a17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logreg,
    Mlp,
    Hgraphsage,
    HmpnnSum,
    HmpnnCt,
}

impl ModelKind {
    pub fn is_graph(self) -> bool {
        matches!(self, ModelKind::Hgraphsage | ModelKind::HmpnnSum | ModelKind::HmpnnCt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logreg => "logreg",
            ModelKind::Mlp => "mlp",
            ModelKind::Hgraphsage => "hgraphsage",
            ModelKind::HmpnnSum => "hmpnn-sum",
            ModelKind::HmpnnCt => "hmpnn-ct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    /// HGraphSage only: append weighted txn in/out degrees to node features.
    #[serde(default)]
    pub extra_degree_features: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN_DIM
}

impl ModelConfig {
    pub fn new(kind: ModelKind, layers: usize) -> Self {
        ModelConfig {
            kind,
            layers,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            extra_degree_features: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_extra_degree_features(mut self) -> Self {
        self.extra_degree_features = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("layer count must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim must be at least 1".into()));
        }
        if self.kind == ModelKind::Logreg && self.layers != 1 {
            return Err(Error::InvalidArgument("logreg has exactly one layer; use mlp for more".into()));
        }
        if self.extra_degree_features && self.kind != ModelKind::Hgraphsage {
            return Err(Error::InvalidArgument(
                "extra degree features only apply to hgraphsage".into(),
            ));
        }
        Ok(())
    }

    /// `logreg`, `mlp`, `hgraphsage`, `hgraphsage-extra`, `hmpnn-sum` or `hmpnn-ct`.
    pub fn variant(&self) -> String {
        if self.extra_degree_features {
            format!("{}-extra", self.kind.as_str())
        } else {
            self.kind.as_str().to_string()
        }
    }
}

/// A model variant without layer count, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub kind: ModelKind,
    pub extra_degree_features: bool,
}

impl Variant {
    pub fn config(self, layers: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            kind: self.kind,
            layers,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            extra_degree_features: self.extra_degree_features,
            seed,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, extra) = match s {
            "logreg" => (ModelKind::Logreg, false),
            "mlp" => (ModelKind::Mlp, false),
            "hgraphsage" => (ModelKind::Hgraphsage, false),
            "hgraphsage-extra" => (ModelKind::Hgraphsage, true),
            "hmpnn-sum" => (ModelKind::HmpnnSum, false),
            "hmpnn-ct" => (ModelKind::HmpnnCt, false),
            other => return Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        };
        Ok(Variant {
            kind,
            extra_degree_features: extra,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.as_str())?;
        if self.extra_degree_features {
            f.write_str("-extra")?;
        }
        Ok(())
    }
}

/// Node feature widths a graph model sees for `schema` under `config`.
pub fn graph_input_dims(schema: &HeteroSchema, config: &ModelConfig) -> Result<Vec<usize>> {
    let mut dims: Vec<usize> = schema.node_types().iter().map(|t| t.dim).collect();
    if config.extra_degree_features {
        let extra = crate::features::extra_degree_layout(schema)?;
        for (d, cols) in dims.iter_mut().zip(extra) {
            *d += cols.len();
        }
    }
    Ok(dims)
}

fn layout_for(schema: &HeteroSchema, config: &ModelConfig, entity_dim: usize) -> Result<Layout> {
    config.validate()?;
    if config.kind.is_graph() {
        Layout::graph(schema, &graph_input_dims(schema, config)?, config)
    } else {
        Layout::entity(entity_dim, config)
    }
}

/// Number of scalar trainable parameters. `entity_dim` is the width of the
/// entity feature table and is ignored by graph models.
pub fn count_parameters(schema: &HeteroSchema, config: &ModelConfig, entity_dim: usize) -> Result<usize> {
    Ok(layout_for(schema, config, entity_dim)?.num_scalars())
}

/// Glorot-uniform weights and zero biases, drawn in layout order.
pub fn init_params(schema: &HeteroSchema, config: &ModelConfig, entity_dim: usize) -> Result<ParamStore> {
    Ok(layout_for(schema, config, entity_dim)?.init(config.seed))
}

/// One forward/backward evaluation.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    /// Scores for every node of the labeled type.
    pub scores: Vec<f64>,
    /// Gradients in parameter-store order.
    pub grads: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: ParamStore,
}

impl Model {
    /// Freshly initialised model shaped for `input`.
    pub fn new(input: &ModelInput, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::for_input(input, config)?;
        let params = layout.init(config.seed);
        Ok(Model {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Sets the output bias so that an uninformative model predicts
    /// `prevalence` (clamped away from 0 and 1).
    pub fn set_prior_bias(&mut self, prevalence: f64) {
        let p = prevalence.clamp(1e-6, 1.0 - 1e-6);
        let b = self.layout.head.1;
        self.params.get_mut(b).data_mut()[0] = (p / (1.0 - p)).ln();
    }

    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if params.names() != self.params.names()
            || params
                .tensors()
                .iter()
                .zip(self.params.tensors())
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidArgument("parameter layout does not match the model".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Scores for every node of the labeled type (or every entity row).
    pub fn scores(&self, input: &ModelInput) -> Result<Vec<f64>> {
        self.scores_with(&self.params, input)
    }

    pub fn scores_with(&self, params: &ParamStore, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = tape.bind(params, false);
        let s = forward::forward(&mut tape, &self.layout, &self.config, &vars, input)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Mean BCE over the rows `idx` against `targets`, with gradients.
    pub fn loss_and_grad(&self, input: &ModelInput, idx: &[usize], targets: &[f64]) -> Result<LossEval> {
        self.loss_and_grad_with(&self.params, input, idx, targets)
    }

    pub fn loss_and_grad_with(
        &self,
        params: &ParamStore,
        input: &ModelInput,
        idx: &[usize],
        targets: &[f64],
    ) -> Result<LossEval> {
        let mut tape = Tape::new();
        let vars = tape.bind(params, true);
        let s = forward::forward(&mut tape, &self.layout, &self.config, &vars, input)?;
        let picked = tape.select_rows(s, idx)?;
        let loss = tape.bce_loss(picked, targets)?;
        let mut grads = tape.backward(loss)?;
        Ok(LossEval {
            loss: tape.value(loss).item()?,
            scores: tape.value(s).data().to_vec(),
            grads: vars.iter().map(|&v| grads.take_or_zeros(v)).collect(),
        })
    }

    /// Central-difference check of the BCE gradient at the current
    /// parameters. The differenced function is the loss change from the
    /// current parameters, evaluated in increment form so that roundoff in
    /// the loss itself does not mask small deep-layer gradients.
    pub fn gradient_check(&self, input: &ModelInput, idx: &[usize], targets: &[f64], h: f64) -> Result<GradCheckReport> {
        let eval = self.loss_and_grad(input, idx, targets)?;
        let inc = increment::LossIncrement::new(&self.layout, &self.config, &self.params, input, idx, targets)?;
        finite_diff_check(&self.params, &eval.grads, h, |p| inc.change(p))
    }

    /// Loss only, for finite-difference checks.
    pub fn loss_with(&self, params: &ParamStore, input: &ModelInput, idx: &[usize], targets: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.bind(params, false);
        let s = forward::forward(&mut tape, &self.layout, &self.config, &vars, input)?;
        let picked = tape.select_rows(s, idx)?;
        let loss = tape.bce_loss(picked, targets)?;
        tape.value(loss).item()
    }

    /// Representations of every node type after each layer (graph models).
    /// Entry `[k][t]` is `H_t` after layer `k + 1`.
    pub fn hidden_states(&self, input: &ModelInput) -> Result<Vec<Vec<Tensor>>> {
        let ModelInput::Graph(g) = input else {
            return Err(Error::InvalidArgument("hidden states exist only for graph models".into()));
        };
        let mut tape = Tape::new();
        let vars = tape.bind(&self.params, false);
        let states = forward::graph_states(&mut tape, &self.layout, &self.config, &vars, g)?;
        Ok(states
            .iter()
            .map(|layer| layer.iter().map(|&v| tape.value(v).clone()).collect())
            .collect())
    }

    pub fn to_checkpoint(&self, schema_hash: &str) -> Checkpoint {
        Checkpoint::new(
            CheckpointMeta {
                model: self.config.variant(),
                layers: self.config.layers,
                seed: self.config.seed,
                schema_hash: schema_hash.to_string(),
                hidden_dim: self.config.hidden_dim,
                input_dim: self.layout.entity_dim(),
            },
            &self.params,
        )
    }

    /// Rebuilds a model from a checkpoint, validating names and shapes
    /// against the layout implied by `input`.
    pub fn from_checkpoint(input: &ModelInput, ck: &Checkpoint) -> Result<Self> {
        let variant: Variant = ck.meta.model.parse()?;
        let mut config = variant.config(ck.meta.layers, ck.meta.seed);
        if ck.meta.hidden_dim > 0 {
            config.hidden_dim = ck.meta.hidden_dim;
        }
        let mut model = Model::new(input, &config)?;
        model.params.assign_from(&ck.params)?;
        Ok(model)
    }
}

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, INIT_STREAM))
}

pub(crate) fn glorot(spec: &ParamSpec, rng: &mut ChaCha8Rng) -> Tensor {
    if spec.zero_init {
        Tensor::zeros(spec.rows, spec.cols)
    } else {
        glorot_uniform(spec.rows, spec.cols, spec.fan_in, spec.fan_out, rng)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extra_degree_features, AMOUNT};
use crate::graph::HeteroGraph;
use crate::models::{EntityInput, GraphInput, Model, ModelConfig, ModelInput};
use crate::tensor::Tensor;

use super::grid::{grid_search, refit, GridResult, HyperGrid};
use super::metrics::MetricsReport;
use super::split::SplitSpec;
use super::train::TrainLog;

/// Preprocessed model input: the graph for graph models (with weighted
/// degree columns when the config asks for them), the entity table otherwise.
pub fn build_input<'g>(
    graph: &'g HeteroGraph,
    labeled_type: usize,
    config: &ModelConfig,
    entity_features: Option<&Tensor>,
) -> Result<ModelInput<'g>> {
    config.validate()?;
    if config.kind.is_graph() {
        let extra = if config.extra_degree_features {
            Some(extra_degree_features(graph, AMOUNT)?)
        } else {
            None
        };
        Ok(ModelInput::Graph(GraphInput::prepare(graph, labeled_type, extra.as_deref())?))
    } else {
        let x = entity_features.ok_or_else(|| {
            Error::InvalidArgument(format!("{} needs the entity feature table", config.kind.as_str()))
        })?;
        if x.rows() != graph.num_nodes(labeled_type) {
            return Err(Error::InvalidArgument(format!(
                "feature table has {} rows for {} labeled nodes",
                x.rows(),
                graph.num_nodes(labeled_type)
            )));
        }
        Ok(ModelInput::Entity(EntityInput::prepare(x.clone())))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BestHypers {
    pub lr: f64,
    pub l2: f64,
    pub iterations: usize,
    pub mean_val_pr_auc: f64,
}

impl From<&GridResult> for BestHypers {
    fn from(g: &GridResult) -> Self {
        BestHypers {
            lr: g.lr,
            l2: g.l2,
            iterations: g.stop_iter,
            mean_val_pr_auc: g.mean_val_pr_auc,
        }
    }
}

pub struct VariantRun {
    pub grid: GridResult,
    pub model: Model,
    pub log: TrainLog,
    pub metrics: MetricsReport,
}

/// Tune on the training rows, refit, and score the test rows.
pub fn run_variant(
    config: &ModelConfig,
    input: &ModelInput,
    labels: &[u8],
    split: &SplitSpec,
    grid: &HyperGrid,
    seed: u64,
) -> Result<VariantRun> {
    let result = grid_search(config, input, labels, &split.train, grid, seed)?;
    let (model, log) = refit(config, input, labels, &split.train, grid, &result)?;
    let metrics = evaluate(&model, input, labels, &split.test, seed)?;
    Ok(VariantRun {
        grid: result,
        model,
        log,
        metrics,
    })
}

/// Metrics of `model` on the rows `idx`.
pub fn evaluate(model: &Model, input: &ModelInput, labels: &[u8], idx: &[usize], seed: u64) -> Result<MetricsReport> {
    let s = model.scores(input)?;
    let scores: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
    let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
    MetricsReport::compute(&model.config().variant(), model.config().layers, seed, &scores, &y)
}

//! Experiment protocol: stratified splits, metrics, the training loop,
//! cross-validated grid search and result tables.

mod grid;
mod metrics;
mod pipeline;
mod report;
mod split;
mod train;

pub use grid::{grid_search, refit, CvRow, GridResult, HyperGrid};
pub use metrics::{pr_auc, precision_at_recall, roc_auc, MetricsReport, RECALL_LEVELS};
pub use pipeline::{build_input, evaluate, run_variant, BestHypers, VariantRun};
pub use report::{
    cv_table_csv, metrics_csv, read_metrics_csv, render_table, write_cv_table, write_metrics_csv, CV_HEADER,
    METRICS_HEADER,
};
pub use split::{kfold_stratified, stratified_split, SplitSpec};
pub use train::{targets, train, EvalPoint, TrainConfig, TrainLog};

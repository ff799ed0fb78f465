//! Heterogeneous message-passing neural networks for node classification on
//! typed transaction graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: typed directed multigraph store with per-meta-step
//!   compressed adjacency and the on-disk container format.
//! * [`tensor`] and [`autodiff`]: dense matrices, a reverse-mode tape and
//!   the Adam optimizer.
//! * [`models`]: HMPNN (sum and concatenation aggregators), HGraphSage,
//!   logistic regression and plain feed-forward networks.
//! * [`features`]: neighbourhood summaries and metapath2vec embeddings
//!   assembled into the 94-column entity table.
//! * [`synth`]: deterministic labeled transaction-graph generator.
//! * [`harness`]: splits, metrics, training loop, cross-validated grid
//!   search and report rendering.

pub mod autodiff;
pub mod error;
pub mod features;
pub mod graph;
pub mod harness;
pub mod models;
pub mod synth;
pub mod tensor;
mod util;

pub use error::{Error, Result};
pub use graph::{HeteroGraph, HeteroSchema, LabelTable, MetaStep, NodeRef};
pub use tensor::Tensor;

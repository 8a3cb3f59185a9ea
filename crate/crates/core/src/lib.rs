//! Unsupervised node-level anomaly detection on attributed graphs.
//!
//! The pipeline runs community detection over the topology, smooths node
//! features within each community, and encodes the graph twice: a GCN over
//! the community-averaged features (with a residual on the raw features) and
//! a plain attribute encoder. Per node, the two embeddings attend to each
//! other, are projected down and back up, and feed two decoders: one
//! reconstructs the attributes, the other reconstructs the neighborhood as a
//! diagonal Gaussian scored with a Jensen-Shannon divergence. The averaged
//! 2x2 attention matrix sets the weights of the two per-node losses in the
//! final anomaly score.
//!
//! This crate is `no_std` (it needs `alloc`) and does no IO. File formats,
//! checkpoints and the command-line tool live in the `flexgad` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod community;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod scoring;
pub mod seed;
pub mod sparse;
pub mod synthetic;
pub mod train;

pub use community::{CommunityAlgorithm, CommunityAssignment};
pub use error::{Error, Result};
pub use graph::AttributedGraph;
pub use matrix::Matrix;
pub use model::{ForwardOutput, ModelConfig, ModelParams};
pub use scoring::{AnomalyReport, ExperimentSummary};
pub use sparse::SparseAdjacency;
pub use train::{TrainConfig, TrainHistory};

//! Hierarchical cluster-based graph auto-encoder.
//!
//! The encoder repeatedly partitions a graph into hard clusters, embeds each
//! cluster in isolation, and pools it to a single node. The decoder expands
//! the coarse graph back with soft assignments. Training minimizes a
//! per-cluster KL term plus layer-paired reconstruction losses, and the
//! learned embeddings feed a linear classifier for evaluation.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod folds;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod params;
pub mod synth;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::Settings;
pub use error::{Error, Result};
pub use graph::{Dataset, Graph, Task};
pub use matrix::Matrix;
pub use model::{Model, ModelSpec, Variant};

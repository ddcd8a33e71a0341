//! Robust neighbourhood graphs from conditional quantiles of graph similarities.
//!
//! A locally scaled affinity matrix is reconstructed by a quantile-Huber
//! autoencoder at a grid of quantile levels. How long each edge survives as
//! the quantile rises gives it an inclusion probability; random graphs drawn
//! from those probabilities yield robust per-sample scales, which in turn
//! define the final affinity. The graphs feed spectral clustering and a
//! greedy-walk label propagation on the Laplacian kernel.

pub mod affinity;
pub mod autoencoder;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod label_propagation;
pub mod linalg;
pub mod loss;
pub mod scale_estimation;
pub mod spectral;
pub mod stochastic_graph;

pub use affinity::{AffinityMatrix, DistanceMatrix, LocalScales};
pub use datasets::Dataset;
pub use error::{Error, Result};
pub use exec::Execution;
pub use scale_estimation::{build_robust_graph, ScaleEstimationConfig};

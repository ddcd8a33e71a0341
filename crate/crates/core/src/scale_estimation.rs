//! Robust local scales from random realizations of the stochastic graph.
//!
//! Pipeline: k-NN locally scaled affinity → quantile-grid reconstructions →
//! stochastic graph → R sampled neighbourhood graphs → per-realization mean
//! neighbour distance → element-wise median → locally scaled affinity with
//! the robust scales.

use serde::{Deserialize, Serialize};

use crate::affinity::{
    knn_scales, pairwise_distances, scaled_affinity, AffinityMatrix, DistanceMatrix, LocalScales, DEFAULT_K,
};
use crate::autoencoder::{default_hidden_dim, TrainConfig};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::stochastic_graph::{
    decay_profile, edge_probabilities, reconstruct_grid, sample_realization, validate_taus, Adjacency,
    EdgeDecayProfile, GridConfig, QuantileReconstruction, StochasticGraph, DEFAULT_DELTA, DEFAULT_EDGE_THRESHOLD,
    DEFAULT_TAUS,
};

pub const DEFAULT_REALIZATIONS: usize = 25;

const STAGE_TRAIN: u64 = 1;
const STAGE_REALIZE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimationConfig {
    pub k: usize,
    pub taus: Vec<f64>,
    pub delta: f64,
    pub realizations: usize,
    pub edge_threshold: f64,
    /// `None` picks [`default_hidden_dim`] for the dataset size.
    pub hidden_dim: Option<usize>,
    /// τ and seed are set per model by the pipeline.
    pub train: TrainConfig,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ScaleEstimationConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            taus: DEFAULT_TAUS.to_vec(),
            delta: DEFAULT_DELTA,
            realizations: DEFAULT_REALIZATIONS,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            hidden_dim: None,
            train: TrainConfig::default(),
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl ScaleEstimationConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k >= n {
            return Err(Error::Config(format!("k must be in 1..={}, got {}", n - 1, self.k)));
        }
        validate_taus(&self.taus)?;
        if self.realizations == 0 {
            return Err(Error::Config("at least one realization is required".into()));
        }
        if let Some(p) = self.hidden_dim {
            if p == 0 || p >= n {
                return Err(Error::Config(format!("hidden dimension must satisfy 1 <= p < {n}, got {p}")));
            }
        }
        self.train.validate()
    }

    fn grid_config(&self, n: usize) -> GridConfig {
        GridConfig {
            train: TrainConfig { seed: derive_seed(self.seed, STAGE_TRAIN, 0), ..self.train },
            hidden_dim: self.hidden_dim.unwrap_or_else(|| default_hidden_dim(n)),
            edge_threshold: self.edge_threshold,
            execution: self.execution,
        }
    }
}

/// `σ_i` = mean distance to the neighbours of `i` in `adj`; isolated vertices
/// keep their `fallback` scale.
pub fn realization_scales(adj: &Adjacency, dist: &DistanceMatrix, fallback: &LocalScales) -> Result<LocalScales> {
    let n = dist.len();
    if adj.n_nodes() != n || fallback.len() != n {
        return Err(Error::Input("adjacency, distances and fallback scales disagree in size".into()));
    }
    let sigma = (0..n)
        .map(|i| {
            let nb = adj.neighbors(i);
            let mean = nb.iter().map(|&j| dist.get(i, j)).sum::<f64>() / nb.len() as f64;
            if nb.is_empty() || mean <= 0.0 {
                fallback.as_slice()[i]
            } else {
                mean
            }
        })
        .collect();
    LocalScales::new(sigma)
}

/// Element-wise median; even counts average the two central values.
pub fn median_scales(runs: &[LocalScales]) -> Result<LocalScales> {
    let first = runs.first().ok_or_else(|| Error::Input("no realizations".into()))?;
    let n = first.len();
    let mut column = Vec::with_capacity(runs.len());
    let sigma = (0..n)
        .map(|i| {
            column.clear();
            column.extend(runs.iter().map(|r| r.as_slice()[i]));
            column.sort_by(f64::total_cmp);
            let m = column.len();
            if m % 2 == 1 {
                column[m / 2]
            } else {
                0.5 * (column[m / 2 - 1] + column[m / 2])
            }
        })
        .collect();
    LocalScales::new(sigma)
}

/// Every intermediate product of the scale-estimation pipeline.
#[derive(Debug, Clone)]
pub struct RobustGraph {
    pub distances: DistanceMatrix,
    pub initial_scales: LocalScales,
    pub initial_affinity: AffinityMatrix,
    pub reconstructions: Vec<QuantileReconstruction>,
    pub profile: EdgeDecayProfile,
    pub graph: StochasticGraph,
    pub scales: LocalScales,
    pub affinity: AffinityMatrix,
}

/// Median scales over `R` realizations of a given stochastic graph.
pub fn scales_from_graph(
    graph: &StochasticGraph,
    dist: &DistanceMatrix,
    fallback: &LocalScales,
    config: &ScaleEstimationConfig,
) -> Result<LocalScales> {
    let runs = map_indexed(config.execution, config.realizations, |r| {
        let adj = sample_realization(graph, derive_seed(config.seed, STAGE_REALIZE, r as u64));
        realization_scales(&adj, dist, fallback)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    median_scales(&runs)
}

pub fn build_robust_graph(data: &Dataset, config: &ScaleEstimationConfig) -> Result<RobustGraph> {
    let n = data.len();
    config.validate(n)?;
    let distances = pairwise_distances(data);
    let initial_scales = knn_scales(&distances, config.k)?;
    let initial_affinity = scaled_affinity(&distances, &initial_scales)?;
    let reconstructions = reconstruct_grid(&initial_affinity, &config.taus, &config.grid_config(n))?;
    let profile = decay_profile(&reconstructions)?;
    let graph = edge_probabilities(&reconstructions, config.delta)?;
    let scales = scales_from_graph(&graph, &distances, &initial_scales, config)?;
    let affinity = scaled_affinity(&distances, &scales)?;
    Ok(RobustGraph {
        distances,
        initial_scales,
        initial_affinity,
        reconstructions,
        profile,
        graph,
        scales,
        affinity,
    })
}

pub fn estimate_scales(data: &Dataset, config: &ScaleEstimationConfig) -> Result<LocalScales> {
    build_robust_graph(data, config).map(|g| g.scales)
}

pub fn robust_affinity(data: &Dataset, config: &ScaleEstimationConfig) -> Result<AffinityMatrix> {
    build_robust_graph(data, config).map(|g| g.affinity)
}

//! Single-example label propagation by a greedy walk on the graph Laplacian
//! kernel `K = L†`.
//!
//! Distances are the squared RKHS norms `S_ij = K_ii + K_jj - 2 K_ij`. For
//! each unlabeled query the walk hops to the nearest unvisited vertex under
//! `S`, keeping the running minimum of `S(visited, anchor)` for every labeled
//! anchor. It stops at a labeled vertex or after `maxwalk` hops; the query
//! takes the class of the anchor with the smallest running minimum.
//! Vertices of different connected components are never reachable.

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::{local_scaling_affinity, AffinityMatrix};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::linalg::symmetric_eigen;
use crate::scale_estimation::{robust_affinity, ScaleEstimationConfig};
use crate::spectral::{normalized_laplacian, GraphLaplacian};

pub const DEFAULT_MAXWALK: usize = 5;
/// Eigenvalues below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_TOL: f64 = 1e-9;

const STAGE_TRIAL: u64 = 31;

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianKernel {
    k: Array2<f64>,
    /// Block id per vertex; blocks are separated by the Laplacian null space.
    component: Vec<usize>,
}

impl LaplacianKernel {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn components(&self) -> &[usize] {
        &self.component
    }
}

/// Moore–Penrose pseudo-inverse of the Laplacian from its eigen-decomposition.
pub fn laplacian_kernel(l: &GraphLaplacian) -> Result<LaplacianKernel> {
    let (vals, vecs) = symmetric_eigen(l.matrix())?;
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max > 0.0) {
        return Err(Error::Numerical("Laplacian has no non-zero eigenvalue".into()));
    }
    let cutoff = PINV_RELATIVE_TOL * max;
    let n = l.len();
    let mut k = Array2::zeros((n, n));
    let mut null = Vec::new();
    for (idx, &lambda) in vals.iter().enumerate() {
        if lambda > cutoff {
            let u = vecs.column(idx);
            let inv = 1.0 / lambda;
            for i in 0..n {
                let ui = inv * u[i];
                for j in 0..n {
                    k[[i, j]] += ui * u[j];
                }
            }
        } else {
            null.push(idx);
        }
    }
    let sym = (&k + &k.t()) * 0.5;
    Ok(LaplacianKernel { k: sym, component: null_space_blocks(&vecs, &null) })
}

/// Null vectors are `D^{1/2}` times block indicators, so the normalized rows of
/// the null basis coincide within a block and are orthogonal across blocks.
fn null_space_blocks(vecs: &Array2<f64>, null: &[usize]) -> Vec<usize> {
    let n = vecs.nrows();
    if null.len() <= 1 {
        return vec![0; n];
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r: Vec<f64> = null.iter().map(|&c| vecs[[i, c]]).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.into_iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
        })
        .collect();
    let mut reps: Vec<usize> = Vec::new();
    let mut component = vec![0; n];
    for i in 0..n {
        let found = reps
            .iter()
            .position(|&r| rows[r].iter().zip(&rows[i]).map(|(a, b)| a * b).sum::<f64>() > 0.5);
        component[i] = found.unwrap_or_else(|| {
            reps.push(i);
            reps.len() - 1
        });
    }
    component
}

/// `S_ij = K_ii + K_jj - 2 K_ij`, with round-off negatives clamped to 0.
/// Vertices in different null-space blocks are infinitely far apart.
pub fn rkhs_distances(k: &LaplacianKernel) -> Array2<f64> {
    let (m, comp) = (&k.k, &k.component);
    let n = m.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else if comp[i] != comp[j] {
            f64::INFINITY
        } else {
            (m[[i, i]] + m[[j, j]] - 2.0 * m[[i, j]]).max(0.0)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationProblem {
    distances: Array2<f64>,
    classes: Vec<usize>,
    maxwalk: usize,
}

impl PropagationProblem {
    /// Samples `0..classes.len()` are the labeled anchors, sample `i` with class `classes[i]`.
    pub fn new(distances: Array2<f64>, classes: Vec<usize>, maxwalk: usize) -> Result<Self> {
        let n = distances.nrows();
        if distances.ncols() != n {
            return Err(Error::Input("distance matrix is not square".into()));
        }
        if classes.is_empty() || classes.len() >= n {
            return Err(Error::Input(format!(
                "need between 1 and {} labeled samples, got {}",
                n.saturating_sub(1),
                classes.len()
            )));
        }
        Ok(Self { distances, classes, maxwalk })
    }

    pub fn n_labeled(&self) -> usize {
        self.classes.len()
    }

    /// Greedy walk for one unlabeled query; returns the class and the visited path.
    pub fn walk(&self, query: usize) -> (usize, Vec<usize>) {
        let s = &self.distances;
        let c = self.n_labeled();
        let n = s.nrows();
        let mut gamma: Vec<f64> = (0..c).map(|i| s[[query, i]]).collect();
        let mut visited = vec![false; n];
        visited[query] = true;
        let mut path = vec![query];
        let mut ind = query;
        for _ in 0..self.maxwalk {
            for (i, g) in gamma.iter_mut().enumerate() {
                *g = g.min(s[[ind, i]]);
            }
            let mut next = None;
            for t in 0..n {
                if !visited[t] && s[[ind, t]].is_finite() && next.is_none_or(|b: usize| s[[ind, t]] < s[[ind, b]]) {
                    next = Some(t);
                }
            }
            let Some(t) = next else { break };
            if t < c {
                break;
            }
            visited[t] = true;
            path.push(t);
            ind = t;
        }
        let mut best = 0;
        for i in 1..c {
            if gamma[i] < gamma[best] {
                best = i;
            }
        }
        (self.classes[best], path)
    }
}

/// Labels for every unlabeled sample, in order `n_labeled..N`.
pub fn greedy_propagate(problem: &PropagationProblem, exec: Execution) -> Vec<usize> {
    let c = problem.n_labeled();
    let n = problem.distances.nrows();
    map_indexed(exec, n - c, |q| problem.walk(c + q).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMethod {
    /// Locally scaled affinity with robust (quantile-based) scales.
    Robust,
    /// Locally scaled affinity with k-NN scales.
    LocalScaling,
}

impl GraphMethod {
    pub fn affinity(self, data: &Dataset, config: &ScaleEstimationConfig) -> Result<AffinityMatrix> {
        match self {
            GraphMethod::Robust => robust_affinity(data, config),
            GraphMethod::LocalScaling => local_scaling_affinity(data, config.k),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphMethod::Robust => "proposed",
            GraphMethod::LocalScaling => "local-scaling-k7",
        }
    }
}

/// RKHS distance matrix for an affinity graph.
pub fn kernel_distances(w: &AffinityMatrix) -> Result<Array2<f64>> {
    let l = normalized_laplacian(w)?;
    Ok(rkhs_distances(&laplacian_kernel(&l)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationOutcome {
    /// Predicted class per sample, seeds included.
    pub predictions: Vec<usize>,
    /// Accuracy over the non-seed samples, when ground truth is known.
    pub accuracy: Option<f64>,
}

/// Propagates from `(sample index, class)` seeds over precomputed distances.
pub fn propagate_from_seeds(
    distances: &Array2<f64>,
    seeds: &[(usize, usize)],
    truth: Option<&[usize]>,
    maxwalk: usize,
    exec: Execution,
) -> Result<PropagationOutcome> {
    let n = distances.nrows();
    let mut is_seed = vec![false; n];
    for &(i, _) in seeds {
        if i >= n || is_seed[i] {
            return Err(Error::Input(format!("invalid or repeated seed index {i}")));
        }
        is_seed[i] = true;
    }
    // seeds first, then the rest in original order
    let order: Vec<usize> = seeds.iter().map(|&(i, _)| i).chain((0..n).filter(|&i| !is_seed[i])).collect();
    let permuted = Array2::from_shape_fn((n, n), |(a, b)| distances[[order[a], order[b]]]);
    let classes = seeds.iter().map(|&(_, c)| c).collect();
    let problem = PropagationProblem::new(permuted, classes, maxwalk)?;
    let labels = greedy_propagate(&problem, exec);

    let mut predictions = vec![0; n];
    for &(i, c) in seeds {
        predictions[i] = c;
    }
    for (k, &label) in labels.iter().enumerate() {
        predictions[order[seeds.len() + k]] = label;
    }
    let accuracy = truth.map(|t| {
        let scored: Vec<usize> = (0..n).filter(|&i| !is_seed[i]).collect();
        scored.iter().filter(|&&i| predictions[i] == t[i]).count() as f64 / scored.len() as f64
    });
    Ok(PropagationOutcome { predictions, accuracy })
}

/// One random labeled example per class, drawn with a seeded RNG.
pub fn draw_seeds(labels: &[usize], seed: u64) -> Vec<(usize, usize)> {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    by_class
        .into_iter()
        .map(|(c, members)| (*members.choose(&mut rng).expect("non-empty class"), c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub graph: ScaleEstimationConfig,
    pub method: GraphMethod,
    pub maxwalk: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { graph: ScaleEstimationConfig::default(), method: GraphMethod::Robust, maxwalk: DEFAULT_MAXWALK }
    }
}

/// Builds the graph for `data`, whose first `C` samples are the labeled
/// examples (classes taken from `data`'s labels), and propagates.
pub fn propagate(data: &Dataset, n_labeled: usize, config: &PropagationConfig) -> Result<PropagationOutcome> {
    let labels = data.labels().ok_or_else(|| Error::Input("propagation needs labels for the seeds".into()))?;
    let w = config.method.affinity(data, &config.graph)?;
    let s = kernel_distances(&w)?;
    let seeds: Vec<(usize, usize)> = (0..n_labeled).map(|i| (i, labels[i])).collect();
    propagate_from_seeds(&s, &seeds, Some(labels), config.maxwalk, config.graph.execution)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Repeated single-example trials over one graph; trial `t` draws its seeds
/// from `derive_seed(seed, _, t)`.
pub fn propagation_trials(
    data: &Dataset,
    config: &PropagationConfig,
    trials: usize,
    seed: u64,
) -> Result<TrialSummary> {
    let labels = data.labels().ok_or_else(|| Error::Input("trials need ground-truth labels".into()))?;
    let w = config.method.affinity(data, &config.graph)?;
    let s = kernel_distances(&w)?;
    let accuracies = map_indexed(config.graph.execution, trials, |t| {
        let seeds = draw_seeds(labels, derive_seed(seed, STAGE_TRIAL, t as u64));
        propagate_from_seeds(&s, &seeds, Some(labels), config.maxwalk, Execution::Sequential)
            .map(|o| o.accuracy.unwrap_or(0.0))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64;
    Ok(TrialSummary { accuracies, mean_accuracy })
}

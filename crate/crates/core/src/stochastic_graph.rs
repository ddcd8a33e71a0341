//! Quantile-grid reconstructions, edge decay and the stochastic graph.
//!
//! Each τ in the grid yields a reconstructed affinity that is thresholded into
//! an edge set. Edge sets are then nested (each intersected with the previous
//! one) so that every base edge has a well-defined highest surviving quantile
//! τ̂. An edge's inclusion probability is `max(δ, 1 - β_τ̂ / β_base)`.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affinity::AffinityMatrix;
use crate::autoencoder::{reconstruct, train, TrainConfig};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::loss::QuantileParams;

pub const DEFAULT_TAUS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_DELTA: f64 = 0.4;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.1;

/// Undirected edges `(i, j)` with `i < j`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileReconstruction {
    pub tau: f64,
    pub w_hat: Array2<f64>,
    pub edges: EdgeSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// τ is overwritten per grid point; everything else applies to every model.
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub edge_threshold: f64,
    pub execution: Execution,
}

pub fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::Config("quantile grid is empty".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::Config(format!("quantile {t} outside (0, 1)")));
    }
    if taus.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Config("quantile grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Trains one autoencoder per τ and thresholds each reconstruction.
///
/// Every grid point shares the run seed (same initial weights and batch
/// order), so reconstructions differ only through the quantile level.
pub fn reconstruct_grid(w: &AffinityMatrix, taus: &[f64], config: &GridConfig) -> Result<Vec<QuantileReconstruction>> {
    validate_taus(taus)?;
    check_threshold(config.edge_threshold)?;
    let results = map_indexed(config.execution, taus.len(), |k| {
        let tau = taus[k];
        let train_cfg = TrainConfig {
            quantile: QuantileParams::new(tau, config.train.quantile.kappa)?,
            ..config.train
        };
        let model = train(w, &train_cfg, config.hidden_dim)
            .map_err(|e| Error::TrainingAtQuantile { tau, source: Box::new(e) })?;
        let w_hat = reconstruct(&model, w)?;
        let edges = edge_set(&w_hat, config.edge_threshold);
        Ok(QuantileReconstruction { tau, w_hat, edges })
    });
    results.into_iter().collect()
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Config(format!("edge threshold must lie in (0, 1), got {t}")));
    }
    Ok(())
}

/// `{(i, j) : i < j, w_hat[i][j] >= threshold}`
pub fn edge_set(w_hat: &Array2<f64>, threshold: f64) -> EdgeSet {
    let n = w_hat.nrows();
    let mut edges = EdgeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if w_hat[[i, j]] >= threshold {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Edge sets with `edges(τ_k) ∩= edges(τ_{k-1})` applied along the grid.
pub fn nested_edge_sets(recs: &[QuantileReconstruction]) -> Vec<EdgeSet> {
    let mut out: Vec<EdgeSet> = Vec::with_capacity(recs.len());
    for rec in recs {
        let next = match out.last() {
            Some(prev) => rec.edges.intersection(prev).copied().collect(),
            None => rec.edges.clone(),
        };
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDecayProfile {
    pub taus: Vec<f64>,
    pub beta: Vec<usize>,
}

pub fn decay_profile(recs: &[QuantileReconstruction]) -> Result<EdgeDecayProfile> {
    check_recs(recs)?;
    Ok(EdgeDecayProfile {
        taus: recs.iter().map(|r| r.tau).collect(),
        beta: nested_edge_sets(recs).iter().map(|s| s.len()).collect(),
    })
}

fn check_recs(recs: &[QuantileReconstruction]) -> Result<()> {
    if recs.is_empty() {
        return Err(Error::Input("no reconstructions".into()));
    }
    validate_taus(&recs.iter().map(|r| r.tau).collect::<Vec<_>>())
}

impl EdgeDecayProfile {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "beta"])?;
        for (t, b) in self.taus.iter().zip(&self.beta) {
            w.write_record([t.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Base edges with inclusion probabilities in `[δ, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    prob: Vec<f64>,
    persistence: Vec<f64>,
    delta: f64,
}

impl StochasticGraph {
    /// Builds a graph from explicit probabilities (used for fixed or external graphs).
    pub fn from_probabilities(n: usize, edges: Vec<((usize, usize), f64)>, delta: f64) -> Result<Self> {
        let mut es = Vec::with_capacity(edges.len());
        let mut ps = Vec::with_capacity(edges.len());
        for ((i, j), p) in edges {
            if i >= j || j >= n {
                return Err(Error::Input(format!("invalid edge ({i}, {j}) for {n} nodes")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Input(format!("edge probability {p} outside [0, 1]")));
            }
            es.push((i, j));
            ps.push(p);
        }
        let persistence = vec![f64::NAN; es.len()];
        Ok(Self { n, edges: es, prob: ps, persistence, delta })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn base_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.prob.iter().copied())
    }

    /// Writes `i,j,probability,tau_hat` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "probability", "tau_hat"])?;
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            w.write_record([
                i.to_string(),
                j.to_string(),
                self.prob[k].to_string(),
                self.persistence[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Edge probabilities from persistence across the (nested) quantile grid.
/// The first grid point is the base quantile.
pub fn edge_probabilities(recs: &[QuantileReconstruction], delta: f64) -> Result<StochasticGraph> {
    check_recs(recs)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let n = recs[0].w_hat.nrows();
    let nested = nested_edge_sets(recs);
    let beta: Vec<usize> = nested.iter().map(|s| s.len()).collect();
    let base = beta[0];
    if base == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut edges = Vec::with_capacity(base);
    let mut prob = Vec::with_capacity(base);
    let mut persistence = Vec::with_capacity(base);
    for &e in &nested[0] {
        // nesting makes survival a prefix of the grid
        let last = nested.iter().take_while(|s| s.contains(&e)).count() - 1;
        edges.push(e);
        prob.push(delta.max(1.0 - beta[last] as f64 / base as f64));
        persistence.push(recs[last].tau);
    }
    Ok(StochasticGraph { n, edges, prob, persistence, delta })
}

/// Binary symmetric adjacency stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for (i, j) in edges {
            if i == j || i >= n || j >= n {
                return Err(Error::Input(format!("invalid edge ({i}, {j}) for {n} nodes")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn to_matrix(&self) -> Array2<u8> {
        let n = self.n_nodes();
        let mut m = Array2::zeros((n, n));
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                m[[i, j]] = 1;
            }
        }
        m
    }
}

/// Includes each base edge independently with its probability.
pub fn sample_realization(g: &StochasticGraph, seed: u64) -> Adjacency {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<(usize, usize)> = g
        .iter()
        .filter(|&(_, p)| rng.random::<f64>() < p)
        .map(|(e, _)| e)
        .collect();
    Adjacency::from_edges(g.n, kept).expect("base edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn rec(tau: f64, n: usize, edges: &[(usize, usize)]) -> QuantileReconstruction {
        QuantileReconstruction { tau, w_hat: Array2::zeros((n, n)), edges: edges.iter().copied().collect() }
    }

    #[test]
    fn thresholding() {
        let m = array![[0.0, 0.005, 0.002], [0.005, 0.0, 0.009], [0.002, 0.009, 0.0]];
        assert!(edge_set(&m, 0.01).is_empty());
        let m = array![[0.0, 0.5, 0.002], [0.5, 0.0, 0.009], [0.002, 0.009, 0.0]];
        assert_eq!(edge_set(&m, 0.01).into_iter().collect::<Vec<_>>(), vec![(0, 1)]);
        let full = Array2::from_elem((6, 6), 0.3);
        assert_eq!(edge_set(&full, 1e-9).len(), 15);
    }

    #[test]
    fn nesting_and_decay() {
        let same = vec![rec(0.1, 4, &[(0, 1), (2, 3)]), rec(0.5, 4, &[(0, 1), (2, 3)])];
        assert_eq!(decay_profile(&same).unwrap().beta, vec![2, 2]);

        // raw counts grow at the second quantile; nesting removes the extras
        let growing = vec![
            rec(0.1, 5, &[(0, 1), (1, 2), (2, 3)]),
            rec(0.2, 5, &[(0, 1), (1, 2), (3, 4), (0, 4)]),
            rec(0.3, 5, &[(1, 2)]),
        ];
        assert_eq!(decay_profile(&growing).unwrap().beta, vec![3, 2, 1]);

        let gap = vec![rec(0.1, 3, &[(0, 1)]), rec(0.2, 3, &[]), rec(0.3, 3, &[(0, 1)])];
        assert_eq!(decay_profile(&gap).unwrap().beta, vec![1, 0, 0]);
    }

    #[test]
    fn probabilities_follow_persistence() {
        // ten base edges, one survives to the last quantile: β = [10, 1]
        let base: Vec<(usize, usize)> = (0..10).map(|i| (i, i + 1)).collect();
        let recs = vec![rec(0.1, 11, &base), rec(0.9, 11, &[(4, 5)])];
        let g = edge_probabilities(&recs, 0.4).unwrap();
        for ((e, p), k) in g.iter().zip(0..) {
            if e == (4, 5) {
                assert!((p - 0.9).abs() < 1e-15, "edge {k}");
            } else {
                assert_eq!(p, 0.4);
            }
        }
    }

    #[test]
    fn no_decay_means_delta_everywhere() {
        let recs = vec![rec(0.1, 3, &[(0, 1), (1, 2)]), rec(0.5, 3, &[(0, 1), (1, 2)])];
        let g = edge_probabilities(&recs, 0.4).unwrap();
        assert!(g.probabilities().iter().all(|&p| p == 0.4));
    }

    #[test]
    fn empty_base_is_an_error() {
        let recs = vec![rec(0.1, 3, &[])];
        assert!(matches!(edge_probabilities(&recs, 0.4), Err(Error::EmptyGraph)));
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(validate_taus(&[0.5, 0.1]).is_err());
        assert!(validate_taus(&[0.1, 1.0]).is_err());
        assert!(validate_taus(&[0.5]).is_ok());
    }

    #[test]
    fn certain_edges_always_sampled() {
        let g = StochasticGraph::from_probabilities(4, vec![((0, 1), 1.0), ((1, 3), 1.0)], 0.4).unwrap();
        let a = sample_realization(&g, 3);
        assert_eq!(a.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 3)]);
        let m = a.to_matrix();
        assert_eq!(m, m.t());
        assert!(m.diag().iter().all(|&v| v == 0));
    }

    #[test]
    fn realizations_are_seeded() {
        let edges: Vec<_> = (0..30).map(|i| ((i, i + 1), 0.5)).collect();
        let g = StochasticGraph::from_probabilities(31, edges, 0.4).unwrap();
        assert_eq!(sample_realization(&g, 8), sample_realization(&g, 8));
        assert_ne!(sample_realization(&g, 8), sample_realization(&g, 9));
    }

    #[test]
    fn delta_edges_sampled_at_delta_rate() {
        let g = StochasticGraph::from_probabilities(2, vec![((0, 1), 0.4)], 0.4).unwrap();
        let hits = (0..10_000u64).filter(|&s| sample_realization(&g, s).edge_count() == 1).count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.4).abs() < 0.02, "frequency {freq}");
    }

    fn random_grid() -> impl Strategy<Value = Vec<QuantileReconstruction>> {
        let edge = (0usize..8, 0usize..8).prop_filter_map("self loop", |(a, b)| (a != b).then(|| (a.min(b), a.max(b))));
        prop::collection::vec(prop::collection::btree_set(edge, 1..20), 2..6).prop_map(|sets| {
            let k = sets.len();
            sets.into_iter()
                .enumerate()
                .map(|(i, edges)| QuantileReconstruction {
                    tau: (i + 1) as f64 / (k + 1) as f64,
                    w_hat: Array2::zeros((8, 8)),
                    edges,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn nesting_invariants(recs in random_grid(), delta in 0.05f64..0.95, seed in 0u64..100) {
            let nested = nested_edge_sets(&recs);
            for w in nested.windows(2) {
                prop_assert!(w[1].is_subset(&w[0]));
            }
            let g = edge_probabilities(&recs, delta).unwrap();
            let beta: Vec<usize> = nested.iter().map(|s| s.len()).collect();
            for (e, p) in g.iter() {
                prop_assert!(p >= delta && p < 1.0);
                let last = nested.iter().take_while(|s| s.contains(&e)).count() - 1;
                // persistence to a sparser level never lowers the probability
                for (f, q) in g.iter() {
                    let lf = nested.iter().take_while(|s| s.contains(&f)).count() - 1;
                    if lf < last && beta[last] < beta[lf] {
                        prop_assert!(p >= q);
                    }
                }
            }
            let a = sample_realization(&g, seed);
            let base: BTreeSet<_> = g.base_edges().iter().copied().collect();
            prop_assert!(a.edges().all(|e| base.contains(&e)));
        }
    }
}

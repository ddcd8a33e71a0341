//! Spectral clustering: symmetric normalized Laplacian, row-normalized
//! eigenvector embedding, k-means++ / Lloyd, and NMI scoring.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::linalg::symmetric_eigen;

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_KMEANS_ITER: usize = 300;

const STAGE_KMEANS: u64 = 21;

/// `L = D^{-1/2} (D - W) D^{-1/2}`
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian(Array2<f64>);

impl GraphLaplacian {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub n_clusters: usize,
    pub nmi: Option<f64>,
}

pub fn normalized_laplacian(w: &AffinityMatrix) -> Result<GraphLaplacian> {
    let w = w.matrix();
    let n = w.nrows();
    let degree: Vec<f64> = w.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::DegenerateGraph(i));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let dw = if i == j { degree[i] - w[[i, i]] } else { -w[[i, j]] };
            let v = inv_sqrt[i] * dw * inv_sqrt[j];
            l[[i, j]] = v;
            l[[j, i]] = v;
        }
    }
    Ok(GraphLaplacian(l))
}

/// Eigenvalues and eigenvectors (columns) for the `c` smallest eigenvalues.
pub fn smallest_eigenpairs(l: &GraphLaplacian, c: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = l.len();
    if c == 0 || c > n {
        return Err(Error::Config(format!("need 1 <= c <= {n}, got {c}")));
    }
    let (vals, vecs) = symmetric_eigen(l.matrix())?;
    Ok((vals[..c].to_vec(), vecs.slice(ndarray::s![.., ..c]).to_owned()))
}

/// Rows of the bottom-`c` eigenvectors, each scaled to unit length.
pub fn spectral_embed(l: &GraphLaplacian, c: usize) -> Result<Array2<f64>> {
    let (_, mut u) = smallest_eigenpairs(l, c)?;
    for mut row in u.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(u)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: ArrayView1<'_, f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_init(points: &Array2<f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((c, points.ncols()));
    centers.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centers.row(0))).collect();
    for k in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(k).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.row(k)));
        }
    }
    centers
}

fn lloyd(points: &Array2<f64>, c: usize, seed: u64) -> (Vec<usize>, f64) {
    let (n, dim) = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, c, &mut rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_KMEANS_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.rows().into_iter().enumerate() {
            let (k, d) = nearest(p, &centers);
            dists[i] = d;
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        let mut counts = vec![0usize; c];
        for &k in &assign {
            counts[k] += 1;
        }
        // empty clusters take the point farthest from its centre
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[assign[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assign[i]] -= 1;
                    assign[i] = k;
                    counts[k] = 1;
                    dists[i] = 0.0;
                    changed = true;
                }
            }
        }
        let mut sums = Array2::<f64>::zeros((c, dim));
        for (i, p) in points.rows().into_iter().enumerate() {
            let mut row = sums.row_mut(assign[i]);
            row += &p;
        }
        for k in 0..c {
            if counts[k] > 0 {
                let mean = sums.row(k).mapv(|v| v / counts[k] as f64);
                centers.row_mut(k).assign(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .rows()
        .into_iter()
        .zip(&assign)
        .map(|(p, &k)| sq_dist(p, centers.row(k)))
        .sum();
    (assign, inertia)
}

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &Array2<f64>, c: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    let n = points.nrows();
    if c == 0 || c > n {
        return Err(Error::Config(format!("need 1 <= c <= {n} clusters, got {c}")));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let (assign, inertia) = lloyd(points, c, derive_seed(seed, STAGE_KMEANS, r as u64));
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((assign, inertia));
        }
    }
    let (assignments, _) = best.expect("at least one restart");
    Ok(ClusteringResult { assignments, n_clusters: c, nmi: None })
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `2 I(Y; Ŷ) / (H(Y) + H(Ŷ))` with natural logarithms. Two constant
/// labelings score 1.
pub fn nmi(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Input(format!("label lengths differ: {} vs {}", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::Input("empty labelings".into()));
    }
    let n = y.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut a: BTreeMap<usize, usize> = BTreeMap::new();
    let mut b: BTreeMap<usize, usize> = BTreeMap::new();
    for (&u, &v) in y.iter().zip(y_hat) {
        *joint.entry((u, v)).or_default() += 1;
        *a.entry(u).or_default() += 1;
        *b.entry(v).or_default() += 1;
    }
    let ha = entropy(a.values().copied(), n);
    let hb = entropy(b.values().copied(), n);
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(u, v), &c)| {
            let pij = c as f64 / n;
            pij * (pij * n * n / (a[&u] as f64 * b[&v] as f64)).ln()
        })
        .sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

pub fn spectral_cluster(w: &AffinityMatrix, c: usize, seed: u64) -> Result<ClusteringResult> {
    spectral_cluster_with(w, c, seed, DEFAULT_RESTARTS)
}

pub fn spectral_cluster_with(w: &AffinityMatrix, c: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    let l = normalized_laplacian(w)?;
    let embedding = spectral_embed(&l, c)?;
    kmeans(&embedding, c, seed, restarts)
}

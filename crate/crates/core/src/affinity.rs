//! Pairwise distances, k-NN local scales and locally scaled affinities
//! `w_ij = exp(-d_ij² / (σ_i σ_j))`.

use ndarray::Array2;

use crate::datasets::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 7;

/// Symmetric, non-negative, zero-diagonal N×N matrix of Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(Array2<f64>);

impl DistanceMatrix {
    pub fn new(d: Array2<f64>) -> Result<Self> {
        let n = square_dim(&d)?;
        for i in 0..n {
            if d[[i, i]] != 0.0 {
                return Err(Error::Input(format!("distance diagonal entry {i} is non-zero")));
            }
            for j in 0..n {
                let v = d[[i, j]];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Input(format!("invalid distance {v} at ({i}, {j})")));
                }
                if v != d[[j, i]] {
                    return Err(Error::Input(format!("distance matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self(d))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    /// Smallest strictly positive distance from `i`, if any.
    pub fn min_positive(&self, i: usize) -> Option<f64> {
        self.0.row(i).iter().copied().filter(|&v| v > 0.0).min_by(f64::total_cmp)
    }

    pub fn max_in_row(&self, i: usize) -> f64 {
        self.0.row(i).iter().copied().fold(0.0, f64::max)
    }
}

/// Per-sample bandwidths, all strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScales(Vec<f64>);

impl LocalScales {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = sigma.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Input(format!("local scale {i} must be positive and finite, got {v}")));
        }
        Ok(Self(sigma))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Symmetric N×N similarity matrix with entries in [0, 1] and zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(Array2<f64>);

impl AffinityMatrix {
    /// Validates shape and range, symmetrizes up to rounding and zeroes the diagonal.
    pub fn new(w: Array2<f64>) -> Result<Self> {
        let n = square_dim(&w)?;
        if n < 2 {
            return Err(Error::Input("affinity matrix must be at least 2x2".into()));
        }
        let tol = 1e-9;
        for ((i, j), &v) in w.indexed_iter() {
            if !(v.is_finite() && (-tol..=1.0 + tol).contains(&v)) {
                return Err(Error::Input(format!("affinity {v} at ({i}, {j}) outside [0, 1]")));
            }
            if (v - w[[j, i]]).abs() > tol {
                return Err(Error::Input(format!("affinity matrix not symmetric at ({i}, {j})")));
            }
        }
        let mut sym = Array2::zeros((n, n));
        for i in 0..n {
            for j in i + 1..n {
                let v = (0.5 * (w[[i, j]] + w[[j, i]])).clamp(0.0, 1.0);
                sym[[i, j]] = v;
                sym[[j, i]] = v;
            }
        }
        Ok(Self(sym))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Multiplies every entry by `c`, clamping to 1.
    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.mapv(|v| (v * c).min(1.0)))
    }
}

fn square_dim(m: &Array2<f64>) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Input(format!("matrix is not square: {r} x {c}")));
    }
    Ok(r)
}

pub fn pairwise_distances(data: &Dataset) -> DistanceMatrix {
    let x = data.samples();
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let xi = x.row(i);
        for j in i + 1..n {
            let v = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix(d)
}

/// `σ_i` = distance from sample `i` to its k-th nearest neighbour (self excluded).
///
/// A zero scale (at least `k` duplicates of sample `i`) falls back to the
/// smallest positive distance in the row.
pub fn knn_scales(dist: &DistanceMatrix, k: usize) -> Result<LocalScales> {
    let n = dist.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k must be in 1..={}, got {k}", n.saturating_sub(1))));
    }
    let mut row = Vec::with_capacity(n - 1);
    let mut sigma = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| dist.get(i, j)));
        let (_, kth, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
        let mut s = *kth;
        if s <= 0.0 {
            s = dist
                .min_positive(i)
                .ok_or_else(|| Error::Input(format!("sample {i} coincides with every other sample")))?;
        }
        sigma.push(s);
    }
    LocalScales::new(sigma)
}

pub fn scaled_affinity(dist: &DistanceMatrix, scales: &LocalScales) -> Result<AffinityMatrix> {
    let n = dist.len();
    if scales.len() != n {
        return Err(Error::Input(format!("{} scales for {n} samples", scales.len())));
    }
    let s = scales.as_slice();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = dist.get(i, j);
            let v = (-(d * d) / (s[i] * s[j])).exp();
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    Ok(AffinityMatrix(w))
}

/// Local-scaling affinity with k-NN scales; the usual self-tuning baseline.
pub fn local_scaling_affinity(data: &Dataset, k: usize) -> Result<AffinityMatrix> {
    let dist = pairwise_distances(data);
    let scales = knn_scales(&dist, k)?;
    scaled_affinity(&dist, &scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn data(rows: Array2<f64>) -> Dataset {
        Dataset::new(rows, None).unwrap()
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let d = pairwise_distances(&data(array![[1.0, 2.0], [1.0, 2.0]]));
        assert_eq!(d.matrix(), &array![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn three_four_five() {
        let d = pairwise_distances(&data(array![[0.0, 0.0], [3.0, 4.0]]));
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
    }

    #[test]
    fn non_finite_features_rejected() {
        assert!(Dataset::new(array![[0.0], [f64::NAN]], None).is_err());
    }

    #[test]
    fn collinear_knn_scales() {
        let d = pairwise_distances(&data(array![[0.0], [1.0], [3.0]]));
        assert_eq!(knn_scales(&d, 1).unwrap().as_slice(), &[1.0, 1.0, 2.0]);
        // k = N-1 is the farthest neighbour
        assert_eq!(knn_scales(&d, 2).unwrap().as_slice(), &[3.0, 2.0, 3.0]);
    }

    #[test]
    fn duplicate_fallback() {
        let d = pairwise_distances(&data(array![[0.0], [0.0], [2.0]]));
        let s = knn_scales(&d, 1).unwrap();
        assert_eq!(s.as_slice(), &[2.0, 2.0, 2.0]);
        let all_same = pairwise_distances(&data(array![[1.0], [1.0], [1.0]]));
        assert!(knn_scales(&all_same, 1).is_err());
    }

    #[test]
    fn k_out_of_range() {
        let d = pairwise_distances(&data(array![[0.0], [1.0], [3.0]]));
        assert!(knn_scales(&d, 0).is_err());
        assert!(knn_scales(&d, 3).is_err());
    }

    #[test]
    fn affinity_special_values() {
        let d = DistanceMatrix::new(array![[0.0, 0.0, 2.0], [0.0, 0.0, 1.0], [2.0, 1.0, 0.0]]).unwrap();
        let s = LocalScales::new(vec![1.0, 0.5, 4.0]).unwrap();
        let w = scaled_affinity(&d, &s).unwrap();
        assert_eq!(w.matrix()[[0, 1]], 1.0);
        // d² = 4 = σ_0 σ_2
        assert!((w.matrix()[[0, 2]] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w.matrix()[[0, 2]] - 0.36787944117144233).abs() < 1e-15);
        assert_eq!(w.matrix()[[2, 2]], 0.0);
    }

    #[test]
    fn doubling_scales_takes_fourth_root() {
        let x = array![[0.0, 0.0], [1.0, 0.5], [2.0, -1.0], [0.3, 0.9]];
        let d = pairwise_distances(&data(x));
        let s = knn_scales(&d, 2).unwrap();
        let s2 = LocalScales::new(s.as_slice().iter().map(|v| 2.0 * v).collect()).unwrap();
        let w = scaled_affinity(&d, &s).unwrap();
        let w2 = scaled_affinity(&d, &s2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((w2.matrix()[[i, j]] - w.matrix()[[i, j]].powf(0.25)).abs() < 1e-12);
                }
            }
        }
    }

    fn points() -> impl Strategy<Value = Array2<f64>> {
        (3usize..12).prop_flat_map(|n| {
            prop::collection::vec(-10.0f64..10.0, n * 2)
                .prop_map(move |v| Array2::from_shape_vec((n, 2), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn affinity_symmetric_in_unit_interval(x in points(), k in 1usize..3) {
            let d = pairwise_distances(&data(x));
            prop_assume!((0..d.len()).all(|i| d.min_positive(i).is_some()));
            let w = scaled_affinity(&d, &knn_scales(&d, k).unwrap()).unwrap();
            let m = w.matrix();
            for ((i, j), &v) in m.indexed_iter() {
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!((v - m[[j, i]]).abs() <= 1e-12);
            }
        }

        #[test]
        fn triangle_inequality(x in points()) {
            let d = pairwise_distances(&data(x));
            let n = d.len();
            for i in 0..n { for j in 0..n { for m in 0..n {
                prop_assert!(d.get(i, j) <= d.get(i, m) + d.get(m, j) + 1e-12);
            }}}
        }

        #[test]
        fn affinity_decreases_with_distance(a in 0.0f64..3.0, b in 0.0f64..3.0, s1 in 0.5f64..3.0, s2 in 0.5f64..3.0) {
            prop_assume!((a - b).abs() > 1e-6);
            let scales = LocalScales::new(vec![s1, s2]).unwrap();
            let wa = scaled_affinity(&DistanceMatrix::new(array![[0.0, a], [a, 0.0]]).unwrap(), &scales).unwrap();
            let wb = scaled_affinity(&DistanceMatrix::new(array![[0.0, b], [b, 0.0]]).unwrap(), &scales).unwrap();
            let (va, vb) = (wa.matrix()[[0, 1]], wb.matrix()[[0, 1]]);
            if a < b { prop_assert!(va > vb) } else { prop_assert!(va < vb) }
        }

        #[test]
        fn knn_scales_permutation_equivariant(x in points(), seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = x.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let base = data(x);
            let d = pairwise_distances(&base);
            prop_assume!((0..n).all(|i| d.min_positive(i).is_some()));
            let s = knn_scales(&d, 2).unwrap();
            let sp = knn_scales(&pairwise_distances(&base.select(&perm)), 2).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                prop_assert_eq!(sp.as_slice()[i], s.as_slice()[p]);
            }
        }
    }
}

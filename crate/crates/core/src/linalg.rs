//! Dense symmetric eigen-decomposition (backed by nalgebra).

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; eigenvectors are
/// the columns of the returned matrix.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Input(format!("matrix is not square: {} x {}", n, m.ncols())));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::try_new(dm, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("symmetric eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, c)| eig.eigenvectors[(i, order[c])]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonalizes() {
        let m = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]];
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let recon = vecs.dot(&Array2::from_diag(&ndarray::Array1::from(vals))).dot(&vecs.t());
        for (a, b) in recon.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let gram = vecs.t().dot(&vecs);
        for ((i, j), v) in gram.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
}

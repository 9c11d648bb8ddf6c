//! Thin wrapper around the dense symmetric eigensolver.

use faer::Side;
use faer_ext::IntoFaer;
use ndarray::{Array1, Array2};

use crate::error::{Result, VibError};

/// Eigendecomposition of a real symmetric matrix. Returns eigenvalues in
/// ascending order and the matching eigenvectors as columns.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(VibError::invalid("eigensolver requires a square matrix"));
    }
    let view = matrix.view().into_faer();
    let evd = view
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| VibError::numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| s[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = u[(row, i)];
        }
    }
    Ok((values, vectors))
}

/// Eigenvalues only, ascending.
pub fn symmetric_eigenvalues(matrix: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(symmetric_eigen(matrix)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // residual check
        for k in 0..2 {
            let v = vecs.column(k);
            let mv = m.dot(&v);
            for i in 0..2 {
                assert!((mv[i] - vals[k] * v[i]).abs() < 1e-12);
            }
        }
    }
}

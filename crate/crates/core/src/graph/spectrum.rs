use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    let (r, c) = m.dims2()?;
    if r != c {
        return Err(Error::shape("symmetric_eigenvalues", &[r, r], m.shape()));
    }
    let mat = DMatrix::from_row_slice(r, c, m.data());
    let mut ev: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Ascending eigenvalues of `L = D − A`.
pub fn laplacian_spectrum(g: &Graph) -> Vec<f64> {
    symmetric_eigenvalues(&g.laplacian()).expect("laplacian is square")
}

/// Number of eigenvalues of `L` with `|λ| ≤ tol`.
pub fn zero_eigenvalue_multiplicity(g: &Graph, tol: f64) -> usize {
    laplacian_spectrum(g).iter().filter(|l| l.abs() <= tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_spectrum() {
        let ev = laplacian_spectrum(&Graph::complete(3));
        for (a, b) in ev.iter().zip([0.0, 3.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_multiplicity_counts_components() {
        let g = Graph::new(6, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        assert_eq!(zero_eigenvalue_multiplicity(&g, 1e-9), 3);
    }
}

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one make a covariance
/// matrix singular for our purposes.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric inverse square root of a covariance matrix.
///
/// Fails with [`Error::SingularDesign`] when the condition number exceeds
/// `1 / EIGEN_FLOOR`; the matrix is never pseudo-inverted.
pub fn inverse_sqrt(sigma: &DMatrix<f64>, set: &[usize]) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
            (lo.min(l), hi.max(l))
        });
    if !(hi > 0.0) || lo < EIGEN_FLOOR * hi {
        return Err(Error::SingularDesign {
            set: set.to_vec(),
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let q = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(m, m, |i, k| q[(i, k)] / eig.eigenvalues[k].sqrt());
    let w = &scaled * q.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

/// `trace(A B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    let mut t = 0.0;
    for i in 0..m {
        for k in 0..m {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

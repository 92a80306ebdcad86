//! Positive-semidefinite block operations in scaled symmetric-vector form.
//!
//! The vector layout stacks the lower triangle column by column with
//! off-diagonal entries scaled by sqrt(2), so the vector dot product equals
//! the trace inner product of the corresponding symmetric matrices.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance and iteration cap for the symmetric eigendecomposition.
/// Blocks are small (n <= 10 in practice), so this is generous.
const EIG_EPS: f64 = 1e-12;
const EIG_MAX_ITER: usize = 100;

/// Vector length of the scaled symmetric-vector form for an `n x n` block.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Packs a symmetric matrix into scaled-vector form.
pub fn svec(mat: &DMatrix<f64>) -> DVector<f64> {
    let n = mat.nrows();
    debug_assert_eq!(n, mat.ncols());
    let mut out = DVector::zeros(svec_len(n));
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            out[k] = if i == j {
                mat[(i, j)]
            } else {
                std::f64::consts::SQRT_2 * mat[(i, j)]
            };
            k += 1;
        }
    }
    out
}

/// Unpacks scaled-vector form into a dense symmetric matrix.
pub fn smat(v: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    if v.len() != svec_len(n) {
        return Err(Error::dim(svec_len(n), v.len(), "smat input"));
    }
    let mut out = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            let val = if i == j {
                v[k]
            } else {
                v[k] / std::f64::consts::SQRT_2
            };
            out[(i, j)] = val;
            out[(j, i)] = val;
            k += 1;
        }
    }
    Ok(out)
}

fn eigen(n: usize, mat: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(mat, EIG_EPS, EIG_MAX_ITER).ok_or(Error::EigenFailure { n })
}

pub(super) fn project_psd(n: usize, y: &DVectorView<f64>) -> Result<DVector<f64>> {
    let mat = smat(&y.clone_owned(), n)?;
    let eig = eigen(n, mat)?;
    let clipped = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0));
    let q = &eig.eigenvectors;
    let proj = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    Ok(svec(&proj))
}

/// The Löwner divided-difference operator of the eigenvalue clipping map,
/// materialized as a symmetric matrix acting on scaled-vector coordinates.
pub(super) fn jacobian_psd(n: usize, y: &DVectorView<f64>) -> Result<DMatrix<f64>> {
    let mat = smat(&y.clone_owned(), n)?;
    let eig = eigen(n, mat)?;
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;

    // Divided differences of max(., 0); equal eigenvalues take the one-sided
    // derivative with the tie at zero resolved to 0.
    let omega = DMatrix::from_fn(n, n, |i, j| {
        let (li, lj) = (lam[i], lam[j]);
        if li == lj {
            if li > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (li.max(0.0) - lj.max(0.0)) / (li - lj)
        }
    });

    let d = svec_len(n);
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut basis = DVector::zeros(d);
        basis[k] = 1.0;
        let h = smat(&basis, n)?;
        let transformed = q.transpose() * h * q;
        let scaled = transformed.zip_map(&omega, |a, w| a * w);
        let col = svec(&(q * scaled * q.transpose()));
        out.column_mut(k).copy_from(&col);
    }
    // Symmetrize away rounding noise; the operator is symmetric analytically.
    let sym = (&out + out.transpose()) * 0.5;
    Ok(sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn svec_preserves_inner_product() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, -1.0, 0.3, 0.5, 0.3, 4.0]);
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 3.0, -2.0, 0.0, -2.0, 1.5]);
        let trace_ip = (a.clone() * b.clone()).trace();
        assert_relative_eq!(svec(&a).dot(&svec(&b)), trace_ip, epsilon = 1e-12);
    }

    #[test]
    fn svec_smat_round_trip() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -0.7, -0.7, 2.0]);
        let back = smat(&svec(&a), 2).unwrap();
        assert_relative_eq!((a - back).norm(), 0.0, epsilon = 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn prop_svec_smat_round_trip(entries in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let v = DVector::from_column_slice(&entries);
            let back = svec(&smat(&v, 3).unwrap());
            proptest::prop_assert!((back - &v).norm() <= 1e-12 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn projection_residual_is_small() {
        // The recomposed eigendecomposition must reproduce the input to the
        // advertised tolerance.
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, -1.0, 0.3, 0.5, 0.3, 4.0]);
        let eig = eigen(3, a.clone()).unwrap();
        let recomposed = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues)
            * eig.eigenvectors.transpose();
        assert!((a - recomposed).norm() <= 1e-12 * 10.0);
    }
}

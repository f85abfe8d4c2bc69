//! Small in-place dense kernels used on the hot path of the IPM.
//!
//! Storage and products come from `nalgebra`; the Cholesky factorization is
//! done in place so per-iteration workspaces never reallocate.

use nalgebra::{DMatrix, DVector, Dyn, Matrix, StorageMut};

/// Overwrites the leading `dim`×`dim` block of `m` with its lower Cholesky
/// factor and zeroes the strict upper triangle of that block.
///
/// Returns the index of the first non-positive pivot on failure.
pub(crate) fn cholesky_in_place<S>(m: &mut Matrix<f64, Dyn, Dyn, S>) -> Result<(), usize>
where
    S: StorageMut<f64, Dyn, Dyn>,
{
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= m[(j, k)] * m[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        m[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = s / d;
        }
        for i in 0..j {
            m[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` in place given a lower Cholesky factor.
pub(crate) fn cholesky_solve_in_place(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    l.solve_lower_triangular_mut(b);
    l.tr_solve_lower_triangular_mut(b);
}

/// Infinity norm of a vector; zero for an empty vector.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

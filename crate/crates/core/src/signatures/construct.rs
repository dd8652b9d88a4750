//! Recursive signature families whose row-product matrices have full column
//! rank, one for known noise covariance and one for unknown white noise.

use nalgebra::DMatrix;

use super::{RowProductKind, SignatureMatrix};
use crate::error::{Error, Result};

/// `m x n` matrix with `rank(row_product(full)) = n`, for `n <= m(m+1)/2`.
///
/// Grows from `[1]`: each step prepends an all-ones row above the current
/// matrix and appends the `k = m + 1` columns of an identity, then columns
/// are normalised and the first `n` kept.
pub fn construct_known_noise(m: usize, n: usize) -> Result<SignatureMatrix> {
    let bound = RowProductKind::Full.row_count(m);
    if m == 0 || n == 0 || n > bound {
        return Err(Error::BoundExceeded { m, n, bound });
    }
    let mut raw = DMatrix::from_element(1, 1, 1.0);
    for rows in 1..m {
        let cols = raw.ncols();
        let k = rows + 1;
        let mut next = DMatrix::zeros(rows + 1, cols + k);
        next.view_mut((0, 0), (1, cols)).fill(1.0);
        next.view_mut((1, 0), (rows, cols)).copy_from(&raw);
        next.view_mut((0, cols), (k, k)).fill_with_identity();
        raw = next;
    }
    debug_assert_eq!(raw.ncols(), bound);
    SignatureMatrix::new(raw)?.normalize_columns()?.truncate_users(n)
}

/// `m x n` matrix with `rank(row_product(offdiag)) = n`, for
/// `n <= m(m-1)/2`.
///
/// Grows from `[1, 1]^T`: each step prepends an all-zero row above the
/// current matrix and appends `k = m` columns holding a one in the new top
/// row plus an identity block below it. Every column ends up with exactly two
/// nonzero entries, which is why all singular values of the normalised
/// off-diagonal row product equal 1/2.
pub fn construct_unknown_noise(m: usize, n: usize) -> Result<SignatureMatrix> {
    let bound = RowProductKind::OffDiag.row_count(m);
    if m < 2 || n == 0 || n > bound {
        return Err(Error::BoundExceeded { m, n, bound });
    }
    let mut raw = DMatrix::from_element(2, 1, 1.0);
    for rows in 2..m {
        let cols = raw.ncols();
        let k = rows;
        let mut next = DMatrix::zeros(rows + 1, cols + k);
        next.view_mut((1, 0), (rows, cols)).copy_from(&raw);
        next.view_mut((0, cols), (1, k)).fill(1.0);
        next.view_mut((1, cols), (k, k)).fill_with_identity();
        raw = next;
    }
    debug_assert_eq!(raw.ncols(), bound);
    SignatureMatrix::new(raw)?.normalize_columns()?.truncate_users(n)
}

//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Number of singular values above the relative threshold.
pub fn rank_of(sv: &[f64]) -> usize {
    let Some(&max) = sv.first() else { return 0 };
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * max).count()
}

pub fn rank(a: &DMatrix<f64>) -> usize {
    rank_of(&singular_values(a))
}

/// Least-squares solver for a fixed system matrix.
///
/// The pseudo-inverse is formed once from an SVD, so repeated solves against
/// new right-hand sides cost one matrix-vector product. On rank deficiency
/// the minimum-norm solution is returned and [`LeastSquares::rank`] reports
/// the deficiency.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pinv: DMatrix<f64>,
    rank: usize,
    cols: usize,
}

impl LeastSquares {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let cols = a.ncols();
        if a.is_empty() {
            return Self { pinv: DMatrix::zeros(cols, a.nrows()), rank: 0, cols };
        }
        let svd = a.clone().svd(true, true);
        let max = svd.singular_values.max();
        let eps = RANK_RTOL * max;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        let pinv = if rank == 0 {
            DMatrix::zeros(cols, a.nrows())
        } else {
            // only fails when U or V were not computed
            svd.pseudo_inverse(eps).expect("U and V requested")
        };
        Self { pinv, rank, cols }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_column_rank(&self) -> bool {
        self.rank == self.cols
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.pinv * b
    }
}

/// Inverse and log-determinant of a symmetric positive-definite matrix.
/// Returns `None` when the Cholesky factorisation fails.
pub fn spd_inverse_logdet(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = Cholesky::<f64, Dyn>::new(m.clone())?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    let inv = chol.inverse();
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((inv, logdet))
}

/// Symmetric part `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(rank(&DMatrix::identity(3, 3)), 3);
        assert_eq!(rank(&DMatrix::zeros(3, 2)), 0);
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(rank(&a), 1);
    }

    #[test]
    fn least_squares_min_norm_on_deficiency() {
        // x + y = 2 has min-norm solution (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let ls = LeastSquares::new(&a);
        assert_eq!(ls.rank(), 1);
        assert!(!ls.is_full_column_rank());
        let x = ls.solve(&DVector::from_vec(vec![2.0]));
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spd_inverse_matches_direct() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (inv, logdet) = spd_inverse_logdet(&m).unwrap();
        assert!((logdet - 11f64.ln()).abs() < 1e-12);
        let id = &m * inv;
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(spd_inverse_logdet(&DMatrix::zeros(2, 2)).is_none());
    }
}

//! Least-squares covariance matching: find `p` with
//! `S diag(p) S^T + sigma ~ W` on the upper triangle (known noise) or the
//! strict upper triangle (unknown white noise, whose diagonal is dropped).

use nalgebra::DMatrix;

use super::{check_dims, Method, PowerEstimate};
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::signatures::{RowProductKind, RowProductMatrix, SignatureMatrix};

/// Least-squares solver with the row-product pseudo-inverse cached, for
/// repeated estimates against a stream of covariance updates.
#[derive(Debug, Clone)]
pub struct SuboptSolver {
    rows: RowProductMatrix,
    ls: LeastSquares,
    m: usize,
}

impl SuboptSolver {
    pub fn new(s: &SignatureMatrix, kind: RowProductKind) -> Result<Self> {
        let rows = s.row_product(kind);
        let ls = LeastSquares::new(rows.matrix());
        if !ls.is_full_column_rank() {
            return Err(Error::NotIdentifiable { rank: ls.rank(), n: s.users() });
        }
        Ok(Self { rows, ls, m: s.chips() })
    }

    pub fn kind(&self) -> RowProductKind {
        self.rows.kind()
    }

    /// Estimate from covariance `w`. `sigma` is subtracted when given; it is
    /// ignored by the off-diagonal kind since only strict pairs are used.
    pub fn estimate(&self, w: &DMatrix<f64>, sigma: Option<&DMatrix<f64>>) -> Result<PowerEstimate> {
        if w.shape() != (self.m, self.m) {
            return Err(Error::DimensionMismatch(format!("covariance is {:?}, expected {}x{}", w.shape(), self.m, self.m)));
        }
        let target = match (self.kind(), sigma) {
            (RowProductKind::Full, Some(sig)) => {
                if sig.shape() != w.shape() {
                    return Err(Error::DimensionMismatch(format!("noise covariance is {:?}", sig.shape())));
                }
                self.rows.vectorize(&(w - sig))
            }
            _ => self.rows.vectorize(w),
        };
        let raw = self.ls.solve(&target);
        let p_hat: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
        let fitted = self.rows.matrix() * nalgebra::DVector::from_column_slice(&p_hat);
        let method = match self.kind() {
            RowProductKind::Full => Method::SuboptKnown,
            RowProductKind::OffDiag => Method::SuboptUnknown,
        };
        Ok(PowerEstimate { p_hat, method, iterations: 1, residual: (fitted - target).norm(), converged: true })
    }
}

pub fn subopt_known_noise(s: &SignatureMatrix, w: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<PowerEstimate> {
    check_dims(s, &vec![0.0; s.users()], sigma)?;
    SuboptSolver::new(s, RowProductKind::Full)?.estimate(w, Some(sigma))
}

pub fn subopt_unknown_noise(s: &SignatureMatrix, w: &DMatrix<f64>) -> Result<PowerEstimate> {
    SuboptSolver::new(s, RowProductKind::OffDiag)?.estimate(w, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::model_covariance;
    use crate::signatures::{construct_known_noise, construct_unknown_noise};
    use nalgebra::DVector;

    #[test]
    fn orthogonal_users() {
        let s = SignatureMatrix::identity(2);
        let sigma = DMatrix::identity(2, 2) * 0.25;
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.25, 2.25]));
        let e = subopt_known_noise(&s, &w, &sigma).unwrap();
        assert!((e.p_hat[0] - 1.0).abs() < 1e-12 && (e.p_hat[1] - 2.0).abs() < 1e-12);
        assert_eq!(e.method, Method::SuboptKnown);
    }

    #[test]
    fn consistent_system_recovers_truth() {
        let s = construct_known_noise(5, 15).unwrap();
        let p: Vec<f64> = (0..15).map(|i| 0.5 + 0.1 * i as f64).collect();
        let sigma = DMatrix::identity(5, 5) * 0.4;
        let w = model_covariance(&s, &p, &sigma).unwrap();
        let e = subopt_known_noise(&s, &w, &sigma).unwrap();
        for (a, b) in e.p_hat.iter().zip(&p) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(e.residual < 1e-10);
    }

    #[test]
    fn unknown_noise_ignores_diagonal() {
        let s = construct_unknown_noise(3, 3).unwrap();
        let p = [0.7, 1.9, 3.1];
        for var in [0.0, 0.5, 17.0] {
            let w = model_covariance(&s, &p, &(DMatrix::identity(3, 3) * var)).unwrap();
            let e = subopt_unknown_noise(&s, &w).unwrap();
            for (a, b) in e.p_hat.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(e.method, Method::SuboptUnknown);
        }
    }

    #[test]
    fn negative_solutions_clamped() {
        let s = SignatureMatrix::identity(2);
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 1.0]));
        let e = subopt_known_noise(&s, &w, &(DMatrix::identity(2, 2) * 0.5)).unwrap();
        assert_eq!(e.p_hat[0], 0.0);
        assert!((e.p_hat[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn not_identifiable() {
        let s = SignatureMatrix::from_rows(2, 4, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, -1.0]).unwrap();
        let r = subopt_known_noise(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(Error::NotIdentifiable { n: 4, .. })));
        // identity has no off-diagonal information at all
        assert!(subopt_unknown_noise(&SignatureMatrix::identity(2), &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn dimension_checks() {
        let s = SignatureMatrix::identity(2);
        assert!(subopt_known_noise(&s, &DMatrix::identity(3, 3), &DMatrix::zeros(2, 2)).is_err());
        assert!(subopt_known_noise(&s, &DMatrix::identity(2, 2), &DMatrix::zeros(3, 3)).is_err());
    }
}

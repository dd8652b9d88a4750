//! Signature matrices and the row-product matrices that decide whether user
//! powers can be recovered from the received covariance.

mod construct;
mod decodable;
mod io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use construct::{construct_known_noise, construct_unknown_noise};
pub use decodable::{
    decodability_margin, random_binary, random_uniform, search_uniquely_decodable,
    verify_uniquely_decodable, Alphabet, MAX_DECODABLE_USERS,
};
pub use io::{load_matrix, parse_matrix, save_matrix, write_matrix};

/// Columns whose norm falls below this are treated as zero.
const ZERO_COLUMN_NORM: f64 = 1e-300;

/// `m x n` signature matrix, one column (signature) per user.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    entries: DMatrix<f64>,
}

impl SignatureMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "signature matrix must be at least 1x1, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("signature matrix has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    /// Builds from row-major data.
    pub fn from_rows(m: usize, n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {m}x{n} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(m, n, data))
    }

    pub fn identity(m: usize) -> Self {
        Self { entries: DMatrix::identity(m, m) }
    }

    /// Chip count `m`.
    pub fn chips(&self) -> usize {
        self.entries.nrows()
    }

    /// User count `n`.
    pub fn users(&self) -> usize {
        self.entries.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.entries.column_iter().all(|c| (c.norm() - 1.0).abs() <= tol)
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(&self) -> Result<Self> {
        let mut out = self.entries.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm < ZERO_COLUMN_NORM {
                return Err(Error::ZeroColumn(j));
            }
            col /= norm;
        }
        Ok(Self { entries: out })
    }

    /// Keeps the first `n` columns.
    pub fn truncate_users(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.users() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {n} of {} columns",
                self.users()
            )));
        }
        Ok(Self { entries: self.entries.columns(0, n).into_owned() })
    }

    pub fn row_product(&self, kind: RowProductKind) -> RowProductMatrix {
        RowProductMatrix::new(self, kind)
    }

    /// Rank test for power identifiability.
    ///
    /// With known noise the full row-product matrix (pairs `i <= j`) is used;
    /// with unknown white noise the diagonal of the covariance is
    /// contaminated, so only the strict pairs `i < j` carry information.
    pub fn estimability(&self, noise_known: bool) -> EstimabilityReport {
        let kind = if noise_known { RowProductKind::Full } else { RowProductKind::OffDiag };
        let rp = self.row_product(kind);
        let sv = linalg::singular_values(rp.matrix());
        let rank = linalg::rank_of(&sv);
        let n = self.users();
        let min_singular_value = if rank >= n { sv[n - 1] } else { 0.0 };
        EstimabilityReport {
            rank,
            n,
            estimable: rank == n,
            min_singular_value,
            bound: kind.row_count(self.chips()),
        }
    }
}

/// Which row pairs enter the row-product matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowProductKind {
    /// All pairs `i <= j`: `m(m+1)/2` rows.
    Full,
    /// Strict pairs `i < j`: `m(m-1)/2` rows.
    OffDiag,
}

impl RowProductKind {
    pub fn row_count(self, m: usize) -> usize {
        match self {
            RowProductKind::Full => m * (m + 1) / 2,
            RowProductKind::OffDiag => m * m.saturating_sub(1) / 2,
        }
    }

    /// Row pairs in lexicographic order. Covariance vectorisation in the
    /// estimators walks the same list.
    pub fn pairs(self, m: usize) -> Vec<(usize, usize)> {
        let offset = match self {
            RowProductKind::Full => 0,
            RowProductKind::OffDiag => 1,
        };
        (0..m).flat_map(|i| (i + offset..m).map(move |j| (i, j))).collect()
    }
}

/// Matrix whose row for pair `(i, j)` is the entrywise product of rows `i`
/// and `j` of a signature matrix, so that `S diag(p) S^T` restricted to the
/// pairs equals `rows * p`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowProductMatrix {
    kind: RowProductKind,
    entries: DMatrix<f64>,
    pairs: Vec<(usize, usize)>,
}

impl RowProductMatrix {
    pub fn new(s: &SignatureMatrix, kind: RowProductKind) -> Self {
        let (m, n) = (s.chips(), s.users());
        let pairs = kind.pairs(m);
        let src = s.matrix();
        let entries = DMatrix::from_fn(pairs.len(), n, |r, c| {
            let (i, j) = pairs[r];
            src[(i, c)] * src[(j, c)]
        });
        Self { kind, entries, pairs }
    }

    pub fn kind(&self) -> RowProductKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `(i, j)` chip pair behind each row.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Stacks the entries of a symmetric `m x m` matrix in row order.
    pub fn vectorize(&self, sym: &DMatrix<f64>) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().map(|&(i, j)| sym[(i, j)]),
        )
    }
}

/// Outcome of the identifiability rank test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimabilityReport {
    pub rank: usize,
    pub n: usize,
    pub estimable: bool,
    /// `n`-th largest singular value of the row-product matrix, 0 when rank
    /// deficient. Its reciprocal bounds the sensitivity of least-squares
    /// power estimates to covariance errors.
    pub min_singular_value: f64,
    /// Row count of the row-product matrix, an upper bound on identifiable users.
    pub bound: usize,
}

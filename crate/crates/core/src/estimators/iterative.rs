//! Decode-and-estimate for binary inputs.
//!
//! Round `j` detects every received vector with the amplitudes of round
//! `j - 1`, flips each signature column by its detected bit, stacks the `L`
//! resulting `m x n` systems and solves the `Lm x n` least-squares problem
//! for the amplitudes `sqrt(p)`.

use nalgebra::{DMatrix, DVector};

use super::{Method, PowerEstimate};
use crate::decoder::Detector;
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::signatures::SignatureMatrix;

#[derive(Debug, Clone)]
pub struct IterativeEstimate {
    pub estimate: PowerEstimate,
    /// Powers after each round, `history[0]` being the first round.
    pub history: Vec<Vec<f64>>,
    /// `n x L` decisions of the last round (made with the powers of the
    /// round before it).
    pub decisions: DMatrix<f64>,
}

/// Runs `rounds` detect/estimate rounds on zero-mean received vectors `ys`
/// (`m x L`), starting from powers `init`.
///
/// A negative least-squares amplitude is read as a consistently flipped
/// user, so powers are the squared absolute amplitudes.
pub fn iterative_binary<D: Detector>(
    s: &SignatureMatrix,
    ys: &DMatrix<f64>,
    detector: &D,
    init: &[f64],
    rounds: usize,
) -> Result<IterativeEstimate> {
    let (m, n) = (s.chips(), s.users());
    let l = ys.ncols();
    if ys.nrows() != m || detector.chips() != m || detector.users() != n {
        return Err(Error::DimensionMismatch(format!(
            "received vectors are {}-dimensional, detector {}x{}, signatures {m}x{n}",
            ys.nrows(),
            detector.chips(),
            detector.users()
        )));
    }
    if init.len() != n {
        return Err(Error::DimensionMismatch(format!("{} initial powers for {n} users", init.len())));
    }
    if l == 0 {
        return Err(Error::EmptyBatch);
    }
    if l * m < n {
        return Err(Error::InvalidArgument(format!("{l} vectors of {m} chips cannot determine {n} powers")));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("at least one round is required".into()));
    }

    let rhs = DVector::from_column_slice(ys.as_slice());
    let mut powers: Vec<f64> = init.iter().map(|p| p.max(0.0)).collect();
    let mut history = Vec::with_capacity(rounds);
    let mut decisions = DMatrix::zeros(n, l);
    let mut residual = 0.0;

    for _ in 0..rounds {
        let amplitudes: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();
        for j in 0..l {
            let x = detector.detect(&ys.column(j).into_owned(), &amplitudes)?;
            decisions.set_column(j, &x);
        }
        let stacked = stack_flipped(s, &decisions);
        let ls = LeastSquares::new(&stacked);
        if !ls.is_full_column_rank() {
            return Err(Error::RankDeficientStack { rank: ls.rank(), n });
        }
        let a = ls.solve(&rhs);
        residual = (&stacked * &a - &rhs).norm();
        powers = a.iter().map(|v| v * v).collect();
        history.push(powers.clone());
    }

    Ok(IterativeEstimate {
        estimate: PowerEstimate { p_hat: powers, method: Method::Iterative, iterations: rounds, residual, converged: true },
        history,
        decisions,
    })
}

/// `[S diag(x_1); ...; S diag(x_L)]`.
fn stack_flipped(s: &SignatureMatrix, bits: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = (s.chips(), s.users());
    let l = bits.ncols();
    DMatrix::from_fn(l * m, n, |r, u| s.matrix()[(r % m, u)] * bits[(u, r / m)])
}

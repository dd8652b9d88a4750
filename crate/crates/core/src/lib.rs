//! Power estimation for overloaded synchronous CDMA.
//!
//! The received vector model is `Y = S * P^(1/2) * X + N` with an `m x n`
//! signature matrix `S` (`n > m` users share `m` chips), unknown diagonal
//! user powers `P`, unit-power user data `X` and Gaussian noise `N`.
//!
//! * [`signatures`] builds signature matrices, their row-product matrices
//!   and the rank test that decides whether powers are identifiable.
//! * [`channel`] simulates the channel and maintains (forgetting-weighted)
//!   empirical covariances.
//! * [`estimators`] holds the maximum-likelihood Newton solver, the
//!   least-squares covariance-matching estimators and the iterative
//!   decode-and-estimate scheme for binary inputs.
//! * [`decoder`] is the power-adjusted partitioned ML detector.
//! * [`experiments`] runs the convergence, tracking and BER studies.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod decoder;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod signatures;

pub use error::{Error, Result};

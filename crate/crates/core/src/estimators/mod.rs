//! User-power estimators.
//!
//! * [`ml`]: maximum likelihood for Gaussian inputs, solved by projected
//!   Newton iterations on the stationarity conditions.
//! * [`subopt`]: least-squares fit of `S diag(p) S^T` to the empirical
//!   covariance, with known noise or unknown white noise.
//! * [`iterative`]: alternating detection and amplitude least squares for
//!   binary inputs.

pub mod iterative;
pub mod ml;
pub mod subopt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signatures::SignatureMatrix;

pub use iterative::{iterative_binary, IterativeEstimate};
pub use ml::{ml_estimate, newton_jacobian, nll_gradient, nll_objective, MlOptions, MlWorkspace};
pub use subopt::{subopt_known_noise, subopt_unknown_noise, SuboptSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ml,
    SuboptKnown,
    SuboptUnknown,
    Iterative,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::SuboptKnown => "subopt_known",
            Method::SuboptUnknown => "subopt_unknown",
            Method::Iterative => "iterative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub p_hat: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl PowerEstimate {
    /// Turns a non-converged estimate into [`Error::NoConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { iterations: self.iterations, residual: self.residual })
        }
    }

    pub fn report(&self, truth: Option<&[f64]>) -> Result<EstimateReport> {
        let relative_error = match truth {
            None => None,
            Some(t) if t.len() == self.p_hat.len() => {
                Some(self.p_hat.iter().zip(t).map(|(&e, &p)| relative_error(e, p)).collect())
            }
            Some(t) => {
                return Err(Error::DimensionMismatch(format!(
                    "{} true powers for {} estimates",
                    t.len(),
                    self.p_hat.len()
                )))
            }
        };
        Ok(EstimateReport {
            method: self.method,
            p_hat: self.p_hat.clone(),
            residual: self.residual,
            iterations: self.iterations,
            converged: self.converged,
            relative_error,
        })
    }
}

/// `|estimate - truth| / truth`, or the absolute error for a zero-power user.
pub fn relative_error(estimate: f64, truth: f64) -> f64 {
    let err = (estimate - truth).abs();
    if truth > 0.0 {
        err / truth
    } else {
        err
    }
}

/// JSON summary of one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub p_hat: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<Vec<f64>>,
}

/// Estimator settings as read from JSON, e.g.
/// `{"method":"ml","tol":1e-8,"max_iter":200,"alpha":0.95,"window":40,"iterations":4}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Forgetting factor for streaming covariance estimates.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Received vectors kept by the iterative estimator when tracking.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Detect/estimate rounds of the iterative estimator.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    200
}
fn default_alpha() -> f64 {
    0.95
}
fn default_window() -> usize {
    40
}
fn default_iterations() -> usize {
    4
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            tol: default_tol(),
            max_iter: default_max_iter(),
            alpha: default_alpha(),
            window: default_window(),
            iterations: default_iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol {} must be positive", self.tol)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if self.max_iter == 0 || self.window == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument("max_iter, window and iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn ml_options(&self) -> MlOptions {
        MlOptions { tol: self.tol, max_iter: self.max_iter, ..MlOptions::default() }
    }
}

/// Cramer-Rao bound on the covariance of unbiased power estimates from `l`
/// Gaussian-input observations: `(2 / l) (G o G)^-1`, where
/// `G = S^T M^-1 S`.
///
/// Returns `None` when the Fisher information is singular (powers not
/// identifiable).
pub fn cramer_rao_bound(s: &SignatureMatrix, p: &[f64], sigma: &DMatrix<f64>, l: usize) -> Result<Option<DMatrix<f64>>> {
    let model = model_covariance(s, p, sigma)?;
    let Some((inv, _)) = crate::linalg::spd_inverse_logdet(&model) else {
        return Err(Error::SingularModel);
    };
    let g = s.matrix().transpose() * inv * s.matrix();
    let fisher = g.component_mul(&g) * (l as f64 / 2.0);
    Ok(fisher.cholesky().map(|c| c.inverse()))
}

/// `S diag(p) S^T + sigma`.
pub fn model_covariance(s: &SignatureMatrix, p: &[f64], sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(s, p, sigma)?;
    let scaled = s.matrix() * DMatrix::from_diagonal(&DVector::from_column_slice(p));
    Ok(scaled * s.matrix().transpose() + sigma)
}

fn check_dims(s: &SignatureMatrix, p: &[f64], cov: &DMatrix<f64>) -> Result<()> {
    let (m, n) = (s.chips(), s.users());
    if p.len() != n {
        return Err(Error::DimensionMismatch(format!("{} powers for {n} users", p.len())));
    }
    if cov.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("expected {m}x{m} matrix, got {:?}", cov.shape())));
    }
    Ok(())
}

fn require_identifiable(s: &SignatureMatrix, noise_known: bool) -> Result<()> {
    let report = s.estimability(noise_known);
    if !report.estimable {
        return Err(Error::NotIdentifiable { rank: report.rank, n: report.n });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_json() {
        let c: EstimatorConfig = serde_json::from_str(r#"{"method":"ml"}"#).unwrap();
        assert_eq!(c, EstimatorConfig::new(Method::Ml));
        let full: EstimatorConfig = serde_json::from_str(
            r#"{"method":"ml","tol":1e-8,"max_iter":200,"alpha":0.95,"window":40,"iterations":4}"#,
        )
        .unwrap();
        assert_eq!(full, c);
        assert!(serde_json::from_str::<EstimatorConfig>(r#"{"method":"ml","bogus":1}"#).is_err());
        let mut bad = c.clone();
        bad.alpha = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_relative_errors() {
        let e = PowerEstimate {
            p_hat: vec![1.1, 0.5, 0.2],
            method: Method::SuboptKnown,
            iterations: 1,
            residual: 0.0,
            converged: true,
        };
        let r = e.report(Some(&[1.0, 1.0, 0.0])).unwrap();
        let rel = r.relative_error.unwrap();
        assert!((rel[0] - 0.1).abs() < 1e-12 && (rel[1] - 0.5).abs() < 1e-12 && (rel[2] - 0.2).abs() < 1e-12);
        let json = serde_json::to_value(e.report(None).unwrap()).unwrap();
        assert_eq!(json["method"], "subopt_known");
        assert!(json.get("relative_error").is_none());
        assert!(e.report(Some(&[1.0])).is_err());
    }

    #[test]
    fn require_converged_flags() {
        let mut e = PowerEstimate { p_hat: vec![1.0], method: Method::Ml, iterations: 200, residual: 1.0, converged: false };
        assert!(matches!(e.clone().require_converged(), Err(Error::NoConvergence { iterations: 200, .. })));
        e.converged = true;
        assert!(e.require_converged().is_ok());
    }
}

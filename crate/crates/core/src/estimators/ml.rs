//! Maximum-likelihood powers for Gaussian inputs.
//!
//! The negative log-likelihood per sample, up to constants, is
//! `phi(p) = tr(M^-1 W) + ln det M` with `M = S diag(p) S^T + sigma`.
//! Its gradient is `g_i = [S^T M^-1 (I - W M^-1) S]_ii` and differentiating
//! once more gives the Jacobian `G o H` (Hadamard product) with
//! `G = S^T M^-1 S` and `H = S^T M^-1 (2W - M) M^-1 S`.

use nalgebra::{DMatrix, DVector};

use super::{check_dims, require_identifiable, subopt, Method, PowerEstimate};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signatures::SignatureMatrix;

/// Quantities shared by the objective, gradient and Jacobian at one point.
#[derive(Debug, Clone)]
pub struct MlWorkspace {
    /// `M = S diag(p) S^T + sigma`.
    pub model: DMatrix<f64>,
    pub model_inv: DMatrix<f64>,
    pub log_det: f64,
    /// `G = S^T M^-1 S`.
    pub gram: DMatrix<f64>,
    /// `K = S^T M^-1 W M^-1 S`.
    pub weighted: DMatrix<f64>,
    /// Diagonal of `S^T M^-1 (I - W M^-1) S`, i.e. the gradient.
    pub residual: DVector<f64>,
    trace_term: f64,
}

impl MlWorkspace {
    pub fn new(p: &[f64], w: &DMatrix<f64>, s: &SignatureMatrix, sigma: &DMatrix<f64>) -> Result<Self> {
        check_dims(s, p, sigma)?;
        if w.shape() != sigma.shape() {
            return Err(Error::DimensionMismatch(format!("covariance W is {:?}", w.shape())));
        }
        let model = linalg::symmetrize(&super::model_covariance(s, p, sigma)?);
        let (model_inv, log_det) = linalg::spd_inverse_logdet(&model).ok_or(Error::SingularModel)?;
        let inv_s = &model_inv * s.matrix();
        let gram = s.matrix().transpose() * &inv_s;
        let weighted = inv_s.transpose() * w * &inv_s;
        let residual = DVector::from_fn(p.len(), |i, _| gram[(i, i)] - weighted[(i, i)]);
        let trace_term = model_inv.component_mul(w).sum();
        Ok(Self { model, model_inv, log_det, gram, weighted, residual, trace_term })
    }

    pub fn objective(&self) -> f64 {
        self.trace_term + self.log_det
    }

    /// `G o (2K - G)`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let h = &self.weighted * 2.0 - &self.gram;
        self.gram.component_mul(&h)
    }
}

pub fn nll_objective(p: &[f64], w: &DMatrix<f64>, s: &SignatureMatrix, sigma: &DMatrix<f64>) -> Result<f64> {
    Ok(MlWorkspace::new(p, w, s, sigma)?.objective())
}

pub fn nll_gradient(
    p: &[f64],
    w: &DMatrix<f64>,
    s: &SignatureMatrix,
    sigma: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    Ok(MlWorkspace::new(p, w, s, sigma)?.residual)
}

pub fn newton_jacobian(
    p: &[f64],
    w: &DMatrix<f64>,
    s: &SignatureMatrix,
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(MlWorkspace::new(p, w, s, sigma)?.jacobian())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    /// Stop once the projected gradient's infinity norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried before declaring a stall.
    pub max_halvings: usize,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, max_halvings: 30 }
    }
}

/// Projected Newton solve of the ML stationarity system over `p >= 0`.
///
/// Stationarity is measured by the projected gradient: components at the
/// `p_i = 0` boundary whose gradient points outward count as zero. Each
/// Newton step is restricted to the free coordinates, projected back onto
/// `p >= 0`, and halved until the objective shows sufficient (Armijo)
/// decrease. The residual norm is not used as the merit: it also falls as
/// `p` grows without bound, which drags small-`L` runs away from the
/// optimum.
///
/// Without `init`, starts from the known-noise least-squares estimate, or
/// all ones if that fails. A run that hits `max_iter` or stalls returns the
/// best iterate with `converged = false`.
pub fn ml_estimate(
    s: &SignatureMatrix,
    w: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    init: Option<&[f64]>,
    opts: &MlOptions,
) -> Result<PowerEstimate> {
    let n = s.users();
    check_dims(s, &vec![0.0; n], sigma)?;
    if w.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch(format!("covariance W is {:?}", w.shape())));
    }
    require_identifiable(s, true)?;

    let mut p: Vec<f64> = match init {
        Some(v) => {
            check_dims(s, v, sigma)?;
            v.iter().map(|x| x.max(0.0)).collect()
        }
        None => subopt::subopt_known_noise(s, w, sigma).map(|e| e.p_hat).unwrap_or_else(|_| vec![1.0; n]),
    };
    let mut ws = MlWorkspace::new(&p, w, s, sigma)?;
    let mut r = projected_norm(&p, &ws.residual);
    let mut iterations = 0;

    while r > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let step = descent_step(&p, &ws);
        let f0 = ws.objective();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(pi, di)| (pi + t * di).max(0.0)).collect();
            if let Ok(tws) = MlWorkspace::new(&trial, w, s, sigma) {
                let slope: f64 = (0..n).map(|i| ws.residual[i] * (trial[i] - p[i])).sum();
                let ft = tws.objective();
                let tr = projected_norm(&trial, &tws.residual);
                // near the minimum the decrease drowns in rounding; the
                // gradient norm still discriminates
                let flat = ft <= f0 + FLAT_RTOL * f0.abs().max(1.0) && tr < r;
                if ft <= f0 + ARMIJO * slope.min(0.0) || flat {
                    accepted = Some((trial, tws, tr));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((np, nws, nr)) => {
                p = np;
                ws = nws;
                r = nr;
            }
            None => break,
        }
    }

    Ok(PowerEstimate { p_hat: p, method: Method::Ml, iterations, residual: r, converged: r <= opts.tol })
}

const ARMIJO: f64 = 1e-4;
const FLAT_RTOL: f64 = 1e-12;

fn is_free(p: f64, g: f64) -> bool {
    p > 0.0 || g < 0.0
}

fn projected_norm(p: &[f64], g: &DVector<f64>) -> f64 {
    p.iter().zip(g.iter()).map(|(&pi, &gi)| if is_free(pi, gi) { gi.abs() } else { 0.0 }).fold(0.0, f64::max)
}

/// Direction on the free coordinates, zero elsewhere.
///
/// Newton when the free block of the Hessian is positive definite, else
/// Fisher scoring (`G o G`), else steepest descent.
fn descent_step(p: &[f64], ws: &MlWorkspace) -> DVector<f64> {
    let g = &ws.residual;
    let free: Vec<usize> = (0..p.len()).filter(|&i| is_free(p[i], g[i])).collect();
    let mut step = DVector::zeros(p.len());
    if free.is_empty() {
        return step;
    }
    let rhs = DVector::from_fn(free.len(), |a, _| -g[free[a]]);
    let block = |m: &DMatrix<f64>| DMatrix::from_fn(free.len(), free.len(), |a, b| m[(free[a], free[b])]);
    let fisher = ws.gram.component_mul(&ws.gram);
    let delta = [ws.jacobian(), fisher]
        .iter()
        .find_map(|m| block(m).cholesky().map(|c| c.solve(&rhs)))
        .filter(|d| d.iter().all(|v| v.is_finite()))
        .unwrap_or(rhs);
    for (a, &i) in free.iter().enumerate() {
        step[i] = delta[a];
    }
    step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::model_covariance;
    use crate::signatures::construct_known_noise;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn s1() -> SignatureMatrix {
        SignatureMatrix::identity(1)
    }

    #[test]
    fn scalar_objective_values() {
        assert!((nll_objective(&[0.0], &scalar(1.0), &s1(), &scalar(1.0)).unwrap() - 1.0).abs() < 1e-15);
        let v = nll_objective(&[1.0], &scalar(2.0), &s1(), &scalar(1.0)).unwrap();
        assert!((v - (1.0 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn scalar_objective_minimum_by_grid() {
        // w = 3, sigma^2 = 0.5: minimiser should be 2.5
        let (w, s2) = (3.0, 0.5);
        let best = (0..=50_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| {
                let fa = nll_objective(&[*a], &scalar(w), &s1(), &scalar(s2)).unwrap();
                let fb = nll_objective(&[*b], &scalar(w), &s1(), &scalar(s2)).unwrap();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - (w - s2)).abs() <= 1e-4, "grid minimum at {best}");
    }

    #[test]
    fn scalar_gradient_hand_value() {
        let g = nll_gradient(&[1.0], &scalar(2.0), &s1(), &scalar(0.0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_truth() {
        let s = construct_known_noise(4, 6).unwrap();
        let p = [0.5, 1.0, 1.5, 2.0, 0.7, 1.2];
        let sigma = DMatrix::identity(4, 4) * 0.3;
        let w = model_covariance(&s, &p, &sigma).unwrap();
        let g = nll_gradient(&p, &w, &s, &sigma).unwrap();
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn singular_model_detected() {
        let s = SignatureMatrix::identity(2);
        let r = nll_objective(&[0.0, 0.0], &DMatrix::identity(2, 2), &s, &DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(Error::SingularModel)));
    }

    #[test]
    fn decoupled_orthogonal_users() {
        let s = SignatureMatrix::identity(2);
        let sigma = DMatrix::identity(2, 2) * 0.25;
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.25, 2.25]));
        for init in [None, Some(&[1.0, 1.0][..]), Some(&[5.0, 0.0][..])] {
            let e = ml_estimate(&s, &w, &sigma, init, &MlOptions::default()).unwrap();
            assert!(e.converged);
            assert!((e.p_hat[0] - 1.0).abs() < 1e-8 && (e.p_hat[1] - 2.0).abs() < 1e-8, "{:?}", e.p_hat);
        }
    }

    #[test]
    fn exact_covariance_fixed_point_from_far_start() {
        let s = construct_known_noise(4, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..10).map(|_| rng.random_range(0.5..1.5)).collect();
        let sigma = DMatrix::identity(4, 4) * 0.1;
        let w = model_covariance(&s, &p, &sigma).unwrap();
        let e = ml_estimate(&s, &w, &sigma, Some(&[1.0; 10]), &MlOptions::default()).unwrap();
        assert!(e.converged, "{e:?}");
        for (a, b) in e.p_hat.iter().zip(&p) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn boundary_solution_satisfies_kkt() {
        // W below the noise floor for user 0 pushes its power to zero
        let s = SignatureMatrix::identity(2);
        let sigma = DMatrix::identity(2, 2) * 0.5;
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 1.5]));
        let e = ml_estimate(&s, &w, &sigma, None, &MlOptions::default()).unwrap();
        assert!(e.converged);
        assert_eq!(e.p_hat[0], 0.0);
        assert!((e.p_hat[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_unidentifiable() {
        let s = SignatureMatrix::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        let r = ml_estimate(&s, &scalar(2.0), &scalar(1.0), None, &MlOptions::default());
        assert!(matches!(r, Err(Error::NotIdentifiable { rank: 1, n: 2 })));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let s = construct_known_noise(3, 6).unwrap();
        let p = [1.0, 2.0, 0.5, 1.0, 1.5, 0.8];
        let sigma = DMatrix::identity(3, 3) * 0.2;
        let w = model_covariance(&s, &p, &sigma).unwrap();
        let opts = MlOptions { max_iter: 1, ..MlOptions::default() };
        let e = ml_estimate(&s, &w, &sigma, Some(&[0.1; 6]), &opts).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 1);
        assert!(e.require_converged().is_err());
    }
}

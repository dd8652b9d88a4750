//! Seeded experiment runners: estimate-vs-length convergence, power
//! tracking and bit-error-rate comparisons of receiver power knowledge.
//!
//! Every run is a deterministic function of its config. Independent cells
//! are evaluated in parallel and merged in grid order.

mod ber;
mod config;
mod convergence;
mod table;
mod tracking;

use nalgebra::{DMatrix, DVector};

use crate::channel::{PowerSchedule, PowerTrajectory};
use crate::decoder::{partition, PartitionedSignature};
use crate::error::Result;
use crate::estimators::{
    iterative_binary, ml_estimate, EstimatorConfig, Method, MlOptions, PowerEstimate, SuboptSolver,
};
use crate::signatures::{RowProductKind, SignatureMatrix};

pub use ber::run_ber;
pub use config::{BerMode, ExperimentConfig, MatrixSource, NoiseKnowledge, Scenario};
pub use convergence::run_convergence;
pub use table::{BerRow, EstimateRow, ResultTable, Rows, TableMeta, BER_HEADER, ESTIMATE_HEADER, FORMAT_VERSION};
pub use tracking::run_tracking;

/// Attached to every BER table.
pub const DESK_SCALE_NOTE: &str = "desk-scale run: small uniquely decodable system with exhaustive search over \
the non-pivot bits; BER figures for large systems are not reproduced";

/// Runs whichever scenario the config names.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    match cfg.scenario {
        Scenario::Convergence => run_convergence(cfg),
        Scenario::Tracking => run_tracking(cfg),
        Scenario::Ber => run_ber(cfg),
    }
}

/// Derives a cell seed from a base seed and grid coordinates.
pub fn cell_seed(base: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix(base), |acc, &c| splitmix(acc ^ splitmix(c.wrapping_add(0x51_7c_c1_b7))))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-user power level that Eb/N0 refers to: the centre of a varying
/// trajectory, the first level of a switch.
pub fn nominal_powers(trajectory: &PowerTrajectory, schedule: &PowerSchedule) -> Vec<f64> {
    let n = schedule.users();
    match trajectory {
        PowerTrajectory::Sinusoidal { low, high, .. } | PowerTrajectory::Stepwise { low, high, .. } => {
            vec![0.5 * (low + high); n]
        }
        _ => schedule.powers_at(0),
    }
}

/// An estimator with its matrix-dependent setup done once.
pub(crate) enum Prepared {
    Ml(MlOptions),
    Subopt(SuboptSolver),
    Iterative { detector: PartitionedSignature, rounds: usize },
}

impl Prepared {
    pub(crate) fn new(cfg: &EstimatorConfig, s: &SignatureMatrix) -> Result<Self> {
        Ok(match cfg.method {
            Method::Ml => Prepared::Ml(cfg.ml_options()),
            Method::SuboptKnown => Prepared::Subopt(SuboptSolver::new(s, RowProductKind::Full)?),
            Method::SuboptUnknown => Prepared::Subopt(SuboptSolver::new(s, RowProductKind::OffDiag)?),
            Method::Iterative => Prepared::Iterative { detector: partition(s)?, rounds: cfg.iterations },
        })
    }

    /// Covariance-based estimate; `init` only matters for ML.
    pub(crate) fn covariance_estimate(
        &self,
        s: &SignatureMatrix,
        w: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        init: Option<&[f64]>,
    ) -> Result<PowerEstimate> {
        match self {
            Prepared::Ml(opts) => ml_estimate(s, w, sigma, init, opts)?.require_converged(),
            Prepared::Subopt(solver) => match solver.kind() {
                RowProductKind::Full => solver.estimate(w, Some(sigma)),
                RowProductKind::OffDiag => solver.estimate(w, None),
            },
            Prepared::Iterative { .. } => unreachable!("iterative estimates need received vectors"),
        }
    }

    /// Estimate from zero-mean received vectors (`m x L`) and their
    /// covariance.
    pub(crate) fn estimate(
        &self,
        s: &SignatureMatrix,
        ys: &DMatrix<f64>,
        w: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        init: Option<&[f64]>,
    ) -> Result<PowerEstimate> {
        match self {
            Prepared::Iterative { detector, rounds } => {
                let ones = vec![1.0; s.users()];
                Ok(iterative_binary(s, ys, detector, init.unwrap_or(&ones), *rounds)?.estimate)
            }
            _ => self.covariance_estimate(s, w, sigma, init),
        }
    }

    pub(crate) fn is_iterative(&self) -> bool {
        matches!(self, Prepared::Iterative { .. })
    }
}

fn centered(ys: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = ys.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::table::{BerRow, ResultTable, Rows, TableMeta, FORMAT_VERSION};
use super::{cell_seed, centered, nominal_powers, BerMode, ExperimentConfig, Scenario, DESK_SCALE_NOTE};
use crate::channel::{ebno_to_noise, simulate, ForgettingCovariance, Simulation};
use crate::decoder::{partition, PartitionedSignature, MAX_FREE_BITS};
use crate::error::{Error, Result};
use crate::estimators::{iterative_binary, SuboptSolver};
use crate::signatures::{RowProductKind, SignatureMatrix};

/// Bit error rates of the configured receiver modes.
///
/// Each seed contributes `ceil(bits_per_point / (n * seeds))` decoded
/// symbol vectors after a warm-up of `window` vectors that is not counted.
/// Every mode sees the same symbols and noise. Estimates are causal: the
/// amplitudes used for vector `t` come from vectors before `t`, refreshed
/// every `update_stride` vectors.
pub fn run_ber(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.scenario != Scenario::Ber {
        return Err(Error::InvalidArgument(format!("expected a ber config, got {}", cfg.scenario.as_str())));
    }
    cfg.validate()?;
    let s = cfg.matrix.load()?;
    let n = s.users();
    let detector = partition(&s)?;
    if detector.free_bits() > MAX_FREE_BITS {
        return Err(Error::TooManyFreeBits(detector.free_bits()));
    }
    let subopt = if cfg.modes.contains(&BerMode::Subopt) {
        Some(SuboptSolver::new(&s, RowProductKind::Full)?)
    } else {
        None
    };
    let per_seed = cfg.bits_per_point.div_ceil(n as u64 * cfg.seeds.len() as u64) as usize;
    let warmup = cfg.window;

    let cells: Vec<(usize, usize, u64)> = (0..cfg.ebn0_db.len())
        .flat_map(|e| (0..cfg.modes.len()).flat_map(move |k| cfg.seeds.iter().map(move |&seed| (e, k, seed))))
        .collect();

    let counts: Vec<u64> = cells
        .par_iter()
        .map(|&(e, k, seed)| -> Result<u64> {
            let schedule = cfg.trajectory.schedule(n, seed)?;
            let noise = ebno_to_noise(cfg.ebn0_db[e], &s, &nominal_powers(&cfg.trajectory, &schedule))?;
            let sim = simulate(
                &s,
                &schedule,
                cfg.input_distribution(),
                &noise,
                warmup + per_seed,
                cell_seed(seed, &[]),
            )?;
            let ys = centered(&sim.batch.ys, noise.mean());
            let run = Run { s: &s, detector: &detector, sim: &sim, ys: &ys, sigma: noise.covariance(), warmup };
            run.errors(cfg, cfg.modes[k], subopt.as_ref())
        })
        .collect::<Result<_>>()?;

    let bits = (per_seed * n) as u64 * cfg.seeds.len() as u64;
    let per_point = cfg.seeds.len();
    let rows = counts
        .chunks(per_point)
        .enumerate()
        .map(|(i, chunk)| {
            let (e, k) = (i / cfg.modes.len(), i % cfg.modes.len());
            BerRow::new(cfg.ebn0_db[e], cfg.modes[k].as_str(), bits, chunk.iter().sum())
        })
        .collect();

    Ok(ResultTable {
        meta: TableMeta {
            format: FORMAT_VERSION,
            scenario: Scenario::Ber.as_str().into(),
            matrix: cfg.matrix.describe(),
            note: Some(DESK_SCALE_NOTE.into()),
        },
        rows: Rows::Ber(rows),
    })
}

struct Run<'a> {
    s: &'a SignatureMatrix,
    detector: &'a PartitionedSignature,
    sim: &'a Simulation,
    /// Zero-mean received vectors.
    ys: &'a DMatrix<f64>,
    sigma: &'a DMatrix<f64>,
    warmup: usize,
}

impl Run<'_> {
    fn errors(&self, cfg: &ExperimentConfig, mode: BerMode, subopt: Option<&SuboptSolver>) -> Result<u64> {
        let n = self.s.users();
        let total = self.ys.ncols();
        let mut cov = ForgettingCovariance::new(DVector::zeros(self.s.chips()), cfg.alpha)?;
        let mut powers = vec![1.0; n];
        let mut errors = 0u64;
        for t in 0..total {
            if t >= self.warmup {
                let due = (t - self.warmup).is_multiple_of(cfg.update_stride);
                match mode {
                    BerMode::Perfect => powers = self.sim.powers.column(t).iter().copied().collect(),
                    BerMode::None => {}
                    BerMode::Subopt if due => {
                        let solver = subopt.expect("solver prepared for subopt mode");
                        powers = solver.estimate(&cov.covariance()?, Some(self.sigma))?.p_hat;
                    }
                    BerMode::Iterative if due => {
                        let window = self.ys.columns(t - self.warmup, self.warmup).into_owned();
                        powers =
                            iterative_binary(self.s, &window, self.detector, &powers, cfg.iterations)?.estimate.p_hat;
                    }
                    _ => {}
                }
                let amplitudes: Vec<f64> = powers.iter().map(|p| p.sqrt()).collect();
                let x = self.detector.decode(&self.ys.column(t).into_owned(), &amplitudes)?;
                errors += x.iter().zip(self.sim.inputs.column(t).iter()).filter(|(a, b)| a != b).count() as u64;
            }
            if mode == BerMode::Subopt {
                cov.push(&self.ys.column(t).into_owned());
            }
        }
        Ok(errors)
    }
}

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::table::{EstimateRow, ResultTable, Rows, TableMeta, FORMAT_VERSION};
use super::{cell_seed, centered, nominal_powers, ExperimentConfig, Prepared, Scenario};
use crate::channel::{ebno_to_noise, simulate, ForgettingCovariance};
use crate::error::{Error, Result};
use crate::estimators::{relative_error, EstimatorConfig};
use crate::signatures::SignatureMatrix;

/// Streams one long run per (seed, Eb/N0) through every estimator.
///
/// Covariance estimators read a forgetting-factor covariance with their
/// `alpha`; the iterative estimator reads the last `window` vectors and is
/// warm-started from its previous estimate. Estimates are refreshed every
/// `update_stride` samples once `warmup` samples have arrived, and recorded
/// every `record_stride` samples against the true power at that sample.
pub fn run_tracking(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.scenario != Scenario::Tracking {
        return Err(Error::InvalidArgument(format!("expected a tracking config, got {}", cfg.scenario.as_str())));
    }
    cfg.validate()?;
    let s = cfg.matrix.load()?;
    let n = s.users();
    let prepared: Vec<Prepared> = cfg.estimators.iter().map(|e| Prepared::new(e, &s)).collect::<Result<_>>()?;
    let warmup = cfg
        .warmup
        .unwrap_or_else(|| cfg.estimators.iter().map(|e| e.window).max().unwrap_or(1).min(cfg.samples));

    let cells: Vec<(u64, usize)> =
        cfg.seeds.iter().flat_map(|&seed| (0..cfg.ebn0_db.len()).map(move |e| (seed, e))).collect();

    let blocks: Vec<Vec<EstimateRow>> = cells
        .par_iter()
        .map(|&(seed, e)| -> Result<Vec<EstimateRow>> {
            let ebn0 = cfg.ebn0_db[e];
            let schedule = cfg.trajectory.schedule(n, seed)?;
            let noise = ebno_to_noise(ebn0, &s, &nominal_powers(&cfg.trajectory, &schedule))?;
            let sim =
                simulate(&s, &schedule, cfg.input_distribution(), &noise, cfg.samples, cell_seed(seed, &[]))?;
            let ys = centered(&sim.batch.ys, noise.mean());
            let stream = Stream { s: &s, ys: &ys, mean: noise.mean(), sigma: noise.covariance() };

            let mut rows = Vec::new();
            for (est, est_cfg) in prepared.iter().zip(&cfg.estimators) {
                let series = stream.track(est, est_cfg, warmup, cfg.update_stride, cfg.record_stride)?;
                for (t, p_hat) in series {
                    for (u, &ph) in p_hat.iter().enumerate() {
                        let truth = sim.powers[(u, t)];
                        rows.push(EstimateRow {
                            scenario: Scenario::Tracking.as_str().into(),
                            seed,
                            ebn0_db: ebn0,
                            index: t,
                            estimator: est_cfg.method.as_str().into(),
                            user: u,
                            true_power: truth,
                            estimated_power: ph,
                            relative_error: relative_error(ph, truth),
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(ResultTable {
        meta: TableMeta {
            format: FORMAT_VERSION,
            scenario: Scenario::Tracking.as_str().into(),
            matrix: cfg.matrix.describe(),
            note: None,
        },
        rows: Rows::Estimates(blocks.into_iter().flatten().collect()),
    })
}

struct Stream<'a> {
    s: &'a SignatureMatrix,
    /// Zero-mean received vectors.
    ys: &'a DMatrix<f64>,
    mean: &'a DVector<f64>,
    sigma: &'a DMatrix<f64>,
}

impl Stream<'_> {
    /// `(sample index, estimate)` at every recording point.
    fn track(
        &self,
        est: &Prepared,
        cfg: &EstimatorConfig,
        warmup: usize,
        update_stride: usize,
        record_stride: usize,
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let total = self.ys.ncols();
        let mut cov = ForgettingCovariance::new(DVector::zeros(self.mean.len()), cfg.alpha)?;
        let mut current: Option<Vec<f64>> = None;
        let mut out = Vec::new();
        for t in 0..total {
            if !est.is_iterative() {
                cov.push(&self.ys.column(t).into_owned());
            }
            let seen = t + 1;
            if seen < warmup {
                continue;
            }
            if (seen - warmup).is_multiple_of(update_stride) {
                let p = if est.is_iterative() {
                    let start = seen.saturating_sub(cfg.window);
                    let window = self.ys.columns(start, seen - start).into_owned();
                    est.estimate(self.s, &window, &DMatrix::zeros(0, 0), self.sigma, current.as_deref())?
                } else {
                    est.covariance_estimate(self.s, &cov.covariance()?, self.sigma, current.as_deref())?
                };
                current = Some(p.p_hat);
            }
            if (seen - warmup).is_multiple_of(record_stride) {
                out.push((t, current.clone().expect("an estimate exists from warmup on")));
            }
        }
        Ok(out)
    }
}

use rayon::prelude::*;

use super::table::{EstimateRow, ResultTable, Rows, TableMeta, FORMAT_VERSION};
use super::{cell_seed, centered, nominal_powers, ExperimentConfig, Prepared, Scenario};
use crate::channel::{ebno_to_noise, simulate};
use crate::error::{Error, Result};
use crate::estimators::{model_covariance, relative_error};

/// Estimates from fresh batches of every configured length.
///
/// Batches of the same seed and length share their symbols and noise shape
/// across Eb/N0 values, so curves at different Eb/N0 are directly
/// comparable. The true power of a user is its mean over the batch.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ResultTable> {
    if cfg.scenario != Scenario::Convergence {
        return Err(Error::InvalidArgument(format!("expected a convergence config, got {}", cfg.scenario.as_str())));
    }
    cfg.validate()?;
    let s = cfg.matrix.load()?;
    let n = s.users();
    let prepared: Vec<Prepared> = cfg.estimators.iter().map(|e| Prepared::new(e, &s)).collect::<Result<_>>()?;

    let cells: Vec<(u64, usize, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| {
            (0..cfg.ebn0_db.len()).flat_map(move |e| (0..cfg.lengths.len()).map(move |l| (seed, e, l)))
        })
        .collect();

    let blocks: Vec<Vec<EstimateRow>> = cells
        .par_iter()
        .map(|&(seed, e, li)| -> Result<Vec<EstimateRow>> {
            let ebn0 = cfg.ebn0_db[e];
            let l = cfg.lengths[li];
            let schedule = cfg.trajectory.schedule(n, seed)?;
            let noise = ebno_to_noise(ebn0, &s, &nominal_powers(&cfg.trajectory, &schedule))?;
            let sim = simulate(&s, &schedule, cfg.input_distribution(), &noise, l, cell_seed(seed, &[li as u64]))?;
            let truth: Vec<f64> = sim.powers.row_iter().map(|r| r.mean()).collect();
            let sigma = noise.covariance();
            let w = if cfg.exact_covariance { model_covariance(&s, &truth, sigma)? } else { sim.batch.w.clone() };
            let ys = centered(&sim.batch.ys, noise.mean());

            let mut rows = Vec::with_capacity(prepared.len() * n);
            for (est, cfg_est) in prepared.iter().zip(&cfg.estimators) {
                let p = est.estimate(&s, &ys, &w, sigma, None)?;
                for (u, (&t, &ph)) in truth.iter().zip(&p.p_hat).enumerate() {
                    rows.push(EstimateRow {
                        scenario: Scenario::Convergence.as_str().into(),
                        seed,
                        ebn0_db: ebn0,
                        index: l,
                        estimator: cfg_est.method.as_str().into(),
                        user: u,
                        true_power: t,
                        estimated_power: ph,
                        relative_error: relative_error(ph, t),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    Ok(ResultTable {
        meta: TableMeta {
            format: FORMAT_VERSION,
            scenario: Scenario::Convergence.as_str().into(),
            matrix: cfg.matrix.describe(),
            note: cfg.exact_covariance.then(|| "exact model covariance, no sampling".to_string()),
        },
        rows: Rows::Estimates(blocks.into_iter().flatten().collect()),
    })
}

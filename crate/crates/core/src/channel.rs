//! Synchronous CDMA channel `Y = S P^(1/2) X + N` with time-varying powers,
//! plus plain and forgetting-weighted empirical covariances.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signatures::SignatureMatrix;

/// Distribution of the unit-power user data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputDistribution {
    Gaussian,
    Binary,
}

/// `n x L` matrix of i.i.d. user symbols, one column per channel use.
pub fn gen_inputs(dist: InputDistribution, n: usize, l: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_inputs_with(dist, n, l, &mut rng)
}

pub fn gen_inputs_with<R: Rng + ?Sized>(
    dist: InputDistribution,
    n: usize,
    l: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    match dist {
        InputDistribution::Gaussian => DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(rng)),
        InputDistribution::Binary => {
            DMatrix::from_fn(n, l, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        }
    }
}

/// How user powers evolve over channel uses. Serialised with a `kind` tag,
/// e.g. `{"kind":"sinusoidal","low":0.5,"high":1.5,"period":20000}`.
///
/// Power lists of length one are broadcast to every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerTrajectory {
    Constant {
        powers: Vec<f64>,
    },
    /// `mid + half * sin(2 pi t / period + phase_u)` within `[low, high]`.
    Sinusoidal {
        low: f64,
        high: f64,
        period: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<f64>>,
    },
    /// Piecewise constant; each segment draws fresh per-user powers
    /// uniformly from `[low, high]`.
    Stepwise {
        segment_length: usize,
        low: f64,
        high: f64,
    },
    /// Per-user powers drawn once from a normal distribution truncated to
    /// nonnegative values, then held.
    Gaussian {
        mean: f64,
        stddev: f64,
    },
    /// `before` until sample `at`, `after` from then on.
    Switch {
        before: Vec<f64>,
        after: Vec<f64>,
        at: usize,
    },
}

impl PowerTrajectory {
    /// Binds the trajectory to `n` users and a seed for its random parts.
    pub fn schedule(&self, n: usize, seed: u64) -> Result<PowerSchedule> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let broadcast = |v: &[f64]| -> Result<Vec<f64>> {
            let out = match v.len() {
                1 => vec![v[0]; n],
                len if len == n => v.to_vec(),
                len => {
                    return Err(Error::DimensionMismatch(format!(
                        "power list has {len} entries for {n} users"
                    )))
                }
            };
            if out.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidArgument("powers must be finite and nonnegative".into()));
            }
            Ok(out)
        };
        let resolved = match self {
            PowerTrajectory::Constant { powers } => Resolved::Fixed(broadcast(powers)?),
            PowerTrajectory::Sinusoidal { low, high, period, phases } => {
                if !(0.0 <= *low && low <= high && high.is_finite()) || !(*period > 0.0) {
                    return bad(format!("sinusoid needs 0 <= low <= high and period > 0, got {low}, {high}, {period}"));
                }
                let phases = match phases {
                    None => vec![0.0; n],
                    Some(p) if p.len() == n => p.clone(),
                    Some(p) => {
                        return Err(Error::DimensionMismatch(format!(
                            "{} phases for {n} users",
                            p.len()
                        )))
                    }
                };
                Resolved::Sinusoid { low: *low, high: *high, period: *period, phases }
            }
            PowerTrajectory::Stepwise { segment_length, low, high } => {
                if *segment_length == 0 || !(0.0 <= *low && low <= high && high.is_finite()) {
                    return bad("stepwise needs segment_length > 0 and 0 <= low <= high".into());
                }
                Resolved::Steps { len: *segment_length, low: *low, high: *high }
            }
            PowerTrajectory::Gaussian { mean, stddev } => {
                if !mean.is_finite() || !(*stddev >= 0.0) || (*mean <= 0.0 && *stddev == 0.0) {
                    return bad(format!("gaussian powers need finite mean and stddev >= 0, got {mean}, {stddev}"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let draws = (0..n).map(|_| truncated_normal(*mean, *stddev, &mut rng)).collect();
                Resolved::Fixed(draws)
            }
            PowerTrajectory::Switch { before, after, at } => Resolved::Switch {
                before: broadcast(before)?,
                after: broadcast(after)?,
                at: *at,
            },
        };
        Ok(PowerSchedule { n, seed, resolved })
    }
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, stddev: f64, rng: &mut R) -> f64 {
    if stddev == 0.0 {
        return mean;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + stddev * z;
        if v >= 0.0 {
            return v;
        }
    }
}

#[derive(Debug, Clone)]
enum Resolved {
    Fixed(Vec<f64>),
    Sinusoid { low: f64, high: f64, period: f64, phases: Vec<f64> },
    Steps { len: usize, low: f64, high: f64 },
    Switch { before: Vec<f64>, after: Vec<f64>, at: usize },
}

/// A trajectory bound to a user count; powers at any sample index are
/// reproducible without replaying earlier samples.
#[derive(Debug, Clone)]
pub struct PowerSchedule {
    n: usize,
    seed: u64,
    resolved: Resolved,
}

impl PowerSchedule {
    pub fn users(&self) -> usize {
        self.n
    }

    pub fn powers_at(&self, t: usize) -> Vec<f64> {
        match &self.resolved {
            Resolved::Fixed(p) => p.clone(),
            Resolved::Sinusoid { low, high, period, phases } => {
                let mid = 0.5 * (low + high);
                let half = 0.5 * (high - low);
                let w = 2.0 * std::f64::consts::PI * t as f64 / period;
                phases.iter().map(|ph| mid + half * (w + ph).sin()).collect()
            }
            Resolved::Steps { len, low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream((t / len) as u64);
                (0..self.n).map(|_| rng.random_range(*low..=*high)).collect()
            }
            Resolved::Switch { before, after, at } => {
                if t < *at {
                    before.clone()
                } else {
                    after.clone()
                }
            }
        }
    }

    /// `n x L` matrix of powers for samples `start..start + l`.
    pub fn window(&self, start: usize, l: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, l);
        for j in 0..l {
            out.set_column(j, &DVector::from_vec(self.powers_at(start + j)));
        }
        out
    }
}

/// Gaussian channel noise `N(mean, covariance)`.
///
/// The covariance must be symmetric positive semidefinite; a zero matrix
/// models a noiseless channel. Estimators that need an invertible model
/// covariance check [`NoiseModel::is_positive_definite`] themselves.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    known_at_receiver: bool,
    factor: DMatrix<f64>,
    min_eigenvalue: f64,
}

impl NoiseModel {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, known_at_receiver: bool) -> Result<Self> {
        let m = mean.len();
        if covariance.shape() != (m, m) || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "noise mean has {m} entries but covariance is {:?}",
                covariance.shape()
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("noise parameters must be finite".into()));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidArgument("noise covariance is not symmetric".into()));
        }
        let eig = covariance.clone().symmetric_eigen();
        let scale = covariance.amax().max(f64::MIN_POSITIVE);
        let min_eigenvalue = eig.eigenvalues.min();
        if min_eigenvalue < -1e-12 * scale {
            return Err(Error::InvalidArgument("noise covariance is not positive semidefinite".into()));
        }
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self { mean, covariance, known_at_receiver, factor, min_eigenvalue })
    }

    /// Zero-mean white noise `variance * I`.
    pub fn white(m: usize, variance: f64, known_at_receiver: bool) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!("noise variance {variance} must be >= 0")));
        }
        Self::new(DVector::zeros(m), DMatrix::identity(m, m) * variance, known_at_receiver)
    }

    pub fn noiseless(m: usize) -> Self {
        Self::white(m, 0.0, true).expect("zero variance is valid")
    }

    pub fn chips(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn known_at_receiver(&self) -> bool {
        self.known_at_receiver
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue > 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.chips(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.factor * z
    }
}

/// White noise for a target `Eb/N0`.
///
/// With unit-norm signatures and one bit per symbol, the received energy per
/// bit of a user equals its power, and `N0 = 2 sigma^2`, so
/// `sigma^2 = mean(powers) / (2 * 10^(EbN0_dB / 10))`.
pub fn ebno_to_noise(ebn0_db: f64, s: &SignatureMatrix, nominal_powers: &[f64]) -> Result<NoiseModel> {
    NoiseModel::white(s.chips(), ebno_to_variance(ebn0_db, nominal_powers)?, true)
}

pub fn ebno_to_variance(ebn0_db: f64, nominal_powers: &[f64]) -> Result<f64> {
    if ebn0_db.is_nan() || ebn0_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("Eb/N0 {ebn0_db} dB")));
    }
    if nominal_powers.is_empty() {
        return Err(Error::InvalidArgument("no nominal powers".into()));
    }
    let mean = nominal_powers.iter().sum::<f64>() / nominal_powers.len() as f64;
    Ok(mean / (2.0 * 10f64.powf(ebn0_db / 10.0)))
}

/// Received vectors and their empirical covariance.
#[derive(Debug, Clone)]
pub struct ObservationBatch {
    /// `m x L`, one received vector per column.
    pub ys: DMatrix<f64>,
    /// Empirical covariance of `ys` around the noise mean.
    pub w: DMatrix<f64>,
    pub alpha: f64,
}

impl ObservationBatch {
    pub fn new(ys: DMatrix<f64>, mean: &DVector<f64>, alpha: f64) -> Result<Self> {
        let w = empirical_covariance(&ys, mean, alpha)?;
        Ok(Self { ys, w, alpha })
    }

    pub fn len(&self) -> usize {
        self.ys.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.ncols() == 0
    }
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct Simulation {
    pub batch: ObservationBatch,
    /// `n x L` true powers per sample.
    pub powers: DMatrix<f64>,
    /// `n x L` transmitted symbols.
    pub inputs: DMatrix<f64>,
}

/// Simulates `l` channel uses starting at sample 0 of the schedule.
///
/// The symbols equal `gen_inputs(dist, n, l, seed)`; noise comes from an
/// independent stream of the same seed. The batch covariance is the plain
/// average (`alpha = 1`).
pub fn simulate(
    s: &SignatureMatrix,
    schedule: &PowerSchedule,
    dist: InputDistribution,
    noise: &NoiseModel,
    l: usize,
    seed: u64,
) -> Result<Simulation> {
    simulate_from(s, schedule, 0, dist, noise, l, seed)
}

/// Like [`simulate`] but reads the schedule from sample `start`.
pub fn simulate_from(
    s: &SignatureMatrix,
    schedule: &PowerSchedule,
    start: usize,
    dist: InputDistribution,
    noise: &NoiseModel,
    l: usize,
    seed: u64,
) -> Result<Simulation> {
    let (m, n) = (s.chips(), s.users());
    if schedule.users() != n {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} users, signature matrix {n}",
            schedule.users()
        )));
    }
    if noise.chips() != m {
        return Err(Error::DimensionMismatch(format!("noise is {}-dimensional, expected {m}", noise.chips())));
    }
    if l == 0 {
        return Err(Error::EmptyBatch);
    }
    let inputs = gen_inputs(dist, n, l, seed);
    let powers = schedule.window(start, l);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut ys = DMatrix::zeros(m, l);
    for j in 0..l {
        let amplitudes = powers.column(j).map(f64::sqrt);
        let tx = s.matrix() * inputs.column(j).component_mul(&amplitudes);
        ys.set_column(j, &(tx + noise.sample(&mut noise_rng)));
    }
    let batch = ObservationBatch::new(ys, noise.mean(), 1.0)?;
    Ok(Simulation { batch, powers, inputs })
}

/// `W = c * sum_j alpha^(L-j) (Y_j - mu)(Y_j - mu)^T` with weights
/// normalised to sum to one (`c = 1/L` when `alpha = 1`).
pub fn empirical_covariance(ys: &DMatrix<f64>, mu: &DVector<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    let (m, l) = ys.shape();
    if l == 0 {
        return Err(Error::EmptyBatch);
    }
    if mu.len() != m {
        return Err(Error::DimensionMismatch(format!("mean has {} entries, vectors {m}", mu.len())));
    }
    let c = if alpha == 1.0 { 1.0 / l as f64 } else { (1.0 - alpha) / (1.0 - alpha.powi(l as i32)) };
    let mut w = DMatrix::zeros(m, m);
    for (j, y) in ys.column_iter().enumerate() {
        let d = y - mu;
        let weight = c * alpha.powi((l - 1 - j) as i32);
        w.ger(weight, &d, &d, 1.0);
    }
    Ok(w)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("forgetting factor {alpha} outside (0, 1]")));
    }
    Ok(())
}

/// Streaming form of [`empirical_covariance`]. Each push decays the running
/// sum and its total weight by `alpha`, so the normalised result equals the
/// batch formula over everything pushed so far.
#[derive(Debug, Clone)]
pub struct ForgettingCovariance {
    alpha: f64,
    mu: DVector<f64>,
    sum: DMatrix<f64>,
    weight: f64,
    count: usize,
}

impl ForgettingCovariance {
    pub fn new(mu: DVector<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let m = mu.len();
        Ok(Self { alpha, mu, sum: DMatrix::zeros(m, m), weight: 0.0, count: 0 })
    }

    pub fn push(&mut self, y: &DVector<f64>) {
        let d = y - &self.mu;
        self.sum *= self.alpha;
        self.sum.ger(1.0, &d, &d, 1.0);
        self.weight = self.alpha * self.weight + 1.0;
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(&self.sum / self.weight)
    }
}

/// Writes one received vector per CSV row.
pub fn write_batch_csv(ys: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for y in ys.column_iter() {
        w.write_record(y.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        if let Some(first) = cols.first() {
            if first.len() != v.len() {
                return Err(Error::DimensionMismatch(format!("row {} has {} entries", i + 1, v.len())));
            }
        }
        cols.push(v);
    }
    let m = cols.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(DMatrix::from_fn(m, cols.len(), |i, j| cols[j][i]))
}

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{InputDistribution, PowerTrajectory};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Method};
use crate::signatures::{
    construct_known_noise, construct_unknown_noise, load_matrix, random_binary, random_uniform,
    search_uniquely_decodable, Alphabet, SignatureMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Convergence,
    Tracking,
    Ber,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Convergence => "convergence",
            Scenario::Tracking => "tracking",
            Scenario::Ber => "ber",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKnowledge {
    Known,
    Unknown,
}

/// Where the signature matrix of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSource {
    /// Recursive identifiable family, truncated to `n` users.
    Construct { m: usize, n: usize, noise: NoiseKnowledge },
    /// Matrix file (`m n` header, then rows). Relative paths are resolved
    /// against the config file's directory when loaded through
    /// [`ExperimentConfig::load`].
    File { path: PathBuf },
    /// Seeded search for a uniquely decodable matrix whose powers are also
    /// identifiable with known noise.
    SearchUd {
        m: usize,
        n: usize,
        #[serde(default = "default_alphabet")]
        alphabet: Alphabet,
        #[serde(default = "default_search_trials")]
        trials: usize,
        #[serde(default = "default_one")]
        seed: u64,
    },
    /// One random draw, no checks.
    Random {
        m: usize,
        n: usize,
        #[serde(default = "default_alphabet")]
        alphabet: Alphabet,
        #[serde(default = "default_one")]
        seed: u64,
    },
}

fn default_alphabet() -> Alphabet {
    Alphabet::Binary
}
fn default_search_trials() -> usize {
    4
}
fn default_one() -> u64 {
    1
}

impl MatrixSource {
    pub fn load(&self) -> Result<SignatureMatrix> {
        match self {
            MatrixSource::Construct { m, n, noise: NoiseKnowledge::Known } => construct_known_noise(*m, *n),
            MatrixSource::Construct { m, n, noise: NoiseKnowledge::Unknown } => construct_unknown_noise(*m, *n),
            MatrixSource::File { path } => load_matrix(path),
            MatrixSource::SearchUd { m, n, alphabet, trials, seed } => {
                search_uniquely_decodable(*m, *n, *alphabet, *trials, *seed, true)?.ok_or_else(|| {
                    Error::InvalidArgument(format!("no uniquely decodable {m}x{n} matrix found in {trials} attempts"))
                })
            }
            MatrixSource::Random { m, n, alphabet, seed } => {
                if *m == 0 || *n == 0 {
                    return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(match alphabet {
                    Alphabet::Binary => random_binary(*m, *n, &mut rng),
                    Alphabet::Uniform => random_uniform(*m, *n, &mut rng),
                })
            }
        }
    }

    /// Short description for result headers.
    pub fn describe(&self) -> String {
        match self {
            MatrixSource::Construct { m, n, noise } => {
                let noise = if *noise == NoiseKnowledge::Known { "known" } else { "unknown" };
                format!("constructed {m}x{n} ({noise} noise)")
            }
            MatrixSource::File { path } => format!("file {}", path.display()),
            MatrixSource::SearchUd { m, n, alphabet, seed, .. } => {
                format!("searched uniquely decodable {m}x{n} ({alphabet:?}, seed {seed})").to_lowercase()
            }
            MatrixSource::Random { m, n, alphabet, seed } => {
                format!("random {m}x{n} ({alphabet:?}, seed {seed})").to_lowercase()
            }
        }
    }
}

/// Receiver power knowledge in BER runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerMode {
    /// True instantaneous powers.
    Perfect,
    /// Known-noise least squares on the forgetting-factor covariance.
    Subopt,
    /// Decode-and-estimate on the most recent window.
    Iterative,
    /// All amplitudes set to one.
    None,
}

impl BerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BerMode::Perfect => "perfect",
            BerMode::Subopt => "subopt",
            BerMode::Iterative => "iterative",
            BerMode::None => "none",
        }
    }
}

/// One experiment, read from JSON. See the README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub matrix: MatrixSource,
    pub trajectory: PowerTrajectory,
    /// Defaults to Gaussian, or binary when a decoder is involved.
    #[serde(default)]
    pub inputs: Option<InputDistribution>,
    pub ebn0_db: Vec<f64>,
    pub seeds: Vec<u64>,

    /// Convergence: batch lengths.
    #[serde(default)]
    pub lengths: Vec<usize>,
    /// Convergence: estimate from the exact model covariance instead of
    /// sampled data.
    #[serde(default)]
    pub exact_covariance: bool,

    /// Tracking: channel uses per run.
    #[serde(default)]
    pub samples: usize,
    /// Convergence and tracking.
    #[serde(default)]
    pub estimators: Vec<EstimatorConfig>,
    /// Tracking: samples before the first recorded estimate. Defaults to
    /// the largest estimator window.
    #[serde(default)]
    pub warmup: Option<usize>,
    /// Tracking: an estimate is recorded every `record_stride` samples.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Tracking and BER: estimates are refreshed every `update_stride`
    /// samples.
    #[serde(default = "default_stride")]
    pub update_stride: usize,

    /// BER: receiver modes.
    #[serde(default)]
    pub modes: Vec<BerMode>,
    /// BER: decoded bits per (Eb/N0, mode) point, split over the seeds.
    #[serde(default = "default_bits")]
    pub bits_per_point: u64,
    /// BER subopt mode: forgetting factor.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// BER iterative mode: window length.
    #[serde(default = "default_window")]
    pub window: usize,
    /// BER iterative mode: rounds per estimate.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_stride() -> usize {
    1
}
fn default_bits() -> u64 {
    100_000
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

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; a relative matrix path is taken
    /// relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let MatrixSource::File { path: matrix } = &mut cfg.matrix {
            if matrix.is_relative() {
                if let Some(dir) = path.parent() {
                    *matrix = dir.join(&*matrix);
                }
            }
        }
        Ok(cfg)
    }

    pub fn input_distribution(&self) -> InputDistribution {
        self.inputs.unwrap_or(if self.needs_decoder() { InputDistribution::Binary } else { InputDistribution::Gaussian })
    }

    fn needs_decoder(&self) -> bool {
        match self.scenario {
            Scenario::Ber => true,
            _ => self.estimators.iter().any(|e| e.method == Method::Iterative),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.ebn0_db.is_empty() {
            return bad("ebn0_db must not be empty");
        }
        if self.ebn0_db.iter().any(|v| !v.is_finite()) {
            return bad("ebn0_db values must be finite");
        }
        if self.record_stride == 0 || self.update_stride == 0 {
            return bad("record_stride and update_stride must be positive");
        }
        for e in &self.estimators {
            e.validate()?;
        }
        if self.needs_decoder() && self.input_distribution() != InputDistribution::Binary {
            return bad("decoder-based estimation needs binary inputs");
        }
        match self.scenario {
            Scenario::Convergence => {
                if self.lengths.is_empty() || self.lengths.contains(&0) {
                    return bad("convergence needs a nonempty list of positive lengths");
                }
                if self.estimators.is_empty() {
                    return bad("convergence needs at least one estimator");
                }
                if self.exact_covariance && self.estimators.iter().any(|e| e.method == Method::Iterative) {
                    return bad("exact_covariance applies to covariance-based estimators only");
                }
            }
            Scenario::Tracking => {
                if self.samples == 0 {
                    return bad("tracking needs samples > 0");
                }
                if self.estimators.is_empty() {
                    return bad("tracking needs at least one estimator");
                }
                if self.warmup.is_some_and(|w| w == 0 || w > self.samples) {
                    return bad("warmup must lie in 1..=samples");
                }
            }
            Scenario::Ber => {
                if self.modes.is_empty() {
                    return bad("ber needs at least one receiver mode");
                }
                if self.bits_per_point == 0 {
                    return bad("bits_per_point must be positive");
                }
                if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    return bad("alpha must lie in (0, 1]");
                }
                if self.window == 0 || self.iterations == 0 {
                    return bad("window and iterations must be positive");
                }
            }
        }
        Ok(())
    }
}

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdma_core::experiments::{run, ExperimentConfig, Scenario};
use cdma_core::signatures::{
    construct_known_noise, construct_unknown_noise, load_matrix, save_matrix, search_uniquely_decodable,
    verify_uniquely_decodable, Alphabet,
};
use cdma_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

/// Configuration or input errors.
const EXIT_CONFIG: u8 = 2;
/// Numerical failures during a run.
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cdma-lab", version, about = "Power estimation experiments for overloaded synchronous CDMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a signature matrix whose user powers are identifiable.
    Construct {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum)]
        noise: Noise,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the identifiability report of a matrix file as JSON.
    Audit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        noise: Noise,
    },
    /// Seeded search for a uniquely decodable matrix.
    SearchUd {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = AlphabetArg::Binary)]
        alphabet: AlphabetArg,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Only accept matrices whose powers are identifiable with known noise.
        #[arg(long)]
        require_estimable: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate error against batch length.
    Convergence(RunArgs),
    /// Track time-varying powers.
    Track(RunArgs),
    /// Bit error rates by receiver power knowledge.
    Ber(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write JSON lines instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Noise {
    Known,
    Unknown,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AlphabetArg {
    Binary,
    Uniform,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { EXIT_CONFIG } else { EXIT_NUMERIC })
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Construct { m, n, noise, out } => {
            let s = match noise {
                Noise::Known => construct_known_noise(m, n)?,
                Noise::Unknown => construct_unknown_noise(m, n)?,
            };
            save_matrix(&s, &out)
        }
        Command::Audit { input, noise } => {
            let s = load_matrix(&input)?;
            let report = s.estimability(matches!(noise, Noise::Known));
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::SearchUd { m, n, alphabet, trials, seed, require_estimable, out } => {
            let alphabet = match alphabet {
                AlphabetArg::Binary => Alphabet::Binary,
                AlphabetArg::Uniform => Alphabet::Uniform,
            };
            let s = search_uniquely_decodable(m, n, alphabet, trials, seed, require_estimable)?.ok_or_else(|| {
                Error::InvalidArgument(format!("no uniquely decodable {m}x{n} matrix found in {trials} attempts"))
            })?;
            debug_assert!(verify_uniquely_decodable(&s)?);
            save_matrix(&s, &out)
        }
        Command::Convergence(args) => experiment(Scenario::Convergence, &args),
        Command::Track(args) => experiment(Scenario::Tracking, &args),
        Command::Ber(args) => experiment(Scenario::Ber, &args),
    }
}

fn experiment(expected: Scenario, args: &RunArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig::load(&args.config)?;
    if cfg.scenario != expected {
        return Err(Error::InvalidArgument(format!(
            "{} names scenario {} but the {} command was used",
            args.config.display(),
            cfg.scenario.as_str(),
            expected.as_str()
        )));
    }
    let table = run(&cfg)?;
    write_table(&args.out, |out| if args.json { table.write_json_lines(out) } else { table.write_csv(out) })?;
    eprintln!("wrote {} rows to {}", table.len(), args.out.display());
    Ok(())
}

fn write_table(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<(), Error>) -> Result<(), Error> {
    let mut out = BufWriter::new(File::create(path)?);
    write(&mut out)?;
    out.flush()?;
    Ok(())
}

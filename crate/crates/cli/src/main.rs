//! `ddf`: build dimension-drop sequences, answer amalgamation requests, run
//! intertwining and ssa scenarios, and verify the certificates they emit.
//!
//! Exit codes: 0 pass, 2 audit or defect failure, 3 infeasible, 4 malformed
//! input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "ddf", version, about = "Dimension-drop algebra sequences and intertwining certificates")]
struct Cli {
    /// Engine configuration (JSON); command-line flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Verify a certificate and exit
    #[arg(long, value_name = "PATH")]
    verify: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
pub struct SeqSource {
    /// Seed pair of the first stage
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub seed: Option<Vec<u64>>,
    /// Number of stages
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub stages: Option<u64>,
    /// Mesh of each step, as a rational string
    #[arg(long, value_name = "R")]
    pub mesh: Option<String>,
    /// Read the sequence from a file instead of building it
    #[arg(long, value_name = "PATH", conflicts_with_all = ["seed", "stages"])]
    pub input: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a sequence and audit it
    Build {
        #[arg(long, num_args = 2, value_names = ["P", "Q"], required = true)]
        seed: Vec<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8), required = true)]
        stages: u64,
        #[arg(long, value_name = "R")]
        mesh: Option<String>,
        /// Top-stage trace measure, `{"cdf": {"x": [...], "y": [...]}}`
        #[arg(long, value_name = "PATH")]
        measure: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Answer one amalgamation request at a stage
    Amalgamate {
        #[command(flatten)]
        seq: SeqSource,
        #[arg(long, default_value_t = 1)]
        stage: usize,
        /// Morphism gamma out of the stage (JSON); defaults to a transport map
        #[arg(long, value_name = "PATH")]
        gamma: Option<PathBuf>,
        /// Trace measure on the target of gamma (JSON)
        #[arg(long, value_name = "PATH")]
        measure: Option<PathBuf>,
        #[arg(long, value_name = "R", default_value = "0.2")]
        epsilon: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Approximately intertwine two sequences
    Intertwine(PairArgs),
    /// Intertwine with preparation at later stages
    WeakIntertwine(PairArgs),
    /// One step of the strongly self-absorbing argument
    SsaStep {
        #[command(flatten)]
        seq: SeqSource,
        #[arg(long, default_value_t = 1)]
        stage: usize,
        #[arg(long, value_name = "R", default_value = "0.1")]
        epsilon: f64,
        /// identity or flip
        #[arg(long, default_value = "flip")]
        half_flip: String,
        /// Corpus names making up the finite set G
        #[arg(long, value_delimiter = ',', default_value = "unit")]
        generators: Vec<String>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Recompute the defects of a certificate
    Verify {
        #[arg(value_name = "PATH")]
        cert: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct PairArgs {
    /// Sequence file for side A
    #[arg(long, value_name = "PATH")]
    pub a: Option<PathBuf>,
    /// Sequence file for side B
    #[arg(long, value_name = "PATH")]
    pub b: Option<PathBuf>,
    /// Seed pair for side A when no file is given
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub seed: Option<Vec<u64>>,
    /// Seed pair for side B when no file is given
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub seed_b: Option<Vec<u64>>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=8), default_value_t = 2)]
    pub stages: u64,
    #[arg(long, value_name = "R")]
    pub mesh: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
    #[arg(long, value_name = "R", default_value = "1.0")]
    pub epsilon: f64,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = (|| {
        let cfg = commands::load_config(cli.config.as_deref())?;
        if let Some(path) = &cli.verify {
            return commands::verify(path, &cfg);
        }
        match cli.command {
            None => Err(Failure::malformed("no command given (try --help)")),
            Some(Command::Build { seed, stages, mesh, measure, out }) => {
                commands::build(&seed, stages as usize, mesh.as_deref(), measure.as_deref(), out.as_deref(), &cfg)
            }
            Some(Command::Amalgamate { seq, stage, gamma, measure, epsilon, out }) => {
                commands::amalgamate(&seq, stage, gamma.as_deref(), measure.as_deref(), epsilon, out.as_deref(), &cfg)
            }
            Some(Command::Intertwine(p)) => commands::intertwine(&p, false, &cfg),
            Some(Command::WeakIntertwine(p)) => commands::intertwine(&p, true, &cfg),
            Some(Command::SsaStep { seq, stage, epsilon, half_flip, generators, out }) => {
                commands::ssa_step(&seq, stage, epsilon, &half_flip, &generators, out.as_deref(), &cfg)
            }
            Some(Command::Verify { cert }) => commands::verify(&cert, &cfg),
        }
    })();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cloudshare::error::Error;
use cloudshare::harness::{self, ExperimentConfig, Suite, VerifyOptions};
use cloudshare::mechanism::MechanismKind;

#[derive(Parser)]
#[command(
    name = "cloudshare",
    version,
    about = "Cost-sharing mechanisms for shared cloud optimizations"
)]
struct Cli {
    /// Worker threads for trial-level parallelism.
    #[arg(long, global = true, env = "CLOUDSHARE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment sweep and write its CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite and report every violation.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Games per mechanism; defaults to the suite's own corpus size.
        #[arg(long)]
        games: Option<u32>,
        /// Also run the pay-your-bid positive control (truthfulness only).
        #[arg(long)]
        include_naive: bool,
    },
    /// Run one mechanism on one game file and print the payments.
    Replay {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        mechanism: String,
    },
}

const VIOLATION: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn exit_code(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(CONFIG_ERROR)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    }
    match cli.command {
        Command::Run { config, out } => {
            let config = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return exit_code(&e),
            };
            match harness::run_to_dir(&config, out.as_deref()) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_code(&e),
            }
        }
        Command::Verify {
            suite,
            seed,
            games,
            include_naive,
        } => {
            let suite: Suite = match suite.parse() {
                Ok(s) => s,
                Err(e) => return exit_code(&e),
            };
            match harness::verify(
                suite,
                &VerifyOptions {
                    seed,
                    games,
                    include_naive,
                },
            ) {
                Ok(report) => {
                    print!("{report}");
                    if report.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(VIOLATION)
                    }
                }
                Err(e) => exit_code(&e),
            }
        }
        Command::Replay { game, mechanism } => {
            let kind: MechanismKind = match mechanism.parse() {
                Ok(k) => k,
                Err(e) => return exit_code(&e),
            };
            match harness::load_game(&game).and_then(|g| harness::replay(&g, kind)) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => exit_code(&e),
            }
        }
    }
}

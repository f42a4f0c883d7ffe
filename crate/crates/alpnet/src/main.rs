use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use alpnet::commands::{self, exit_code, EXIT_OK, EXIT_UNDECIDED};
use alpnet::core::beamforming::{BeamPolicy, MaxSirOptions};
use alpnet::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "alpnet", version, about = "Admission control with active link protection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the phase schedule of one or more scenarios and write traces.
    Run {
        #[arg(long, num_args = 1.., required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Feasibility indices and regime of the initial network.
    Classify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Largest common SIR target of a MIMO scenario under a beam policy.
    Maxsir {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        policy: Policy,
        #[arg(long)]
        seed: Option<u64>,
        /// Alternating rounds per bisection probe.
        #[arg(long)]
        rounds: Option<usize>,
        /// Relative width of the final bracket.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Audit the interference axioms and the power-cap conditions.
    Check {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    FixedSvd,
    ReceiveOnly,
    Full,
}

impl From<Policy> for BeamPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::FixedSvd => BeamPolicy::FixedSvd,
            Policy::ReceiveOnly => BeamPolicy::ReceiveOnly,
            Policy::Full => BeamPolicy::FullAlternating,
        }
    }
}

fn print<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    // a closed pipe downstream is not an error of ours
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn execute(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let mut code = EXIT_OK;
            for (path, result) in scenario.iter().zip(commands::run(&scenario, &out, seed)) {
                match result {
                    Ok(report) => {
                        if report.budget_exceeded {
                            code = code.max(EXIT_UNDECIDED);
                        }
                        print(&report);
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        code = code.max(exit_code(&e));
                    }
                }
            }
            Ok(code)
        }
        Command::Classify { scenario, seed } => {
            let report = commands::classify_scenario(&commands::load(&scenario, seed)?)?;
            print(&report);
            Ok(if report.decided() { EXIT_OK } else { EXIT_UNDECIDED })
        }
        Command::Maxsir {
            scenario,
            policy,
            seed,
            rounds,
            tol,
        } => {
            let mut opts = MaxSirOptions::default();
            if let Some(r) = rounds {
                opts.rounds = r;
            }
            if let Some(t) = tol {
                opts.tol = t;
            }
            print(&commands::maxsir(
                &commands::load(&scenario, seed)?,
                policy.into(),
                &opts,
            )?);
            Ok(EXIT_OK)
        }
        Command::Check { scenario, seed, trials } => {
            let report = commands::check(&commands::load(&scenario, seed)?, trials)?;
            print(&report);
            Ok(if report.passed() { EXIT_OK } else { EXIT_UNDECIDED })
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

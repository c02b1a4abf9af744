//! `ledgerair`: scenario runs, tamper demos, mode comparison, log
//! verification and the HTTP gateway.

mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ledgerair_core::gateway::{ADMIN_TOKEN_ENV, CUSTOMER_TOKEN_ENV};
use ledgerair_core::ledger::{verify_log_bytes, Verdict};
use ledgerair_core::platform::load_membership;
use ledgerair_core::sim::{compare_modes, run, tamper_demo, Scenario, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "ledgerair",
    version,
    about = "Permissioned reservation ledger harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and print its metrics report.
    Run {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Chain log to write; defaults to `<scenario name>.alrb`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Flip one bit of a block in a chain log and verify the result.
    Tamper {
        log: PathBuf,
        #[arg(long)]
        height: u64,
        /// Byte offset within the block's encoding.
        #[arg(long)]
        offset: usize,
    },
    /// Run a scenario in ledger and baseline mode and compare divergence.
    Compare {
        scenario: PathBuf,
        /// Print the full comparison as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Verify a chain log against its membership file.
    Verify { log: PathBuf },
    /// Serve the /v1 API for a scenario's cluster and seed data.
    Serve {
        scenario: Option<PathBuf>,
        /// Same as the positional scenario path.
        #[arg(long, conflicts_with = "scenario")]
        cluster: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Mirror committed blocks to this log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, env = CUSTOMER_TOKEN_ENV, hide_env_values = true)]
        customer_token: String,
        #[arg(long, env = ADMIN_TOKEN_ENV, hide_env_values = true)]
        admin_token: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Other(String),
}

/// Exit status: 0 success, 1 failed invariant or invalid chain, 2 error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n"))
            .map_err(|e| CliError::Other(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> Result<bool, CliError> {
    match command {
        Command::Run { scenario, out, log } => {
            let scenario = Scenario::load(&scenario)?;
            let log = log.unwrap_or_else(|| PathBuf::from(format!("{}.alrb", scenario.name)));
            let report = run(&scenario, Some(&log))?;
            write_out(out.as_deref(), &report.to_json())?;
            for i in report.invariants.iter().filter(|i| !i.held) {
                eprintln!("invariant violated: {} ({})", i.name, i.detail);
            }
            Ok(report.passed())
        }
        Command::Tamper {
            log,
            height,
            offset,
        } => {
            let outcome = tamper_demo(&log, height, offset)?;
            println!(
                "flipped byte {} of block {height} (file offset {}): {:#04x} -> {:#04x}",
                outcome.offset, outcome.file_offset, outcome.before, outcome.after
            );
            println!("verdict: {}", outcome.verdict);
            Ok(true)
        }
        Command::Compare { scenario, json } => {
            let c = compare_modes(&Scenario::load(&scenario)?)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&c).expect("comparison serializes")
                );
            } else {
                println!("scenario: {}", c.scenario);
                println!("ledger divergence: {}", c.ledger_divergence);
                println!("baseline divergence: {}", c.baseline_divergence);
                match c.reduction_pct {
                    Some(r) => println!("reduction: {r:.1}%"),
                    None => println!("reduction: n/a (baseline shows no divergence)"),
                }
            }
            Ok(c.ledger.passed() && c.baseline.passed())
        }
        Command::Verify { log } => {
            let bytes = std::fs::read(&log)
                .map_err(|e| CliError::Other(format!("{}: {e}", log.display())))?;
            let members =
                load_membership(&log).map_err(|e| CliError::Other(format!("membership: {e}")))?;
            let verdict = verify_log_bytes(&bytes, &members);
            println!("{verdict}");
            Ok(verdict == Verdict::Ok)
        }
        Command::Serve {
            scenario,
            cluster,
            listen,
            seed,
            log,
            customer_token,
            admin_token,
        } => {
            let path = scenario
                .or(cluster)
                .ok_or_else(|| CliError::Other("a scenario path is required".into()))?;
            let mut config = Scenario::load(&path)?.platform_config();
            if let Some(seed) = seed {
                config.seed = seed;
            }
            serve::serve(config, log.as_deref(), &listen, customer_token, admin_token)
                .map_err(CliError::Other)?;
            Ok(true)
        }
    }
}

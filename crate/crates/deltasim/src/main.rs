//! Scenario-driven command line interface.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deltasim::checker::{brute_force_oracle, lattice_law_suite};
use deltasim::message::{CrdtKind, Style};
use deltasim::runner::{run_scenario, sweep};
use deltasim::scenario::parse_scenario;

#[derive(Parser)]
#[command(
    name = "deltasim",
    about = "Delta-state CRDT simulator with strong-eventual-consistency verdicts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file: transcript, verdict, summary.
    Run {
        /// Scenario file path.
        file: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write transcript.log, verdict.txt, summary.txt into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario across a seed range and aggregate verdicts.
    Sweep {
        /// Scenario file path.
        file: PathBuf,
        /// Seed range `A..B` (inclusive).
        #[arg(long)]
        seeds: String,
    },
    /// Exhaustively check convergence over every delivery schedule at small
    /// scope.
    Oracle {
        /// CRDT kind: gcounter | gset | pncounter | twopset.
        #[arg(long)]
        crdt: String,
        /// Wire style: state | delta | delta-refined | op.
        #[arg(long, default_value = "delta")]
        style: String,
        /// Number of replicas (1..=3).
        #[arg(long)]
        replicas: u32,
        /// Number of operations (0..=4).
        #[arg(long)]
        ops: u32,
        /// Copies delivered per message per replica (1..=2).
        #[arg(long, default_value_t = 1)]
        max_dup: u32,
    },
    /// Randomized lattice-law suite: commutativity, associativity,
    /// idempotency, inflation.
    Laws {
        /// CRDT kind: gcounter | gset | pncounter | twopset.
        #[arg(long)]
        crdt: String,
        /// Number of randomized trials.
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        /// RNG seed for the trial stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_kind(s: &str) -> Result<CrdtKind, String> {
    s.parse()
}

fn parse_style(s: &str) -> Result<Style, String> {
    s.parse()
}

fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a range like 0..99, got `{s}`"))?;
    let first = a.parse::<u64>().map_err(|e| e.to_string())?;
    let last = b.trim_start_matches('=').parse::<u64>().map_err(|e| e.to_string())?;
    Ok((first, last))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cli: Cli) -> Result<i32, (i32, String)> {
    match cli.command {
        Command::Run { file, seed, out } => {
            let text = fs::read_to_string(&file)
                .map_err(|e| (2, format!("cannot read {}: {e}", file.display())))?;
            let sc = parse_scenario(&text).map_err(|e| (2, e.to_string()))?;
            let artifacts = run_scenario(&sc, seed).map_err(|e| (e.exit_code(), e.to_string()))?;
            if let Some(dir) = out {
                artifacts
                    .write_to(&dir)
                    .map_err(|e| (1, format!("cannot write artifacts: {e}")))?;
            }
            print!("{}", artifacts.verdict_text());
            println!("---");
            print!("{}", artifacts.summary);
            Ok(artifacts.exit_code)
        }
        Command::Sweep { file, seeds } => {
            let text = fs::read_to_string(&file)
                .map_err(|e| (2, format!("cannot read {}: {e}", file.display())))?;
            let sc = parse_scenario(&text).map_err(|e| (2, e.to_string()))?;
            let (first, last) = parse_seed_range(&seeds).map_err(|e| (2, e))?;
            let report = sweep(&sc, first, last).map_err(|e| (e.exit_code(), e.to_string()))?;
            print!("{}", report.render());
            Ok(report.exit_code())
        }
        Command::Oracle {
            crdt,
            style,
            replicas,
            ops,
            max_dup,
        } => {
            let kind = parse_kind(&crdt).map_err(|e| (2, e))?;
            let style = parse_style(&style).map_err(|e| (2, e))?;
            let report = brute_force_oracle(kind, style, replicas, ops, max_dup)
                .map_err(|e| (2, e.to_string()))?;
            println!("{report}");
            Ok(if report.converged() { 0 } else { 1 })
        }
        Command::Laws { crdt, trials, seed } => {
            let kind = parse_kind(&crdt).map_err(|e| (2, e))?;
            let report = lattice_law_suite(kind, trials, seed);
            println!("{report}");
            Ok(if report.passed() { 0 } else { 1 })
        }
    }
}

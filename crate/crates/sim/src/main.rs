use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sada_sim::bytes::bytes_report;
use sada_sim::ident::compare_identification;
use sada_sim::{run, ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "sada", version, about = "Cluster aggregation scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its metrics report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification counts for locating bad sub-approvals.
    CompareIdent {
        #[arg(long = "n-v")]
        n_v: usize,
        #[arg(long = "n-bad")]
        n_bad: usize,
        #[arg(long)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Per-message byte accounting for the scenario's cluster.
    Bytes {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> Result<u8, Box<dyn std::error::Error>> {
    match command {
        Command::Run { scenario, seed, out } => {
            let mut config = ScenarioConfig::load(&scenario)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let report = run(&config)?;
            std::fs::write(&out, report.to_json()).map_err(|source| SimError::Io {
                path: out.display().to_string(),
                source,
            })?;
            for line in &report.unexpected {
                eprintln!("unexpected: {line}");
            }
            println!(
                "{} cycles, {} completed, {} flags, verdict {:?}",
                report.totals.cycles, report.totals.completed, report.totals.flags, report.verdict
            );
            Ok(report.verdict.exit_code() as u8)
        }
        Command::CompareIdent {
            n_v,
            n_bad,
            trials,
            seed,
            json,
        } => {
            let table = compare_identification(n_v, n_bad, trials, seed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.render());
            }
            Ok(0)
        }
        Command::Bytes { scenario, json } => {
            let report = bytes_report(&ScenarioConfig::load(&scenario)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render());
            }
            Ok(0)
        }
    }
}

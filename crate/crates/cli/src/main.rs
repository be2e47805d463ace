//! `lsdsim`: run scenarios and analyze their output.

mod selfcheck;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsdsim::analytics::{
    compare_lp_vs_hold, day_metrics, detect_arbitrages, positions_from_trace, write_findings, write_metrics,
    write_report, AnalyticsError, EventTrace, Histories, TickSeries,
};
use lsdsim::scenario::{run, write_outputs, RunError, ScenarioConfig};

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  internal invariant violation
  2  user or input error (bad flags, missing files, config or schema errors)";

#[derive(Parser)]
#[command(name = "lsdsim", version, about = "Liquid staking derivative market simulator", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, ticks.csv and manifest.json.
    #[command(after_help = EXIT_CODES)]
    Simulate {
        /// Scenario file, TOML or JSON (by `.json` extension).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-day realized volatility and price discrepancy from a tick series.
    #[command(after_help = EXIT_CODES)]
    Metrics {
        #[arg(long)]
        ticks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find staking and unstaking arbitrages in a trace.
    #[command(after_help = EXIT_CODES)]
    Detect {
        #[arg(long)]
        trace: PathBuf,
        /// Unix time from which unstaking is possible.
        #[arg(long)]
        shapella: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare each LP position against holding its initial assets.
    #[command(name = "lp-report", after_help = EXIT_CODES)]
    LpReport {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        histories: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the closed-form reference values and report PASS/FAIL.
    #[command(after_help = EXIT_CODES)]
    Selfcheck,
}

/// Message plus exit code.
struct Failure {
    code: u8,
    message: String,
}

fn user(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: message.to_string(),
    }
}

fn internal(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| user(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| user(format!("{}: {e}", path.display())))
}

fn analytics(path: &Path) -> impl Fn(AnalyticsError) -> Failure + '_ {
    move |e| match e {
        AnalyticsError::Math(_) => internal(format!("{}: {e}", path.display())),
        _ => user(format!("{}: {e}", path.display())),
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { config, out } => {
            let cfg = ScenarioConfig::from_path(&config).map_err(|e| user(format!("{}: {e}", config.display())))?;
            let result = run(&cfg).map_err(|e| match e {
                RunError::Config(e) => user(format!("{}: {e}", config.display())),
                RunError::Io(e) => user(e),
                RunError::Invariant(e) => internal(e),
            })?;
            write_outputs(&cfg, &result, &out).map_err(user)?;
        }
        Command::Metrics { ticks, out } => {
            let series = TickSeries::read_csv(open(&ticks)?).map_err(analytics(&ticks))?;
            write_metrics(&day_metrics(&series), create(&out)?).map_err(analytics(&out))?;
        }
        Command::Detect { trace, shapella, out } => {
            let t = EventTrace::read_csv(open(&trace)?).map_err(analytics(&trace))?;
            write_findings(&detect_arbitrages(&t, shapella), create(&out)?).map_err(analytics(&out))?;
        }
        Command::LpReport { trace, histories, out } => {
            let t = EventTrace::read_csv(open(&trace)?).map_err(analytics(&trace))?;
            let h = Histories::read_csv(open(&histories)?).map_err(analytics(&histories))?;
            let report = compare_lp_vs_hold(&positions_from_trace(&t, &h), &h);
            write_report(&report, create(&out)?).map_err(analytics(&out))?;
        }
        Command::Selfcheck => {
            let failed = selfcheck::run_all(&mut std::io::stdout());
            if failed > 0 {
                return Err(internal(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

//! `cflow`: run the experiments and diagnostics from the command line.
//!
//! Exit status is 0 when every acceptance check passes, 2 when a check
//! fails and 1 on usage or configuration errors. Errors are reported on
//! stderr as a single `error: <reason>` line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use cflow_core::config::{Config, Kind};
use cflow_core::harness::{self, Report};

#[derive(Parser, Debug)]
#[command(
    name = "cflow",
    version,
    about = "Heavy-tailed processes over conservative flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; kind defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// `key=value` applied after the file (repeatable), e.g. `alpha=1.2`.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "cflow-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weak limit of the scaled sample autocovariance.
    LimitLaw(Common),
    /// Sample autocorrelations against their limits.
    Acorr(Common),
    /// Growth exponent of the sample autocovariance.
    Rate(Common),
    /// Occupation-time law on the walk.
    Dk(Common),
    /// Boole's map: transfer residual, Hopf ratio, occupation scaling.
    BooleDiag(Common),
    /// Exact return-time identities and asymptotics.
    MarkovDiag(Common),
    /// Simulate paths and check the marginal law.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every path to paths.csv.
        #[arg(long)]
        dump_paths: bool,
    },
    /// Deterministic checks; no configuration needed.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Checks,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn finish(report: &Report, out: Option<&PathBuf>, cfg: Option<&Config>) -> Result<(), Failure> {
    if let Some(dir) = out {
        report
            .write(dir, cfg)
            .map_err(|e| Failure::Usage(one_line(&e.to_string())))?;
    }
    for line in report.check_lines() {
        println!("{line}");
    }
    if let Some(dir) = out {
        println!("wrote {}", dir.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn run_kind(kind: Kind, common: &Common, extra: &[String]) -> Result<(), Failure> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    let cfg = Config::load(common.config.as_deref(), Some(kind), &overrides)
        .map_err(|e| Failure::Usage(one_line(&e.to_string())))?;
    let report = harness::run(&cfg).map_err(|e| Failure::Usage(one_line(&e.to_string())))?;
    finish(&report, Some(&common.out), Some(&cfg))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::LimitLaw(c) => run_kind(Kind::LimitLaw, &c, &[]),
        Command::Acorr(c) => run_kind(Kind::Acorr, &c, &[]),
        Command::Rate(c) => run_kind(Kind::Rate, &c, &[]),
        Command::Dk(c) => run_kind(Kind::Dk, &c, &[]),
        Command::BooleDiag(c) => run_kind(Kind::BooleDiag, &c, &[]),
        Command::MarkovDiag(c) => run_kind(Kind::MarkovDiag, &c, &[]),
        Command::Simulate { common, dump_paths } => {
            let extra = if dump_paths {
                vec!["output.dump_paths=true".to_string()]
            } else {
                vec![]
            };
            run_kind(Kind::Simulate, &common, &extra)
        }
        Command::Selftest { out } => {
            let report = harness::selftest().map_err(|e| Failure::Usage(one_line(&e.to_string())))?;
            finish(&report, out.as_ref(), None)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid usage")
                .to_string();
            eprintln!("error: usage: {}", one_line(first.trim_start_matches("error:")));
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(2),
        Err(Failure::Usage(reason)) => {
            eprintln!("error: {reason}");
            ExitCode::from(1)
        }
    }
}

//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::commands;
use crate::config::{RawConfig, RunConfig};
use crate::error::{HarnessError, Result};
use crate::persist::ResultRecord;
use crate::verify::DEFAULT_VERIFY_SAMPLES;

#[derive(Debug, Parser)]
#[command(name = "gradbound", version, about = "PAC-Bayes bounds from loss-gradient norms")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// `key=value` applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the synthetic data set and write it as CSV.
    GenData,
    /// Train the configured model and write a checkpoint.
    Train,
    /// Loss and input-gradient statistics under the prior.
    Estimate,
    /// One bound report of the configured kind.
    Bound,
    /// Our bound and the bounded-loss baseline on the same model.
    Compare,
    /// λ, depth or prior-variance grids, or every figure table.
    Sweep,
    /// Numerical identity checks of the entropy machinery.
    Verify {
        /// Monte Carlo samples per check.
        #[arg(long, default_value_t = DEFAULT_VERIFY_SAMPLES)]
        samples: usize,
    },
}

/// Merges the config file, overrides and flags into a validated run config.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for kv in &cli.overrides {
        raw.apply_override(kv)?;
    }
    if let Some(s) = cli.seed {
        raw.set("seed", &s.to_string())?;
    }
    if let Some(o) = &cli.out {
        raw.set("out", &o.display().to_string())?;
    }
    RunConfig::from_raw(raw)
}

fn print_records(records: &[ResultRecord]) {
    for r in records {
        match serde_json::to_string(r) {
            Ok(s) => println!("{s}"),
            Err(e) => eprintln!("unprintable record: {e}"),
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::GenData => {
            let p = commands::gen_data(&cfg)?;
            println!("wrote {} training rows to {}", p.n_train, p.train_csv.display());
            if let Some(t) = &p.test_csv {
                println!("wrote {} test rows to {}", p.n_test, t.display());
            }
            if let Some(m) = &p.mixture_config {
                println!("wrote mixture to {}", m.display());
            }
        }
        Command::Train => print_records(&commands::train(&cfg)?),
        Command::Estimate => print_records(&commands::estimate(&cfg)?),
        Command::Bound => print_records(&commands::bound(&cfg)?),
        Command::Compare => print_records(&commands::compare(&cfg)?),
        Command::Sweep => {
            let (records, paths) = commands::sweep(&cfg)?;
            print_records(&records);
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Verify { samples } => {
            let checks = commands::verify(&cfg, *samples)?;
            for c in &checks {
                println!(
                    "{}",
                    serde_json::json!({ "check": c.name, "pass": c.pass, "discrepancy": c.discrepancy, "tolerance": c.tolerance })
                );
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(HarnessError::Verify(format!(
                    "{} check(s) failed: {}",
                    failed.len(),
                    failed.join(", ")
                )));
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns the exit
/// status: 0 on success, 1 for usage or config errors, 2 for numerical or constraint
/// errors, 3 for failed verification.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

// Licensed under the Apache License, Version 2.0 <LICENSE-APACHE or
// http://www.apache.org/licenses/LICENSE-2.0> or the MIT license
// <LICENSE-MIT or http://opensource.org/licenses/MIT>, at your
// option. This file may not be copied, modified, or distributed
// except according to those terms.


//! `wlanfair`: run scenarios, sweeps and figure replications, and evaluate
//! the window-limit model from the command line.
//!
//! Exit status: 0 success, 2 parse error, 3 invalid scenario or argument,
//! 4 simulation invariant violated, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wlanfair_core::Error;

mod calc;
mod exec;
mod replicate;
mod table;

#[derive(Parser)]
#[command(name = "wlanfair", version, about = "802.11 TCP fairness simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct RunOpts {
    /// Seed to run; repeat for several. Defaults to the scenario's seeds.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Output directory.
    #[arg(long, env = "WLANFAIR_OUT", default_value = "wlanfair-out")]
    pub out: PathBuf,
    /// Override the simulated duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Override the warm-up excluded from steady-state figures.
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Extra scenario setting, e.g. `--set control=accf`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario and write per-run reports.
    Run {
        /// Path to a `.scn` file or the name of a bundled scenario.
        scenario: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run every sweep point of a scenario and write one summary row per point.
    Sweep {
        scenario: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Evaluate the analytic window limit and buffer size.
    Calc(calc::CalcArgs),
    /// Produce the data behind one of the reference figures.
    Replicate {
        /// One of: fig2 .. fig18, or the ranges fig9..13, fig14..15, fig17..18.
        figure: String,
        #[command(flatten)]
        opts: RunOpts,
        /// Drop ratio above which a window counts as too large (fig5).
        #[arg(long, default_value_t = 0.001)]
        loss_threshold: f64,
    },
    /// List bundled scenarios.
    List,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse { .. }) => 2,
        Some(Error::Validation(_) | Error::InvalidParameter(_)) => 3,
        Some(Error::Invariant(_) | Error::Protocol { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, opts } => exec::run(&scenario, &opts, false),
        Command::Sweep { scenario, opts } => exec::run(&scenario, &opts, true),
        Command::Calc(args) => calc::calc(&args),
        Command::Replicate { figure, opts, loss_threshold } => replicate::replicate(&figure, &opts, loss_threshold),
        Command::List => {
            for (name, _) in wlanfair_core::catalogue::SCENARIOS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let code = |e: Error| exit_code(&anyhow::Error::new(e));
        assert_eq!(code(Error::Parse { line: 3, msg: "x".into() }), 2);
        assert_eq!(code(Error::Validation("x".into())), 3);
        assert_eq!(code(Error::InvalidParameter("x".into())), 3);
        assert_eq!(code(Error::Invariant("x".into())), 4);
        assert_eq!(code(Error::Protocol { flow: 1, msg: "x".into() }), 4);
        assert_eq!(code(Error::Io("x".into())), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }
}

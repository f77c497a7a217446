//! `hdr`: simulate, analyse and sweep hysteresis-driven routing setups.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Classify, Failure};
use config::{parse_axis, read_config, ModeArg, Overrides, PolicyName};

#[derive(Parser, Debug)]
#[command(name = "hdr", version, about = "Hysteresis-driven routing simulator and steady-state models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and print a run summary; with --out also write trace and summary CSVs.
    Run(Common),
    /// Print the closed-form steady state and g_s.
    Analytic(Common),
    /// Print analytic and simulated cycle quantities side by side.
    Compare(Common),
    /// Evaluate the steady state along one parameter axis (CSV on stdout).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `name=start:stop:step`, e.g. `h=1:50:1`.
        #[arg(long)]
        axis: String,
    },
    /// Profile-driven run with windowed statistics (CSV on stdout).
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Set the input rate from measured cycle lengths.
        #[arg(long)]
        feedback: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long, value_enum)]
    packet_mode: Option<ModeArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            policy: self.policy,
            horizon: self.horizon,
            warmup: self.warmup,
            packet_mode: self.packet_mode,
            out: self.out.clone(),
        }
    }

    fn base_dir(&self) -> &Path {
        self.config.parent().unwrap_or(Path::new("."))
    }

    fn experiment(&self) -> Result<config::Experiment, Failure> {
        let raw = read_config(&self.config).config()?;
        raw.resolve(self.base_dir(), &self.overrides()).config()
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(c) => commands::cmd_run(&c.experiment()?),
        Command::Analytic(c) => commands::cmd_analytic(&c.experiment()?),
        Command::Compare(c) => commands::cmd_compare(&c.experiment()?),
        Command::Sweep { common, axis } => {
            let axis = parse_axis(&axis).config()?;
            let raw = read_config(&common.config).config()?;
            commands::cmd_sweep(&raw, &axis, &common.overrides())
        }
        Command::Scenario { common, feedback } => commands::cmd_scenario(&common.experiment()?, feedback),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

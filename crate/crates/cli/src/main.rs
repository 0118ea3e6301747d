use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use aurora_core::commands::{self, Outcome, EXIT_INPUT_ERROR};
use aurora_core::io::{Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aurora", version, about = "L1-regularized analysis of FFC-NMR dispersion profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a measured profile (CSV: nu_mhz,r1[,conf_percent]).
    Fit {
        profile: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic reference profile, optionally with noise.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo noise study on the synthetic reference profile.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Write the relaxation kernel matrix.
    KernelDump {
        /// Take frequencies from this profile.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (default: $AURORA_OUTPUT_DIR or ./aurora-out).
    #[arg(short, long = "out")]
    out: Option<PathBuf>,
    /// Lower edge of the quadrupolar peak window, MHz.
    #[arg(long)]
    nu_lo: Option<f64>,
    /// Upper edge of the quadrupolar peak window, MHz.
    #[arg(long)]
    nu_hi: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long)]
    tol_lambda: Option<f64>,
    #[arg(long)]
    tol_gs: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_gs: Option<usize>,
    /// Number of correlation times on the grid.
    #[arg(long)]
    n_tau: Option<usize>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    #[arg(long)]
    c_bar: Option<f64>,
    #[arg(long)]
    tau_bar: Option<f64>,
    /// Synthetic scenario: default or offset-only.
    #[arg(long)]
    scenario: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            nu_lo: self.nu_lo,
            nu_hi: self.nu_hi,
            delta: self.delta,
            seed: self.seed,
            replicates: self.replicates,
            lambda0: self.lambda0,
            tol_lambda: self.tol_lambda,
            tol_gs: self.tol_gs,
            max_outer: self.max_outer,
            max_gs: self.max_gs,
            n_tau: self.n_tau,
            tau_min: self.tau_min,
            tau_max: self.tau_max,
            c_bar: self.c_bar,
            tau_bar: self.tau_bar,
            scenario: self.scenario.clone(),
            output_dir: self.out.clone(),
        });
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let outcome = match cli.command {
        Command::Fit { profile, common } => {
            let config = common.load()?;
            commands::run_fit(&profile, &config)
                .with_context(|| format!("fitting {}", profile.display()))?
        }
        Command::Synth { common } => commands::run_synth(&common.load()?)?,
        Command::Mc { common } => commands::run_mc(&common.load()?)?,
        Command::KernelDump { profile, common } => {
            commands::run_kernel_dump(&common.load()?, profile.as_deref().map(Path::new))?
        }
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT_ERROR as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            let code = outcome.status.exit_code();
            if code != 0 {
                eprintln!("warning: the fit did not converge; see the result files");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT_ERROR as u8)
        }
    }
}

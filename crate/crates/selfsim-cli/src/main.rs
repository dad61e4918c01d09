use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfsim_cli::{run_evolve, run_profile, run_spectrum, run_sweep, CliError, ExperimentConfig, Outcome, Overrides};

/// Self-similar wave-map blowup experiments.
///
/// Exit status: 0 when every threshold is met, 1 when a run completed but missed
/// a threshold, 2 on solver nonconvergence or a run stopped by blowup, 3 on
/// invalid configuration, missing inputs or I/O failure.
#[derive(Parser)]
#[command(name = "selfsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve profiles and write them with their residual report.
    Profile(Common),
    /// Gauge eigenvalue, discrete spectrum and spectral gap.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Use a profile written by `selfsim profile` instead of solving one.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Tune the blowup time and evolve the perturbed profile.
    Evolve(Common),
    /// Profiles, spectra and tuned runs over the epsilon grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration, or JSON when the extension is `.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent sweep jobs; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// One value or a comma-separated grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    d: Option<usize>,
    /// One value sets the evolution grid intervals; a list sets the collocation sizes.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    tau_max: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        base.resolve(&Overrides {
            output: self.out.clone(),
            workers: self.workers,
            seed: self.seed,
            epsilon: self.epsilon.clone(),
            d: self.d,
            grid: self.grid.clone(),
            tau_max: self.tau_max,
        })
    }
}

fn run(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Profile(c) => run_profile(&c.resolve()?),
        Command::Spectrum { common, profile } => run_spectrum(&common.resolve()?, profile.as_deref()),
        Command::Evolve(c) => run_evolve(&c.resolve()?),
        Command::Sweep(c) => run_sweep(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if !outcome.passed {
                eprintln!("selfsim: thresholds not met");
            }
            if outcome.flagged {
                eprintln!("selfsim: run stopped early; report is partial");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("selfsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

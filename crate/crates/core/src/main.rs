use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rakecal::calibration::{ErrorMode, OmegaRegressor, Weighting};
use rakecal::cli_io::{
    cmd_fit, cmd_simulate, cmd_tune_censoring, version_string, CliError, FitRequest, SimulateOverrides, THREADS_ENV,
};
use rakecal::estimators::Estimator;

#[derive(Parser)]
#[command(name = "rakecal", version, about = "Cox regression with error-prone covariates and event times")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    CovariateOnly,
    OutcomeOnly,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum OmegaOn {
    TrueX,
    ErrorProneX,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Unweighted,
    Ipw,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a two-phase CSV dataset.
    Fit {
        data: PathBuf,
        /// naive, true, ht, rc, rsrc, grn or grrc.
        #[arg(long, short)]
        estimator: Estimator,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        /// Regressor for the outcome-error calibration.
        #[arg(long, value_enum)]
        omega_on: Option<OmegaOn>,
        #[arg(long, value_enum)]
        weighting: Option<Weights>,
        /// Bootstrap replicates (0 for none).
        #[arg(long, short, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short, default_value = "rakecal-out")]
        out: PathBuf,
    },
    /// Run a simulation scenario (a TOML file or a bundled name).
    Simulate {
        scenario: String,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short, default_value = "rakecal-out")]
        out: PathBuf,
    },
    /// Find the censoring interval that gives a target censoring rate.
    TuneCensoring {
        scenario: String,
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 0.005)]
        tolerance: f64,
    },
    /// Print the version.
    Version,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit {
            data,
            estimator,
            mode,
            omega_on,
            weighting,
            bootstrap,
            seed,
            out,
        } => {
            let mut request = FitRequest::new(
                estimator,
                match mode {
                    Mode::CovariateOnly => ErrorMode::CovariateOnly,
                    Mode::OutcomeOnly => ErrorMode::OutcomeOnly,
                    Mode::Both => ErrorMode::Both,
                },
            );
            request.omega_regressor = omega_on.map(|o| match o {
                OmegaOn::TrueX => OmegaRegressor::TrueX,
                OmegaOn::ErrorProneX => OmegaRegressor::ErrorProneX,
            });
            request.weighting = weighting.map(|w| match w {
                Weights::Unweighted => Weighting::Unweighted,
                Weights::Ipw => Weighting::Ipw,
            });
            request.bootstrap = bootstrap;
            request.seed = seed;
            let output = cmd_fit(&data, &request, &out)?;
            print!("{}", std::fs::read_to_string(&output.files[1]).unwrap_or_default());
        }
        Command::Simulate {
            scenario,
            reps,
            bootstrap,
            seed,
            out,
        } => {
            let overrides = SimulateOverrides { reps, bootstrap, seed };
            let (result, output) = cmd_simulate(&scenario, &overrides, &out)?;
            print!("{}", result.to_table());
            eprintln!(
                "wrote {} files to {} in {:.1}s",
                output.files.len(),
                out.display(),
                result.runtime.as_secs_f64()
            );
        }
        Command::TuneCensoring {
            scenario,
            target,
            tolerance,
        } => {
            let tuned = cmd_tune_censoring(&scenario, target, tolerance)?;
            println!("[censor_interval]");
            println!("lower = {}", tuned.interval.lower);
            println!("length = {}", tuned.interval.length);
            println!("# achieved censoring rate {:.5}", tuned.achieved);
        }
        Command::Version => println!("{}", version_string()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rakecal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpheom::config::load_config;
use fpheom::experiment::{
    error_exit_code, exit_code, run_decompose, run_experiment, run_extract, run_sweep,
};
use fpheom::Error;

#[derive(Parser)]
#[command(
    name = "fpheom",
    version,
    about = "Spin-boson dynamics with free-pole HEOM, perturbative master equations and memory kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and certify the bath modes; writes modes.json and manifest.json.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the tasks listed in the config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for the hierarchy propagation.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the memory kernel and rates from population CSVs.
    Extract {
        /// Trajectory started in P(0) = +1 (columns `t`, `P`).
        #[arg(long)]
        input: PathBuf,
        /// Trajectory started in P(0) = −1; selects the 2×2 kernel.
        #[arg(long)]
        down: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the config once per `sweep.s` or `sweep.alpha` value.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep points in flight at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_exit_code(e) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Decompose { config, out } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let out = out.unwrap_or_else(|| cfg.output.clone());
            match run_decompose(&cfg, &out) {
                Ok(m) => {
                    println!(
                        "K = {}, residual = {:e}",
                        m.modes.k,
                        m.modes.residual.unwrap_or(f64::NAN)
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run { config, jobs, out } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(n) = jobs {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global()
                {
                    eprintln!("warning: {e}");
                }
            }
            match run_experiment(&cfg, out.as_deref()) {
                Ok(m) => {
                    for f in &m.failures {
                        eprintln!("error: {}: {}", f.task, f.error);
                    }
                    println!(
                        "{} artifacts in {}",
                        m.artifacts.len(),
                        m.config.output.display()
                    );
                    ExitCode::from(exit_code(&m.failures) as u8)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Extract { input, down, out } => match run_extract(&input, down.as_deref(), &out) {
            Ok(files) => {
                println!("{} artifacts in {}", files.len(), out.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { config, jobs, out } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match run_sweep(&cfg, out.as_deref(), jobs) {
                Ok(points) => {
                    let failures: Vec<_> = points.iter().flat_map(|p| p.failures.clone()).collect();
                    for p in &points {
                        for f in &p.failures {
                            eprintln!("error: {}: {}: {}", p.label, f.task, f.error);
                        }
                    }
                    ExitCode::from(exit_code(&failures) as u8)
                }
                Err(e) => fail(&e),
            }
        }
    }
}

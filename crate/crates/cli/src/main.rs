use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use speckle_pat::harness::{self, ExperimentConfig, Method};
use speckle_pat::Error;

#[derive(Parser, Debug)]
#[command(name = "speckle-pat", version, about = "Speckle-illuminated photoacoustic tomography experiments")]
struct Cli {
    /// Overrides the base seed from the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for simulation.
    #[arg(long, global = true, env = "SPECKLE_PAT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate recordings and store their moments.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct from stored moments.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        moments: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, reconstruct with both methods and score.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a stored field as an 8-bit PGM.
    ExportImage {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Clamp negative values to zero before normalizing.
        #[arg(long)]
        clamp: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    First,
    Second,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::First => Method::First,
            MethodArg::Second => Method::Second,
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>, out: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_json_file(path).map_err(|e| Error::Stage {
        stage: "configuration",
        source: Box::new(e),
    })?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.output_dir = Some(out.to_path_buf());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(&config, cli.seed, &out)?;
            let sim = harness::simulate(&cfg)?;
            harness::write_simulation(&cfg, &sim, &out)?;
            for s in &sim.sizes {
                println!(
                    "speckle size {:e} m: {} recordings, noise sigma {:e}",
                    s.speckle_size, s.moments.count, s.noise_sigma
                );
            }
        }
        Command::Reconstruct {
            config,
            moments,
            method,
            out,
        } => {
            let cfg = load_config(&config, cli.seed, &out)?;
            let entries = harness::reconstruct_from_dir(&cfg, &moments, method.into(), &out)?;
            for e in &entries {
                println!(
                    "{} speckle size {:e} m: correlation {:.4}, relative error {:.4}",
                    e.method, e.speckle_size, e.metrics.correlation, e.metrics.rel_l2
                );
            }
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config, cli.seed, &out)?;
            let result = harness::run_experiment(&cfg)?;
            for e in &result.entries {
                println!(
                    "{} speckle size {:e} m: correlation {:.4}, relative error {:.4}",
                    e.method, e.speckle_size, e.metrics.correlation, e.metrics.rel_l2
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::ExportImage { input, out, clamp } => {
            harness::io::export_matrix_image(&input, &out, clamp).map_err(|e| Error::Stage {
                stage: "export",
                source: Box::new(e),
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellsleep::harness::{
    emit_figures, generate_traffic, run_pipeline, sweep_nsbs, train_agent_only, train_fl_only,
    ExperimentConfig, PipelineError,
};

#[derive(Parser)]
#[command(
    name = "cellsleep",
    about = "Simulate and learn small-cell sleep scheduling on slotted traffic traces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's synthetic traffic trace to a CSV file.
    GenerateTraffic {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Target file; defaults to `<output_dir>/trace.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the federated traffic predictor and write its artifacts.
    TrainFl {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the switching agent (and its predictor when needed).
    TrainAgent {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full pipeline and evaluate every enabled policy over the
    /// test slots.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the pipeline at several small-cell counts and tabulate the
    /// energy saved per policy.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated small-cell counts, e.g. `4,8,16`.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
    },
    /// Project a finished run's metrics into plot-ready CSV files.
    EmitFigures {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::GenerateTraffic { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let path = generate_traffic(&cfg, out)?;
            println!("wrote {}", path.display());
        }
        Command::TrainFl { config, seed } => {
            let cfg = load_config(&config, seed)?;
            let dir = train_fl_only(&cfg)?;
            println!("federated predictor trained into {}", dir.display());
        }
        Command::TrainAgent { config, seed } => {
            let cfg = load_config(&config, seed)?;
            let dir = train_agent_only(&cfg)?;
            println!("agent trained into {}", dir.display());
        }
        Command::Evaluate { config, seed } => {
            let cfg = load_config(&config, seed)?;
            let output = run_pipeline(&cfg)?;
            for skipped in &output.skipped {
                eprintln!("note: {skipped} skipped (instance too large)");
            }
            for row in &output.summary {
                println!(
                    "{}: {:.1} J, saved {:.1} J",
                    row.policy, row.energy_j, row.energy_saved_j
                );
            }
            println!("run written to {}", output.dir.display());
        }
        Command::Sweep {
            config,
            seed,
            counts,
        } => {
            let cfg = load_config(&config, seed)?;
            let path = sweep_nsbs(&cfg, &counts)?;
            println!("sweep summary at {}", path.display());
        }
        Command::EmitFigures { run_dir } => {
            for path in emit_figures(&run_dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error{err}");
            ExitCode::from(err.stage.exit_code() as u8)
        }
    }
}

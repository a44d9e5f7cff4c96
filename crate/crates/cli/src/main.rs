use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use ngcl_cli::config::{parse_config, read_config_file, ExperimentConfig};
use ngcl_cli::experiment::{accuracy_table, build_stream, compare_runs, describe_stream, run_comparison, run_single};
use ngcl_core::optimizer::OptimizerKind;

#[derive(Parser)]
#[command(
    name = "ngcl",
    version,
    about = "Class-incremental learning with EWC and natural gradient descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train over a class-incremental stream and write metrics.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run two optimizers on the same stream, e.g. `sgd,ngd`; the first is the baseline.
        #[arg(long, value_name = "A,B")]
        compare: Option<String>,
    },
    /// Compare two finished run directories (baseline first).
    Compare { baseline: PathBuf, candidate: PathBuf },
    /// Print the class partition for the configured dataset and seed.
    InspectStream {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// `synth[:CLASSES[:PER_CLASS[:DIM[:SPREAD]]]]` or `idx:IMAGES,LABELS[,TEST_IMAGES,TEST_LABELS]`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    classes_per_task: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `sgd` or `ngd`.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    damping: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    fisher_max_samples: Option<String>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden_dims: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// `paper`: eta 0.001, 300 epochs.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let file_pairs = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("classes-per-task", &self.classes_per_task),
            ("seed", &self.seed),
            ("optimizer", &self.optimizer),
            ("eta", &self.eta),
            ("damping", &self.damping),
            ("epsilon", &self.epsilon),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("fisher-max-samples", &self.fisher_max_samples),
            ("hidden-dims", &self.hidden_dims),
            ("out-dir", &self.out_dir),
            ("preset", &self.preset),
        ];
        let flag_pairs: Vec<(String, String)> = flags
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(parse_config(&file_pairs, &flag_pairs)?)
    }
}

fn parse_arms(spec: &str) -> Result<[OptimizerKind; 2]> {
    let arms: Vec<OptimizerKind> = spec.split(',').map(str::parse).collect::<Result<_, _>>()?;
    match arms.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => bail!("--compare takes exactly two optimizers, e.g. sgd,ngd"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, compare } => {
            let cfg = config.resolve()?;
            match compare {
                None => {
                    let run = run_single(&cfg)?;
                    println!("{} arm, results in {}", cfg.optimizer, run.dir.display());
                    print!("{}", accuracy_table(&run.records));
                }
                Some(spec) => {
                    let (runs, comparison) = run_comparison(&cfg, parse_arms(&spec)?)?;
                    for run in &runs {
                        println!("{} arm, results in {}", run.records[0].optimizer, run.dir.display());
                        print!("{}", accuracy_table(&run.records));
                    }
                    print!("{}", comparison.summary());
                }
            }
        }
        Command::Compare { baseline, candidate } => {
            print!("{}", compare_runs(&baseline, &candidate)?.summary());
        }
        Command::InspectStream { config } => {
            let cfg = config.resolve()?;
            let (stream, _) = build_stream(&cfg)?;
            print!("{}", describe_stream(&stream));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

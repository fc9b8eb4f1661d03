use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamfuse::config::{ExperimentConfig, Overrides};
use beamfuse::harness;
use beamfuse::{HarnessError, Result};
use beamfuse_core::models::ModelKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "beamfuse", version, about = "Fused sub-6GHz/mmWave beam prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from the configured scene.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Evaluate a trained run on a dataset's validation split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Results CSV to append to (default: <run>/results.csv).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Train and evaluate every cell of the configured grid.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Print the multiply count of the configured architecture.
    Flops {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Fusion,
    Shallow,
    Sub6,
    Mmwave,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Fusion => ModelKind::Fusion,
            ModelArg::Shallow => ModelKind::Shallow,
            ModelArg::Sub6 => ModelKind::Sub6,
            ModelArg::Mmwave => ModelKind::Mmwave,
        }
    }
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, allow_negative_numbers = true)]
    sub6_snr_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pilot_snr_db: Option<f64>,
    #[arg(long)]
    active_antennas: Option<usize>,
    #[arg(long)]
    aug_rate: Option<f64>,
    #[arg(long, value_enum)]
    sparsity: Option<Switch>,
}

impl From<&OverrideArgs> for Overrides {
    fn from(a: &OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            model: a.model.map(Into::into),
            sub6_snr_db: a.sub6_snr_db,
            pilot_snr_db: a.pilot_snr_db,
            active_antennas: a.active_antennas,
            aug_rate: a.aug_rate,
            sparsity: a.sparsity.map(|s| matches!(s, Switch::On)),
        }
    }
}

fn resolve(config: Option<&Path>, overrides: &OverrideArgs) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&overrides.into());
    cfg.validate()?;
    Ok(cfg)
}

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).unwrap_or_default()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            overrides,
        } => {
            let cfg = resolve(config.as_deref(), &overrides)?;
            let m = harness::cmd_generate(&cfg, &out)?;
            println!(
                "dataset {}: {} users, {} samples, sub6 dim {}, mmwave dim {}, {} beams, {} train / {} validation users",
                out.display(),
                m.users,
                m.samples,
                m.sub6_dim,
                m.mmwave_dim,
                m.num_beams,
                m.train_users.len(),
                m.validation_users.len()
            );
        }
        Command::Train {
            config,
            dataset,
            out,
            overrides,
        } => {
            let cfg = resolve(config.as_deref(), &overrides)?;
            let summary = harness::cmd_train(&cfg, &dataset, &out)?;
            println!("{}", json(&summary));
        }
        Command::Eval {
            run,
            dataset,
            results,
        } => {
            let results = results.unwrap_or_else(|| run.join("results.csv"));
            let metrics = harness::cmd_eval(&run, &dataset, &results)?;
            println!("{}", json(&metrics));
        }
        Command::Sweep {
            config,
            out,
            workers,
            overrides,
        } => {
            let mut cfg = resolve(config.as_deref(), &overrides)?;
            if let Some(w) = workers {
                if w == 0 {
                    return Err(HarnessError::Config("--workers must be at least 1".into()));
                }
                cfg.sweep.workers = w;
            }
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let summary = harness::cmd_sweep(&cfg, &out)?;
            println!("{}", json(&summary));
        }
        Command::Flops { config, overrides } => {
            let cfg = resolve(config.as_deref(), &overrides)?;
            println!("{}", json(&harness::cmd_flops(&cfg)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

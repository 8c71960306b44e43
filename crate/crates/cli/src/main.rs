use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::error;

use qrecycle::trainer::{self, Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "qrecycle", version, about = "Train and evaluate hybrid QCNN classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics, curves, confusion matrix and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split described by a config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write `eval_metrics.json` and `confusion.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print parameter counts and circuit layout of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn train(config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let cfg = TrainConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let spec = trainer::model_spec(&cfg)?;
    println!(
        "parameters: {} ({} quantum + {} classical)",
        spec.param_count(),
        qrecycle::qcnn::QUANTUM_PARAM_COUNT,
        spec.heads.param_count()
    );
    let report = trainer::run_train(&cfg)?;
    let dir = out.unwrap_or(cfg.out.clone());
    trainer::emit_outputs(&report, &dir)?;
    println!(
        "train accuracy {:.4}, test accuracy {:.4}, macro F1 {:.4}",
        report.train.accuracy, report.test.accuracy, report.test.macro_f1
    );
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn eval(checkpoint: PathBuf, config: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let ck = Checkpoint::load(&checkpoint)?;
    let cfg = TrainConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let metrics = trainer::run_eval(&ck, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("eval_metrics.json"), serde_json::to_string_pretty(&metrics)? + "\n")?;
        std::fs::write(dir.join("confusion.csv"), trainer::confusion_csv(&metrics))?;
    }
    Ok(())
}

fn inspect(checkpoint: PathBuf) -> Result<()> {
    let ck = Checkpoint::load(&checkpoint)?;
    let model = ck.to_model()?;
    let layout = &model.spec.layout;
    println!("encoder: {}", model.spec.encoder);
    println!("classes: {:?}", ck.classes);
    println!("readout: {:?}", model.readout());
    println!(
        "parameters: {} ({} quantum + {} classical)",
        model.param_count(),
        model.quantum.len(),
        model.heads.param_count()
    );
    println!(
        "heads: expansion {}, final layer {}",
        model.heads.expansion,
        model.heads.final_layer.is_some()
    );
    for (i, pairs) in layout.conv_pairs.iter().enumerate() {
        println!("conv {}: {:?}", i + 1, pairs);
    }
    for (i, pairs) in layout.pool_pairs.iter().enumerate() {
        println!("pool {}: {:?}", i + 1, pairs);
    }
    println!("retained wires: {:?}", layout.retained_wires);
    println!("discarded wires: {:?}", layout.discarded_wires);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => train(config, out),
        Command::Eval { checkpoint, config, out } => eval(checkpoint, config, out),
        Command::Inspect { checkpoint } => inspect(checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

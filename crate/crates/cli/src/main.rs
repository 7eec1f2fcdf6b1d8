//! `sentex`: preprocess → train → select → evaluate over one config file.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sentex_core::config::PipelineConfig;
use sentex_core::pipeline;

#[derive(Parser)]
#[command(
    name = "sentex",
    version,
    about = "Extractive explanations for recommendations"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML). Missing keys take the published defaults.
    #[arg(long, global = true, default_value = "sentex.toml")]
    config: PathBuf,

    /// Override `paths.workdir`.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,

    /// Override the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Drop the graph-attention layers.
    #[arg(long, global = true)]
    no_gat: bool,

    /// Replace the deep & cross network with a single linear layer.
    #[arg(long, global = true)]
    no_dcn: bool,

    /// Take the top-K sentences by score instead of solving the ILP.
    #[arg(long, global = true)]
    no_ilp: bool,

    /// Use averaged word vectors as sentence inputs.
    #[arg(long, global = true)]
    avg_word_embeddings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest reviews, tag attributes, filter, split and save the corpus.
    Preprocess,
    /// Train and keep the checkpoint with the best validation BLEU-4.
    Train {
        /// Continue from the latest checkpoint in the work directory.
        #[arg(long)]
        resume: bool,
    },
    /// Select explanations for every test pair.
    Select {
        /// Checkpoint to use instead of the best one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score selections against the held-out reviews.
    Evaluate {
        /// Selections file to score instead of the select stage's output.
        #[arg(long)]
        selections: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    anyhow::ensure!(
        common.config.is_file(),
        "config file {} not found",
        common.config.display()
    );
    let mut config = PipelineConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(dir) = &common.workdir {
        config.paths.workdir = dir.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let a = &mut config.ablations;
    a.disable_gat |= common.no_gat;
    a.disable_dcn |= common.no_dcn;
    a.disable_ilp |= common.no_ilp;
    a.use_avg_word_embeddings |= common.avg_word_embeddings;
    config.validate()?;
    Ok(config)
}

/// Prints to stdout; a closed pipe (`sentex ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.context("writing to stdout"),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.workers {
        anyhow::ensure!(n > 0, "--workers must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let config = load_config(&cli.common)?;
    match cli.command {
        Command::Preprocess => {
            let stats = pipeline::preprocess(&config)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&stats)?))?;
        }
        Command::Train { resume } => {
            let out = pipeline::train(&config, resume)?;
            emit(&format!(
                "best epoch {} (validation BLEU-4 {:.4}); {} epochs run{}\n",
                out.best_epoch,
                out.best_bleu_4,
                out.history.len(),
                if out.stopped_early {
                    ", stopped early"
                } else {
                    ""
                }
            ))?;
        }
        Command::Select { checkpoint } => {
            let records = pipeline::select(&config, checkpoint.as_deref())?;
            emit(&format!(
                "{} selections written to {}\n",
                records.len(),
                pipeline::stage_dir(&config, "select")
                    .join(pipeline::SELECTIONS)
                    .display()
            ))?;
        }
        Command::Evaluate { selections } => {
            let report = pipeline::evaluate(&config, selections.as_deref())?;
            emit(&report.to_table())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

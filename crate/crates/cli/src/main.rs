//! `svtc` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "svtc", version, about = "Multi-modal sign-sequence recognition toolkit")]
pub struct Cli {
    /// Seed for data generation, initialization and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with optional `data`, `model` and `train` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (or file, for `decode`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus.
    GenData,
    /// Train a model and keep the best-dev checkpoint.
    Train(TrainArgs),
    /// Corpus-level WER of a checkpoint on one split.
    Eval(EvalArgs),
    /// Print `<id>\t<glosses>` for every sample of a split.
    Decode(EvalArgs),
    /// Dump DTW paths, spans and gloss similarity matrices.
    Align(SplitArgs),
    /// Finite-difference gradient suite.
    Gradcheck,
    /// Time a training step and decoding.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub lambda_ctc: Option<f64>,
    #[arg(long)]
    pub lambda_spn: Option<f64>,
    #[arg(long)]
    pub lambda_g: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    /// mlp | conv | attn | none
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub align_warmup: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Disable frame-rate and crop augmentation.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// train | dev | test
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub split: SplitArgs,
    /// v | k | o | c | avg
    #[arg(long, default_value = "avg")]
    pub head: String,
    #[arg(long, default_value_t = 5)]
    pub beam_width: usize,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    #[arg(long, default_value_t = 5)]
    pub iterations: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

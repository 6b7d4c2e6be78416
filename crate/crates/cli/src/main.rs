use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "rawcnn", version, about = "Raw-waveform CNN phone recognition on synthetic corpora")]
struct Cli {
    /// Seed for every random stream (data, init, shuffle).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with train/valid/test splits.
    GenData(GenData),
    /// Compute stacked MFCC frames for every utterance of a corpus.
    ExtractFeatures(ExtractFeatures),
    /// Train a network and write its checkpoint, log and class priors.
    Train(Train),
    /// Compute posteriors and Viterbi-decode a split.
    Decode(Decode),
    /// Score decoded output against the references.
    Evaluate(Evaluate),
    /// Train every candidate of a grid and keep the best.
    GridSearch(GridSearch),
    /// Print filter-stage and classifier parameter counts.
    CountParams(ConfigOnly),
    /// Print the per-stage output shapes.
    Shape(ConfigOnly),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    utts: usize,
    /// Standard deviation of additive white noise.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 20)]
    min_frames: usize,
    #[arg(long, default_value_t = 40)]
    max_frames: usize,
    #[arg(long, default_value_t = 16000)]
    rate: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractFeatures {
    #[arg(long)]
    data: PathBuf,
    /// Frames stacked around each centre frame.
    #[arg(long, default_value_t = 9)]
    context: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Decode {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Decode with uniform priors instead of the training priors.
    #[arg(long)]
    uniform_priors: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `decode`.
    #[arg(long)]
    decoded: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridSearch {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigOnly {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context { seed: cli.seed, quiet: cli.quiet };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(
            &ctx,
            &commands::GenDataArgs {
                classes: a.classes,
                utts: a.utts,
                noise: a.noise,
                min_frames: a.min_frames,
                max_frames: a.max_frames,
                rate: a.rate,
            },
            &a.out,
        ),
        Command::ExtractFeatures(a) => commands::extract_features(&ctx, &a.data, a.context, &a.out),
        Command::Train(a) => commands::train(&ctx, &a.config, &a.data, &a.out),
        Command::Decode(a) => commands::decode(&ctx, &a.model, &a.data, &a.split, a.uniform_priors, &a.out),
        Command::Evaluate(a) => commands::evaluate(&a.model, &a.data, &a.decoded, &a.split, &a.out),
        Command::GridSearch(a) => commands::grid_search(&ctx, &a.config, &a.data, &a.out),
        Command::CountParams(a) => commands::count_params(&a.config),
        Command::Shape(a) => commands::shape(&a.config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clinex_core::Error;

#[derive(Debug, Parser)]
#[command(name = "clinex", version, about = "Clinical event span and attribute extraction")]
pub struct Cli {
    /// Seed for shuffling, dropout, initialization and corpus generation (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Training config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print `begin end surface shape` for every token of a text file.
    Tokenize(TokenizeArgs),
    /// Train the POS tagger on a `word/TAG` corpus.
    TrainTagger(TrainTaggerArgs),
    /// Train the model for one task.
    Train(TrainArgs),
    /// Annotate documents with trained models.
    Extract(ExtractArgs),
    /// Run the memorize baseline.
    Baseline(BaselineArgs),
    /// Score system annotations against gold.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic annotated corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    pub input: PathBuf,
    /// Also print POS tags predicted by this tagger.
    #[arg(long)]
    pub tagger: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainTaggerArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// SPAN, MODALITY, DEGREE, POLARITY, TYPE or DOCTIMEREL.
    #[arg(long)]
    pub task: String,
    /// Corpus directory with `text/` and `ann/`.
    #[arg(long)]
    pub train: PathBuf,
    /// Dev corpus for early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub tagger: PathBuf,
    /// Pretrained word vectors, one `word v1 ... vN` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Model file to write; a `.manifest.json` is written next to it.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Directory of `<task>.clnx` model files.
    #[arg(long)]
    pub models: PathBuf,
    /// Directory of `.txt` notes (or a corpus directory with `text/`).
    #[arg(long)]
    pub input: PathBuf,
    /// Classify these gold spans instead of finding spans.
    #[arg(long)]
    pub gold_spans: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Training corpus directory with `text/` and `ann/`.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub gold_spans: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of system `.ann.xml` files.
    #[arg(long)]
    pub system: PathBuf,
    /// Gold corpus directory with `text/` and `ann/`.
    #[arg(long)]
    pub gold: PathBuf,
    /// Tasks to score (default: every task with gold values).
    #[arg(long = "task")]
    pub tasks: Vec<String>,
    /// Print tab-separated lines instead of a table.
    #[arg(long)]
    pub tsv: bool,
    /// Also write a run manifest with the metrics.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long)]
    pub train_docs: Option<usize>,
    #[arg(long)]
    pub dev_docs: Option<usize>,
    #[arg(long)]
    pub test_docs: Option<usize>,
    #[arg(long)]
    pub oov_rate: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clinex: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}

//! Command-line wiring: train, predict, evaluate, gradcheck, export-dot,
//! and synth subcommands over the library. Defaults come from the model
//! configuration, a flat TOML config file can override them, and flags
//! override the file. Exit codes: 0 success, 1 check failure, 2 usage or
//! I/O error.

mod commands;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "lmg",
    about = "Landmark graphs from natural-language route instructions",
    version
)]
pub struct Cli {
    /// Flat TOML config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub char_feature_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub char_filter_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub word_embed_dim: Option<usize>,
    #[arg(long)]
    pub encoder_hidden: Option<usize>,
    #[arg(long)]
    pub decoder_hidden: Option<usize>,
    #[arg(long)]
    pub attention_dim: Option<usize>,
    #[arg(long)]
    pub dropout_in: Option<f64>,
    #[arg(long)]
    pub dropout_out: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_decode_len: Option<usize>,
    #[arg(long)]
    pub lr_init: Option<f64>,
    #[arg(long)]
    pub lr_rate: Option<f64>,
    #[arg(long)]
    pub lr_steps: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train on the train+dev split of one fold; writes per-epoch
    /// checkpoints and a loss log.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Word-vector text file (word followed by 300 floats per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fold index (0..2).
        #[arg(long)]
        fold: Option<usize>,
        /// Train on the whole corpus instead of a fold split (for corpora
        /// too small to split).
        #[arg(long)]
        all_data: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Decode instructions with a trained checkpoint; writes prediction
    /// records and DOT graphs.
    Predict {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to this fold's test split.
        #[arg(long)]
        fold: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score a prediction file against gold annotations.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Combined node-count cap for exact graph edit distance.
        #[arg(long)]
        ged_limit: Option<usize>,
    },
    /// Compare analytic gradients against finite differences on a tiny
    /// random model; exits 1 on failure.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render gold or predicted records as Graphviz DOT files.
    ExportDot {
        /// Corpus or prediction record file (one JSON object per line).
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with known gold annotations.
    Synth {
        #[arg(long)]
        routes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output corpus file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Keys accepted in the flat TOML config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fold: Option<usize>,
    pub routes: Option<usize>,
    pub ged_limit: Option<usize>,
    pub all_data: Option<bool>,
    pub char_feature_dim: Option<usize>,
    pub char_filter_sizes: Option<Vec<usize>>,
    pub word_embed_dim: Option<usize>,
    pub encoder_hidden: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub attention_dim: Option<usize>,
    pub dropout_in: Option<f64>,
    pub dropout_out: Option<f64>,
    pub epochs: Option<usize>,
    pub max_decode_len: Option<usize>,
    pub lr_init: Option<f64>,
    pub lr_rate: Option<f64>,
    pub lr_steps: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 42;

/// Run the CLI on explicit arguments, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with code 0.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

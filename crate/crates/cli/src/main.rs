//! Command-line driver: preprocess datasets, train models, evaluate them
//! under the ranking protocols, score single triplets, and report dataset
//! statistics.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "relpred",
    about = "Inductive relation prediction over knowledge graphs via directed enclosing subgraphs",
    version
)]
struct Cli {
    /// Worker threads for extraction and scoring (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter empty-subgraph triplets and materialize non-empty negatives.
    Preprocess(PreprocessArgs),
    /// Train one or more seeds from a config file.
    Train(TrainArgs),
    /// Evaluate checkpoints under a ranking protocol.
    Eval(EvalArgs),
    /// Score a single triplet and describe its subgraph.
    Score(ScoreArgs),
    /// Dataset statistics at a given hop count.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct PreprocessArgs {
    /// Dataset directory containing train.txt (+ valid.txt / test.txt).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the filtered dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub hop: usize,
    /// Negatives materialized per kept positive.
    #[arg(long, default_value_t = 1)]
    pub neg: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = relpred_core::DEFAULT_MAX_NODES)]
    pub max_nodes: usize,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Flat key=value config file; flags below override its values.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub score_hidden: Option<usize>,
    #[arg(long)]
    pub edge_dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub neg: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Number of seeds to train (seeds 1..=runs when above one).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Re-draw training negatives until their subgraph is non-empty.
    #[arg(long)]
    pub require_subgraph: bool,
    /// Force undirected extraction everywhere (ablation).
    #[arg(long)]
    pub undirected: bool,
    /// Disable edge attention (ablation).
    #[arg(long)]
    pub no_attention: bool,
    /// Condition attention on the target relation only (ablation).
    #[arg(long)]
    pub grail_attention: bool,
    /// Never update edge embeddings (ablation).
    #[arg(long)]
    pub no_edge_update: bool,
    /// Append wall-clock timestamps to log records (breaks byte-for-byte
    /// reproducibility of logs).
    #[arg(long)]
    pub timestamps: bool,
    /// Optional subgraph cache file to read.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint(s) to evaluate; metrics are averaged when several are
    /// given.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Dataset directory with train.txt (the graph) and test.txt (queries).
    #[arg(long)]
    pub data: PathBuf,
    /// auc-one-negative | hits-k | exchange-ht
    #[arg(long, default_value = "auc-one-negative")]
    pub protocol: String,
    /// Sampled negatives per positive for the hits-k protocol.
    #[arg(long, default_value_t = 50)]
    pub neg: usize,
    #[arg(long, default_value_t = 10)]
    pub hits_k: usize,
    /// Re-draw sampled negatives until they have a non-empty subgraph.
    #[arg(long)]
    pub require_subgraph: bool,
    /// head | tail: corrupt one side only instead of the 50/50 mix.
    #[arg(long)]
    pub corrupt: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Merge valid.txt into the extraction graph.
    #[arg(long)]
    pub merge_valid: bool,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Directory for report files (defaults to the dataset directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Graph file (train.txt) or a dataset directory containing one.
    #[arg(long)]
    pub graph: PathBuf,
    /// The candidate as "head<TAB>relation<TAB>tail" (spaces accepted).
    #[arg(long)]
    pub triplet: String,
    #[arg(long)]
    pub max_nodes: Option<usize>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub hop: usize,
    #[arg(long, default_value_t = relpred_core::DEFAULT_MAX_NODES)]
    pub max_nodes: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
        {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Preprocess(args) => commands::preprocess::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Stats(args) => commands::stats::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

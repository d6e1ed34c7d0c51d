mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tooka_core::config::PipelineConfig;

/// Persian MLM pre-training data pipeline and benchmark scorer.
#[derive(Debug, Parser)]
#[command(name = "pipeline", version)]
pub struct Cli {
    /// Pipeline config (JSON). A bare normalization config is accepted too.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// NFKC + Persian character map + whitespace collapse.
    Normalize(NormalizeArgs),
    /// Learn a byte-level BPE vocabulary.
    TrainBpe(TrainArgs),
    /// Text to token ids (JSONL out).
    Encode(EncodeArgs),
    /// Token ids back to text.
    Decode(DecodeArgs),
    /// Encode and pack documents into fixed-length shards.
    Pack(PackArgs),
    /// Build whole-word-masked instances from shards.
    Mask(MaskArgs),
    /// Score predictions against gold.
    Score(ScoreArgs),
    /// Best run per model and task, rendered as a table.
    Aggregate(AggregateArgs),
    /// Recompute published table averages from fixtures.
    VerifyTables(VerifyArgs),
    /// normalize, train-bpe, pack and mask using the config paths.
    All(AllArgs),
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Input corpus, `-` for stdin.
    #[arg(long = "in")]
    pub input: Option<String>,
    /// Output corpus, `-` for stdout.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Force `lines` or `jsonl` instead of guessing from the path.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: Option<String>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub min_frequency: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "in", default_value = "-")]
    pub input: String,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long = "in", default_value = "-")]
    pub input: String,
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Text corpus, or the JSONL written by `encode`.
    #[arg(long = "in")]
    pub input: Option<String>,
    #[arg(long)]
    pub seq_len: Option<u32>,
    /// Sequences per shard file.
    #[arg(long)]
    pub shard_size: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// One shard file; defaults to every shard in the configured directory.
    #[arg(long)]
    pub shard: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write instances here (a directory when masking several shards).
    #[arg(long)]
    pub emit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// qa, cls or ner.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated label set for cls.
    #[arg(long)]
    pub labels: Option<String>,
    /// macro, micro or binary.
    #[arg(long, default_value = "macro")]
    pub average: String,
    /// Positive label for binary F1.
    #[arg(long)]
    pub positive: Option<String>,
    /// entity-type or full-tag.
    #[arg(long, default_value = "entity-type")]
    pub ner_accuracy: String,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// markdown or tsv; defaults from the output extension.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "fixtures/tables")]
    pub fixtures: PathBuf,
}

#[derive(Debug, Args)]
pub struct AllArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Bad flags, config or invocation: exit 2. Everything else exits 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl std::fmt::Display) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => cmd::load_config_file(path).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env().map_err(usage)?;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    if cfg.workers > 0 {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    match cli.command {
        Command::Normalize(a) => cmd::normalize(cfg, a),
        Command::TrainBpe(a) => cmd::train_bpe(cfg, a),
        Command::Encode(a) => cmd::encode(cfg, a),
        Command::Decode(a) => cmd::decode(cfg, a),
        Command::Pack(a) => cmd::pack(cfg, a),
        Command::Mask(a) => cmd::mask(cfg, a),
        Command::Score(a) => cmd::score(a),
        Command::Aggregate(a) => cmd::aggregate(cfg, a),
        Command::VerifyTables(a) => cmd::verify_tables(a),
        Command::All(a) => cmd::all(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<UsageError>() { 2 } else { 1 })
        }
    }
}

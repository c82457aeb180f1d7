mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gradrel", version, about = "Graded relevance experiments at desk scale")]
pub struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads (rayon pool; also bounds concurrent sweep cells).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    /// Output format for read-style subcommands.
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multilingual dataset.
    Synth(SynthArgs),
    /// Validate an external dataset file.
    Ingest(IngestArgs),
    /// Distribution-matched downsampling or a two-language mixture.
    Sample(SampleArgs),
    /// Threshold graded judgments into positives and negatives.
    Binarize(BinarizeArgs),
    /// Agreement matrix and quadratic weighted kappa between two annotators.
    Agree(AgreeArgs),
    /// Train the dual encoder on binarized pairs.
    Train(TrainArgs),
    /// Retrieve with a checkpoint and score nDCG@k.
    Eval(EvalArgs),
    /// Run an experiment grid from a JSON file.
    Sweep(SweepArgs),
    /// Re-render CSV and SVG files of an existing report bundle.
    Report(ReportArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SynthArgs {
    /// Comma-separated `code[:tier]` list, e.g. `lo:low,hi:high`.
    #[arg(long, value_delimiter = ',')]
    pub languages: Vec<String>,
    /// Passages per language.
    #[arg(long)]
    pub passages: Option<usize>,
    /// Training queries per language.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Held-out evaluation queries per language.
    #[arg(long)]
    pub heldout: Option<usize>,
    /// Candidates attached to each training query.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// `identity`, `tiered`, `swap:<tier>:<rate>` or a JSON file.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub annotator: Option<String>,
    /// Full generator config as JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct IngestArgs {
    pub input: PathBuf,
    /// Override resource tiers, e.g. `sw:low,fi:medium`.
    #[arg(long, value_delimiter = ',')]
    pub tiers: Vec<String>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Annotator whose instances are sampled.
    #[arg(long, default_value = "synth")]
    pub annotator: String,
    /// Instances per language after distribution matching.
    #[arg(long, conflicts_with = "target")]
    pub target_total: Option<usize>,
    /// Mixture target language.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, requires = "target")]
    pub target_count: Option<usize>,
    #[arg(long, requires = "target")]
    pub additional: Option<String>,
    #[arg(long, requires = "additional", default_value_t = 0)]
    pub additional_count: usize,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct BinarizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub tau: i64,
    /// Per-language overrides, e.g. `sw:1,fi:3` (experimental).
    #[arg(long, value_delimiter = ',')]
    pub tau_by_language: Vec<String>,
    /// Annotator to binarize; defaults to the only one in the file, else `synth`.
    #[arg(long)]
    pub annotator: Option<String>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct AgreeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Second file for annotator B; defaults to `--input`.
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Reference annotator (matrix rows).
    #[arg(long, default_value = "oracle")]
    pub a: String,
    #[arg(long, default_value = "synth")]
    pub b: String,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct TrainArgs {
    /// Dataset holding the query and passage texts.
    #[arg(long)]
    pub data: PathBuf,
    /// Output of `binarize`; when absent the data is binarized with `--tau`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub tau: i64,
    #[arg(long, default_value = "synth")]
    pub annotator: String,
    /// Training config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Checkpoint name inside the output directory.
    #[arg(long, default_value = "model.bin")]
    pub model: String,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset whose queries are evaluated against its passages.
    #[arg(long, alias = "index")]
    pub corpus: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "exponential")]
    pub gain: GainArg,
    /// Restrict queries and passages to one language.
    #[arg(long)]
    pub language: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GainArg {
    Exponential,
    Linear,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SweepArgs {
    pub experiment: PathBuf,
    /// Training dataset; overrides the experiment file.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Evaluation dataset (queries and passages).
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match cmd::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.reported {
                // causes whose text already appears in the outer message are skipped
                let mut msg = e.source.to_string();
                for cause in e.source.chain().skip(1) {
                    let c = cause.to_string();
                    if !msg.contains(&c) {
                        msg = format!("{msg}: {c}");
                    }
                }
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.code)
        }
    }
}

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Train, evaluate and inspect hierarchical cluster-based graph auto-encoders.
#[derive(Parser, Debug)]
#[command(name = "hcgae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an auto-encoder and write a checkpoint plus its loss history.
    Train(Common),
    /// Cross-validate a linear classifier on frozen embeddings.
    Eval(Common),
    /// Write graph- or node-level embeddings to disk.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
        export_format: ExportFormat,
    },
    /// Over-smoothing comparison against a plain GCN stack and a gradient check.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Corrupt one backward rule so the gradient check must fail.
        #[arg(long)]
        corrupt_gradient: bool,
    },
    /// Compare hard-assignment encoding with the soft-pooling variant.
    Ablate(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Dataset directory. Not needed for the synthetic format.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DataFormat::Tu)]
    format: DataFormat,
    /// Expected task; inferred from the format when omitted.
    #[arg(long)]
    task: Option<hcgae::Task>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// `key = value` settings file. Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reuse a trained checkpoint instead of training.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    variant: Option<hcgae::Variant>,
    #[arg(long)]
    folds: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Drop citation edges that name unknown papers instead of failing.
    #[arg(long)]
    skip_dangling_edges: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum DataFormat {
    Tu,
    Citation,
    Sbm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ExportFormat {
    Csv,
    Bin,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(c) => commands::train(&c),
        Command::Eval(c) => commands::eval(&c),
        Command::Export { common, export_format } => commands::export(&common, export_format),
        Command::Diagnose {
            common,
            corrupt_gradient,
        } => commands::diagnose(&common, corrupt_gradient),
        Command::Ablate(c) => commands::ablate(&c),
    }
}

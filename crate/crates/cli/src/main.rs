mod commands;
mod config;
mod workdir;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mkg_core::kge::ModelKind;
use mkg_core::synth::SynthConfig;

use commands::{Ctx, EvalOptions, Source};
use config::{PipelineConfig, StrategyName};
use workdir::WorkDir;

#[derive(Parser)]
#[command(name = "mkg", version, about = "Substitute-component ranking on machine knowledge graphs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where artifacts are read and written.
    #[arg(long, global = true, env = "MKG_WORK_DIR")]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyName>,
    /// Keep topology embeddings fixed during fine-tuning.
    #[arg(long, global = true)]
    freeze_topology: bool,
    /// Scorer without bias terms.
    #[arg(long, global = true)]
    paper_exact: bool,
    /// Negatives per positive during fine-tuning.
    #[arg(long, global = true)]
    negatives: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic BOM corpus with ground-truth substitute families.
    Synth {
        /// Size preset: desk or full.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Build the graph and write the train/valid/test split.
    Build,
    /// Encode node metadata and project it onto principal components.
    Encode,
    /// Train topology embeddings.
    Train,
    /// Fuse topology and feature embeddings and fine-tune the scorer.
    Finetune,
    /// Filtered test ranking, from checkpoints or from fresh replicas.
    Eval {
        /// Run this many full replicas (seed, seed + 1, ...) instead of
        /// evaluating existing checkpoints.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated model kinds; defaults to the configured one.
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Vec<ModelKind>,
        /// Comma-separated strategies; defaults to the configured one.
        #[arg(long, value_delimiter = ',', value_enum)]
        strategies: Vec<StrategyName>,
        /// Also sweep K = 1..10 negatives per positive.
        #[arg(long, requires = "seeds")]
        k_sweep: bool,
    },
    /// Nearest neighbours of a part by cosine similarity.
    Neighbors {
        part: String,
        #[arg(short, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Source::Ensemble)]
        source: Source,
    },
    /// Edge homophily, class-insensitive homophily and compatibility matrix.
    Homophily,
    /// Two-dimensional projection of embeddings for plotting.
    Project {
        #[arg(long, value_enum, default_value_t = Source::Ensemble)]
        source: Source,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: mkg_core::MkgError| e.to_string())
}

fn resolve_config(g: &Global, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Command::Synth { preset: Some(p) } = command {
        let seed = cfg.synth.seed;
        cfg.synth = SynthConfig { seed, ..SynthConfig::preset(p)? };
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(m) = g.model {
        cfg.train.model = m;
    }
    if let Some(s) = g.strategy {
        cfg.negatives.strategy = s;
    }
    if let Some(k) = g.negatives {
        cfg.finetune.negatives = k;
    }
    cfg.finetune.freeze_topology |= g.freeze_topology;
    cfg.finetune.paper_exact |= g.paper_exact;
    if let Some(w) = &g.work_dir {
        cfg.paths.work_dir = Some(w.clone());
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global, &cli.command)?;
    let root = cfg.paths.work_dir.clone().unwrap_or_else(|| PathBuf::from("mkg-work"));
    let ctx = Ctx { work: WorkDir::open(root)?, cfg };
    match cli.command {
        Command::Synth { .. } => commands::synth(&ctx),
        Command::Build => commands::build(&ctx),
        Command::Encode => commands::encode(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Finetune => commands::finetune_cmd(&ctx),
        Command::Eval { seeds, models, strategies, k_sweep } => {
            let opts = EvalOptions {
                seeds,
                models: if models.is_empty() { vec![ctx.cfg.train.model] } else { models },
                strategies: if strategies.is_empty() { vec![ctx.cfg.negatives.strategy] } else { strategies },
                k_sweep,
            };
            commands::eval(&ctx, &opts)
        }
        Command::Neighbors { part, k, source } => commands::neighbors(&ctx, &part, k, source),
        Command::Homophily => commands::homophily(&ctx),
        Command::Project { source } => commands::project(&ctx, source),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mislc::commands;
use mislc::config::RunConfig;
use mislc::corpus::{ChunkOptions, DEFAULT_BUDGET};
use mislc::curation::DEFAULT_MIN_ANNOTATIONS;
use mislc::detector::{PromptMode, RetrievalMode};
use mislc::index::Bm25Params;
use mislc::Error;

#[derive(Parser)]
#[command(name = "mislc", version, about = "Legal-misinformation detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ChunkArgs {
    #[arg(long, default_value = "word-v1")]
    tokenizer: String,
    /// Maximum tokens per chunk.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Fail on paragraphs longer than the budget instead of splitting them.
    #[arg(long)]
    no_hard_split: bool,
}

impl ChunkArgs {
    fn options(&self) -> ChunkOptions {
        ChunkOptions {
            budget: self.budget,
            hard_split: !self.no_hard_split,
        }
    }
}

/// Flags that override the config file.
#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run directory name inside the output directory.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    retrieval: Option<RetrievalMode>,
    #[arg(long)]
    mode: Option<PromptMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    llm_script: Option<PathBuf>,
    #[arg(long)]
    search_script: Option<PathBuf>,
    #[arg(long)]
    pages_script: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
            if src.is_some() {
                dst.clone_from(src);
            }
        };
        set(&mut cfg.run.dataset, &self.dataset);
        set(&mut cfg.run.index, &self.index);
        set(&mut cfg.mock.llm_script, &self.llm_script);
        set(&mut cfg.mock.search_script, &self.search_script);
        set(&mut cfg.mock.pages_script, &self.pages_script);
        if let Some(v) = &self.out_dir {
            cfg.run.out_dir.clone_from(v);
        }
        if self.name.is_some() {
            cfg.run.name.clone_from(&self.name);
        }
        if let Some(v) = self.retrieval {
            cfg.retrieval.mode = v;
        }
        if let Some(v) = self.mode {
            cfg.run.prompt_mode = v;
        }
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.parallelism {
            cfg.run.parallelism = v;
        }
        if let Some(v) = self.theta {
            cfg.retrieval.theta = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split a directory of .txt legal documents into chunks.
    Chunk {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        chunking: ChunkArgs,
    },
    /// Build a BM25 index from a corpus directory or a chunk manifest.
    BuildIndex {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        chunking: ChunkArgs,
        #[arg(long, default_value_t = Bm25Params::default().k1)]
        k1: f64,
        #[arg(long, default_value_t = Bm25Params::default().b)]
        b: f64,
    },
    /// Classify every sample of a dataset.
    Run(RunArgs),
    /// Score a predictions file against the dataset's gold labels.
    Eval {
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to the directory holding the predictions.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run and evaluate once per FLARE threshold.
    SweepTheta {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        grid: Vec<f64>,
    },
    /// Adversarial filtering on crowd checkworthiness votes.
    Filter {
        dataset: PathBuf,
        #[arg(long, short)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Hash-embedding dimension.
        #[arg(long, default_value_t = 128)]
        dim: usize,
    },
    /// Nominal Krippendorff's alpha over expert verdicts.
    Agreement {
        annotations: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score each prolific annotator against the majority vote.
    Experts {
        annotations: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_ANNOTATIONS)]
        min_count: usize,
    },
    /// Aggregate raw annotations into per-sample labels.
    Label {
        annotations: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Chunk { corpus, out, chunking } => {
            let chunks = commands::cmd_chunk(&corpus, &out, &chunking.tokenizer, chunking.options())?;
            println!("{} chunks -> {}", chunks.len(), out.display());
        }
        Command::BuildIndex { input, out, chunking, k1, b } => {
            let index = commands::cmd_build_index(
                &input,
                &out,
                &chunking.tokenizer,
                chunking.options(),
                Bm25Params { k1, b },
            )?;
            println!("{} chunks indexed -> {}", index.len(), out.display());
        }
        Command::Run(args) => {
            let out = commands::cmd_run(&args.resolve()?)?;
            println!("{}", out.predictions.display());
        }
        Command::Eval { predictions, dataset, out_dir } => {
            let out_dir = out_dir.unwrap_or_else(|| {
                predictions
                    .parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let r = commands::cmd_eval(&predictions, &dataset, &out_dir)?;
            println!(
                "n={} bin_f1={:.1} ma_f1={:.1} mi_f1={:.1} er={:.1}",
                r.n,
                100.0 * r.bin_f1,
                100.0 * r.ma_f1,
                100.0 * r.mi_f1,
                100.0 * r.error_rate
            );
        }
        Command::SweepTheta { run, grid } => {
            let rows = commands::cmd_sweep_theta(&run.resolve()?, &grid)?;
            print!("{}", commands::sweep_csv(&rows));
        }
        Command::Filter { dataset, out_dir, k, runs, seed, dim } => {
            let r = commands::cmd_filter(&dataset, &out_dir, k, runs, seed, dim)?;
            for run in &r.runs {
                println!("seed {}: kept {}", run.seed, run.outcome.kept.len());
            }
            println!("intersection: {}", r.intersection.len());
        }
        Command::Agreement { annotations, out } => {
            let r = commands::cmd_agreement(&annotations, &out)?;
            println!("alpha={:.3} units={}", r.alpha, r.units);
        }
        Command::Experts { annotations, out, min_count } => {
            let r = commands::cmd_experts(&annotations, &out, min_count)?;
            println!(
                "{} experts: bin_f1 {:.1}±{:.1} ma_f1 {:.1}±{:.1} mi_f1 {:.1}±{:.1}",
                r.experts.len(),
                100.0 * r.bin_f1.mean,
                100.0 * r.bin_f1.std,
                100.0 * r.ma_f1.mean,
                100.0 * r.ma_f1.std,
                100.0 * r.mi_f1.mean,
                100.0 * r.mi_f1.std
            );
        }
        Command::Label { annotations, out } => {
            let labels = commands::cmd_label(&annotations, &out)?;
            println!("{} samples -> {}", labels.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

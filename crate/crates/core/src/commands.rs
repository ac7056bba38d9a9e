//! Subcommand implementations shared by the binary and the tests.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{secret, ConfigError, RunConfig};
use crate::corpus::{chunk_corpus, load_corpus, tokenizer_by_name, Chunk, ChunkOptions};
use crate::curation::{
    adversarial_filter, consensus, expert_performance, intersect_runs, verdict_alpha,
    AgreementReport, Consensus, ExpertReport, FilterOptions, FilterOutcome, HashEmbedding,
};
use crate::datamodel::{validate_dataset, AnnotationRecord, IssueCatalog, Label, Prediction, Sample};
use crate::detector::{classify_or_error, Backends, Classification, RetrievalMode};
use crate::gateways::llm::HttpLlmConfig;
use crate::gateways::search::HttpSearchConfig;
use crate::gateways::{
    HttpFetcher, HttpLlm, HttpSearch, LanguageModel, PageFetcher, ScriptedLlm, ScriptedPages,
    ScriptedSearch, WebSearch,
};
use crate::index::{Bm25Params, PostingsIndex};
use crate::metrics::{evaluate, EvalReport};
use crate::{jsonl, Error, Result};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const REPORT_FILE: &str = "report.json";
pub const DISTRIBUTION_FILE: &str = "label_distribution.csv";
pub const SWEEP_FILE: &str = "sweep_theta.csv";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_script<T>(path: &Path, parse: impl FnOnce(&str) -> serde_json::Result<T>) -> Result<T> {
    parse(&read_file(path)?).map_err(|e| {
        ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
        .into()
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

// ---------------------------------------------------------------------------
// chunk / build-index

/// Chunks every `.txt` file in `corpus_dir` and writes the manifest.
pub fn cmd_chunk(corpus_dir: &Path, out: &Path, tokenizer: &str, opts: ChunkOptions) -> Result<Vec<Chunk>> {
    let tok = tokenizer_by_name(tokenizer)?;
    let docs = load_corpus(corpus_dir)?;
    let chunks = chunk_corpus(&docs, tok.as_ref(), opts)?;
    jsonl::write(out, &chunks)?;
    log::info!("{} documents -> {} chunks", docs.len(), chunks.len());
    Ok(chunks)
}

/// Builds an index from a corpus directory or a chunk manifest.
pub fn cmd_build_index(
    input: &Path,
    out_dir: &Path,
    tokenizer: &str,
    opts: ChunkOptions,
    params: Bm25Params,
) -> Result<PostingsIndex> {
    let tok = tokenizer_by_name(tokenizer)?;
    let chunks = if input.is_dir() {
        chunk_corpus(&load_corpus(input)?, tok.as_ref(), opts)?
    } else {
        jsonl::read::<Chunk>(input)?
    };
    let index = PostingsIndex::build(&chunks, params, tok)?;
    index.save(out_dir)?;
    log::info!(
        "indexed {} chunks, {} terms -> {}",
        index.len(),
        index.vocabulary_size(),
        out_dir.display()
    );
    Ok(index)
}

// ---------------------------------------------------------------------------
// run

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub prompt_sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub predictions: PathBuf,
    pub classifications: Vec<Classification>,
}

impl RunOutput {
    pub fn regenerations(&self) -> usize {
        self.classifications.iter().map(|c| c.regenerations).sum()
    }

    pub fn retrieval_events(&self) -> usize {
        self.classifications
            .iter()
            .map(|c| c.prediction.retrieval_trace.len())
            .sum()
    }
}

/// Live or scripted backends built from a config.
pub struct OwnedBackends {
    pub llm: Box<dyn LanguageModel>,
    pub search: Option<Box<dyn WebSearch>>,
    pub fetcher: Option<Box<dyn PageFetcher>>,
    pub index: Option<PostingsIndex>,
    pub catalog: IssueCatalog,
    pub tokenizer: Box<dyn crate::corpus::Tokenizer>,
}

impl OwnedBackends {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let net = cfg.net.net_config();
        let llm: Box<dyn LanguageModel> = match &cfg.mock.llm_script {
            Some(p) => Box::new(parse_script(p, ScriptedLlm::from_json)?),
            None => {
                let endpoint = cfg
                    .llm
                    .endpoint
                    .clone()
                    .ok_or_else(|| ConfigError::Invalid("set llm.endpoint or mock.llm_script".into()))?;
                Box::new(HttpLlm::new(HttpLlmConfig {
                    endpoint,
                    model: cfg.llm.model.clone(),
                    api_key: secret(&cfg.llm.api_key_env)?,
                    net,
                }))
            }
        };
        let mode = cfg.retrieval.mode;
        let search: Option<Box<dyn WebSearch>> = match &cfg.mock.search_script {
            Some(p) => Some(Box::new(parse_script(p, ScriptedSearch::from_json)?)),
            None if mode.needs_search() => Some(Box::new(HttpSearch::new(HttpSearchConfig {
                endpoint: cfg.search.endpoint.clone(),
                api_key: secret(&cfg.search.api_key_env)?,
                cx: cfg.search.cx.clone(),
                net,
            }))),
            None => None,
        };
        let fetcher: Option<Box<dyn PageFetcher>> = match &cfg.mock.pages_script {
            Some(p) => Some(Box::new(parse_script(p, ScriptedPages::from_json)?)),
            None => Some(Box::new(HttpFetcher::new(net))),
        };
        let index = match &cfg.run.index {
            Some(dir) if mode.needs_index() => Some(PostingsIndex::load(dir)?),
            _ => None,
        };
        let catalog = match &cfg.run.catalog {
            Some(p) => IssueCatalog::from_json(&read_file(p)?)
                .map_err(|m| ConfigError::Parse { path: p.clone(), message: m })?,
            None => IssueCatalog::builtin(),
        };
        Ok(Self {
            llm,
            search,
            fetcher,
            index,
            catalog,
            tokenizer: tokenizer_by_name(&cfg.corpus.tokenizer)?,
        })
    }

    pub fn borrow(&self) -> Backends<'_> {
        Backends {
            llm: self.llm.as_ref(),
            tokenizer: self.tokenizer.as_ref(),
            catalog: &self.catalog,
            index: self.index.as_ref(),
            search: self.search.as_deref(),
            fetcher: self.fetcher.as_deref(),
        }
    }
}

pub fn load_dataset(path: &Path, catalog: Option<&IssueCatalog>) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = jsonl::read(path)?;
    let problems = validate_dataset(&samples, catalog);
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(format!(
            "{}: {}",
            path.display(),
            problems.join("; ")
        ))
        .into());
    }
    Ok(samples)
}

/// The run directory: `out_dir/name`, or `out_dir/run-<unix seconds>`.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    let name = cfg.run.name.clone().unwrap_or_else(|| {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("run-{secs}")
    });
    cfg.run.out_dir.join(name)
}

/// Classifies samples on a pool of `parallelism` workers; results keep
/// input order.
pub fn classify_all(samples: &[Sample], cfg: &RunConfig, backends: &Backends<'_>) -> Result<Vec<Classification>> {
    let det = cfg.detector_config();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.parallelism)
        .build()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let out: Vec<_> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| classify_or_error(s, &det, backends))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    Ok(out)
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate_for_run()?;
    let owned = OwnedBackends::from_config(cfg)?;
    let dataset = cfg.run.dataset.as_ref().expect("checked by validate_for_run");
    let samples = load_dataset(dataset, Some(&owned.catalog))?;
    let dir = run_dir(cfg);
    write_file(&dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;

    log::info!(
        "classifying {} samples, mode {}, {} workers",
        samples.len(),
        cfg.retrieval.mode,
        cfg.run.parallelism
    );
    let classifications = classify_all(&samples, cfg, &owned.borrow())?;
    let records: Vec<PredictionRecord> = classifications
        .iter()
        .map(|c| PredictionRecord {
            prediction: c.prediction.clone(),
            prompt_sha256: c.prompt_sha256(),
        })
        .collect();
    let predictions = dir.join(PREDICTIONS_FILE);
    jsonl::write(&predictions, &records)?;

    let out = RunOutput {
        dir,
        predictions,
        classifications,
    };
    let errors = out.classifications.iter().filter(|c| c.prediction.is_error).count();
    log::info!(
        "{} predictions ({errors} errors), {} retrieval events, {} regenerations -> {}",
        out.classifications.len(),
        out.retrieval_events(),
        out.regenerations(),
        out.predictions.display()
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// eval

/// Matches predictions to gold labels by sample id.
pub fn gold_for(preds: &[Prediction], samples: &[Sample]) -> Result<Vec<Label>> {
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    preds
        .iter()
        .map(|p| {
            let s = by_id
                .get(p.sample_id.as_str())
                .ok_or_else(|| Error::UnknownSample(p.sample_id.clone()))?;
            s.gold.ok_or_else(|| Error::MissingGold(s.id.clone()))
        })
        .collect()
}

pub fn distribution_csv(rows: &[(String, [u64; 3])]) -> String {
    let mut s = String::from("run,non_mislc,unclear,mislc\n");
    for (name, d) in rows {
        let _ = writeln!(s, "{name},{},{},{}", d[0], d[1], d[2]);
    }
    s
}

/// Scores a predictions file and writes the report and label distribution
/// into `out_dir`.
pub fn cmd_eval(predictions: &Path, dataset: &Path, out_dir: &Path) -> Result<EvalReport> {
    let preds: Vec<Prediction> = jsonl::read(predictions)?;
    let samples: Vec<Sample> = jsonl::read(dataset)?;
    let golds = gold_for(&preds, &samples)?;
    let report = evaluate(&preds, &golds)?;
    write_json(&out_dir.join(REPORT_FILE), &report)?;
    let run_name = predictions
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    write_file(
        &out_dir.join(DISTRIBUTION_FILE),
        distribution_csv(&[(run_name, report.label_distribution)]),
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// sweep-theta

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub bin_f1: f64,
    pub ma_f1: f64,
    pub mi_f1: f64,
    pub error_rate: f64,
    pub regenerations: usize,
    pub retrieval_events: usize,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("theta,bin_f1,ma_f1,mi_f1,error_rate,regenerations,retrieval_events\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.theta, r.bin_f1, r.ma_f1, r.mi_f1, r.error_rate, r.regenerations, r.retrieval_events
        );
    }
    s
}

/// One `run` + `eval` per threshold, each in `<run dir>/theta-<value>`.
pub fn cmd_sweep_theta(cfg: &RunConfig, grid: &[f64]) -> Result<Vec<SweepRow>> {
    let mode = cfg.retrieval.mode;
    if !mode.is_flare() || mode == RetrievalMode::FlareTheta1 {
        return Err(ConfigError::Invalid(format!(
            "sweep-theta needs a FLARE mode with a free threshold, not {mode}"
        ))
        .into());
    }
    if grid.is_empty() {
        return Err(ConfigError::Invalid("empty theta grid".into()).into());
    }
    for &t in grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(ConfigError::Invalid(format!("theta {t} is outside [0, 1]")).into());
        }
    }
    cfg.validate_for_run()?;
    let base = run_dir(cfg);
    let dataset = cfg.run.dataset.clone().expect("checked by validate_for_run");
    let mut rows = Vec::new();
    let mut dists = Vec::new();
    for &theta in grid {
        let mut c = cfg.clone();
        c.retrieval.theta = theta;
        c.run.out_dir = base.clone();
        c.run.name = Some(format!("theta-{theta}"));
        let out = cmd_run(&c)?;
        let report = cmd_eval(&out.predictions, &dataset, &out.dir)?;
        dists.push((format!("theta-{theta}"), report.label_distribution));
        rows.push(SweepRow {
            theta,
            bin_f1: report.bin_f1,
            ma_f1: report.ma_f1,
            mi_f1: report.mi_f1,
            error_rate: report.error_rate,
            regenerations: out.regenerations(),
            retrieval_events: out.retrieval_events(),
        });
    }
    write_file(&base.join(SWEEP_FILE), sweep_csv(&rows))?;
    write_file(&base.join(DISTRIBUTION_FILE), distribution_csv(&dists))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// curation commands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRun {
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: FilterOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub k: usize,
    pub embedding: String,
    pub runs: Vec<FilterRun>,
    pub intersection: Vec<String>,
}

/// `runs` filtering passes with seeds `seed, seed + 1, ...` and their
/// intersection.
pub fn filter_dataset(samples: &[Sample], k: usize, runs: usize, seed: u64, dim: usize) -> Result<FilterReport> {
    let provider = HashEmbedding { dim };
    let mut out = Vec::new();
    for r in 0..runs as u64 {
        let outcome = adversarial_filter(samples, &provider, FilterOptions::new(k, seed + r))?;
        out.push(FilterRun {
            seed: seed + r,
            outcome,
        });
    }
    let kept: Vec<Vec<String>> = out.iter().map(|r| r.outcome.kept.clone()).collect();
    Ok(FilterReport {
        k,
        embedding: format!("hash-bow-v1/{dim}"),
        intersection: intersect_runs(&kept),
        runs: out,
    })
}

/// Writes `filter.json` and `kept.txt` (intersection, one id per line).
pub fn cmd_filter(dataset: &Path, out_dir: &Path, k: usize, runs: usize, seed: u64, dim: usize) -> Result<FilterReport> {
    if runs == 0 || dim == 0 {
        return Err(ConfigError::Invalid("--runs and --dim must be >= 1".into()).into());
    }
    let samples: Vec<Sample> = jsonl::read(dataset)?;
    let report = filter_dataset(&samples, k, runs, seed, dim)?;
    write_json(&out_dir.join("filter.json"), &report)?;
    let mut kept = report.intersection.join("\n");
    if !kept.is_empty() {
        kept.push('\n');
    }
    write_file(&out_dir.join("kept.txt"), kept)?;
    Ok(report)
}

pub fn cmd_agreement(annotations: &Path, out: &Path) -> Result<AgreementReport> {
    let records: Vec<AnnotationRecord> = jsonl::read(annotations)?;
    let report = verdict_alpha(&records)?;
    write_json(out, &report)?;
    Ok(report)
}

pub fn cmd_experts(annotations: &Path, out: &Path, min_count: usize) -> Result<ExpertReport> {
    let records: Vec<AnnotationRecord> = jsonl::read(annotations)?;
    let gold: HashMap<String, Label> = consensus(&records)
        .into_iter()
        .map(|c| (c.sample_id, c.label))
        .collect();
    let report = expert_performance(&records, &gold, min_count)?;
    write_json(out, &report)?;
    Ok(report)
}

pub fn cmd_label(annotations: &Path, out: &Path) -> Result<Vec<Consensus>> {
    let records: Vec<AnnotationRecord> = jsonl::read(annotations)?;
    let labels = consensus(&records);
    jsonl::write(out, &labels)?;
    Ok(labels)
}

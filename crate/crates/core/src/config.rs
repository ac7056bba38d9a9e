//! Run configuration: one TOML file, overridable from the command line.
//!
//! ```toml
//! [run]
//! dataset = "data/dataset.jsonl"
//! index = "build/index"
//! out_dir = "runs"
//! name = "flare-legal"       # run directory name; defaults to run-<unix time>
//! seed = 7
//! parallelism = 4
//! prompt_mode = "constrained"
//!
//! [retrieval]
//! mode = "flare_legal"
//! theta = 0.5
//!
//! [llm]
//! endpoint = "https://api.example.com/v1/chat/completions"
//! model = "some-model"
//! api_key_env = "LLM_API_KEY"
//!
//! [mock]                      # scripted backends replace the live ones
//! llm_script = "mocks/llm.json"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Secrets are never stored in the file, only the names of the environment
//! variables holding them.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkOptions, DEFAULT_BUDGET};
use crate::detector::{DetectorConfig, PromptMode, RetrievalMode};
use crate::gateways::fetch::DEFAULT_CHAR_LIMIT;
use crate::gateways::llm::{DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::gateways::NetConfig;
use crate::index::Bm25Params;
use crate::retrieval::{FlareParams, GenSettings, QueryStrategy, RalmParams};

pub const DEFAULT_SEARCH_ENDPOINT: &str = "https://www.googleapis.com/customsearch/v1";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{what} does not exist: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("environment variable {0} is not set")]
    MissingSecret(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    /// Legal-issue catalog; the built-in one is used when absent.
    pub catalog: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub name: Option<String>,
    pub seed: u64,
    pub parallelism: usize,
    pub prompt_mode: PromptMode,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dataset: None,
            corpus: None,
            index: None,
            catalog: None,
            out_dir: PathBuf::from("runs"),
            name: None,
            seed: 0,
            parallelism: 1,
            prompt_mode: PromptMode::Constrained,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub tokenizer: String,
    pub budget: usize,
    pub hard_split: bool,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            tokenizer: "word-v1".into(),
            budget: DEFAULT_BUDGET,
            hard_split: true,
        }
    }
}

impl CorpusSection {
    pub fn chunk_options(&self) -> ChunkOptions {
        ChunkOptions {
            budget: self.budget,
            hard_split: self.hard_split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSection {
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexSection {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self { k1: p.k1, b: p.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    /// Chat-completions URL.
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub api_key_env: Option<String>,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            api_key_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub endpoint: String,
    pub api_key_env: Option<String>,
    /// Search-engine id.
    pub cx: Option<String>,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_SEARCH_ENDPOINT.into(),
            api_key_env: None,
            cx: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub rps: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for NetSection {
    fn default() -> Self {
        let n = NetConfig::default();
        Self {
            rps: n.rps,
            max_retries: n.max_retries,
            backoff_ms: n.backoff.as_millis() as u64,
            timeout_s: n.timeout.as_secs(),
        }
    }
}

impl NetSection {
    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            rps: self.rps,
            max_retries: self.max_retries,
            backoff: Duration::from_millis(self.backoff_ms),
            timeout: Duration::from_secs(self.timeout_s),
        }
    }
}

/// Scripted backends. When a script is set it replaces the live client.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    pub llm_script: Option<PathBuf>,
    pub search_script: Option<PathBuf>,
    /// JSON object mapping URL to page HTML.
    pub pages_script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub mode: RetrievalMode,
    /// IC-RALM stride.
    pub delta: usize,
    /// IC-RALM query window.
    pub ell: usize,
    pub theta: f64,
    pub beta: f64,
    pub query_strategy: QueryStrategy,
    pub oracle_char_limit: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let r = RalmParams::default();
        let f = FlareParams::default();
        Self {
            mode: RetrievalMode::None,
            delta: r.stride,
            ell: r.query_window,
            theta: f.theta,
            beta: f.beta,
            query_strategy: f.query_strategy,
            oracle_char_limit: DEFAULT_CHAR_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub corpus: CorpusSection,
    pub index: IndexSection,
    pub llm: LlmSection,
    pub search: SearchSection,
    pub net: NetSection,
    pub mock: MockSection,
    pub retrieval: RetrievalSection,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.run.dataset,
            &mut self.run.corpus,
            &mut self.run.index,
            &mut self.run.catalog,
            &mut self.mock.llm_script,
            &mut self.mock.search_script,
            &mut self.mock.pages_script,
        ] {
            rebase(base, p);
        }
        if self.run.out_dir.is_relative() {
            self.run.out_dir = base.join(&self.run.out_dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serialisable")
    }

    /// Parameter checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.run.parallelism == 0 {
            return bad("run.parallelism must be >= 1".into());
        }
        for (name, v) in [("retrieval.theta", self.retrieval.theta), ("retrieval.beta", self.retrieval.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.retrieval.delta == 0 || self.retrieval.ell == 0 {
            return bad("retrieval.delta and retrieval.ell must be >= 1".into());
        }
        if self.corpus.budget == 0 {
            return bad("corpus.budget must be >= 1".into());
        }
        if self.llm.max_tokens == 0 {
            return bad("llm.max_tokens must be >= 1".into());
        }
        // also rejects NaN
        if self.llm.temperature.is_nan() || self.llm.temperature < 0.0 {
            return bad("llm.temperature must be >= 0".into());
        }
        if let Some(name) = &self.run.name {
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return bad(format!("run.name {name:?} is not a plain directory name"));
            }
        }
        Ok(())
    }

    /// Everything `run` needs: valid parameters, existing inputs and a
    /// configured backend for each service the mode uses.
    pub fn validate_for_run(&self) -> Result<(), ConfigError> {
        self.validate()?;
        let exists = |what: &'static str, p: &Option<PathBuf>| -> Result<(), ConfigError> {
            match p {
                Some(p) if !p.exists() => Err(ConfigError::MissingPath { what, path: p.clone() }),
                _ => Ok(()),
            }
        };
        match &self.run.dataset {
            None => return Err(ConfigError::Invalid("run.dataset is required".into())),
            d => exists("run.dataset", d)?,
        }
        exists("run.catalog", &self.run.catalog)?;
        exists("mock.llm_script", &self.mock.llm_script)?;
        exists("mock.search_script", &self.mock.search_script)?;
        exists("mock.pages_script", &self.mock.pages_script)?;
        let mode = self.retrieval.mode;
        if mode.needs_index() {
            match &self.run.index {
                None => {
                    return Err(ConfigError::Invalid(format!(
                        "retrieval mode {mode} needs run.index"
                    )))
                }
                i => exists("run.index", i)?,
            }
        }
        if self.mock.llm_script.is_none() && self.llm.endpoint.is_none() {
            return Err(ConfigError::Invalid("set llm.endpoint or mock.llm_script".into()));
        }
        Ok(())
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            retrieval: self.retrieval.mode,
            prompt_mode: self.run.prompt_mode,
            ralm: RalmParams {
                stride: self.retrieval.delta,
                query_window: self.retrieval.ell,
            },
            flare: FlareParams {
                theta: self.retrieval.theta,
                beta: self.retrieval.beta,
                query_strategy: self.retrieval.query_strategy,
            },
            gen: GenSettings {
                temperature: self.llm.temperature,
                max_tokens: self.llm.max_tokens,
                seed: Some(self.run.seed),
            },
            seed: self.run.seed,
            oracle_char_limit: self.retrieval.oracle_char_limit,
        }
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.index.k1,
            b: self.index.b,
        }
    }
}

/// Reads a secret from the environment variable named in the config.
pub fn secret(var: &Option<String>) -> Result<Option<String>, ConfigError> {
    match var {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| ConfigError::MissingSecret(name.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.retrieval.delta, 4);
        assert_eq!(cfg.llm.max_tokens, 1024);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[run]\nsede = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.retrieval.mode = RetrievalMode::FlareLegalWeb;
        cfg.run.dataset = Some("d.jsonl".into());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn theta_out_of_range() {
        let cfg = RunConfig::from_toml("[retrieval]\ntheta = 1.5\n").unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut cfg = RunConfig::from_toml("[run]\ndataset = \"d.jsonl\"\n").unwrap();
        cfg.resolve_paths(Path::new("/cfg"));
        assert_eq!(cfg.run.dataset.unwrap(), PathBuf::from("/cfg/d.jsonl"));
        assert_eq!(cfg.run.out_dir, PathBuf::from("/cfg/runs"));
    }

    #[test]
    fn run_needs_index_for_legal_modes() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        fs::write(&data, "").unwrap();
        let mut cfg = RunConfig::default();
        cfg.run.dataset = Some(data);
        cfg.llm.endpoint = Some("http://localhost".into());
        cfg.validate_for_run().unwrap();
        cfg.retrieval.mode = RetrievalMode::FlareLegal;
        assert!(cfg.validate_for_run().is_err());
    }
}

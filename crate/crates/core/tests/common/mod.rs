//! Fixtures shared by the integration tests.

#![allow(dead_code)]

pub mod oracle;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use mislc::config::RunConfig;
use mislc::datamodel::{Label, Sample};
use mislc::detector::RetrievalMode;
use mislc::gateways::llm::{LlmScript, ScriptRule};
use mislc::gateways::search::{ScriptedResult, SearchRule, SearchScript};
use mislc::jsonl;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gold distribution of the released dataset.
pub const GOLD_COUNTS: (usize, usize, usize) = (540, 78, 93);

pub fn gold_samples() -> Vec<Sample> {
    let (non, unclear, mislc) = GOLD_COUNTS;
    let labels = mislc::metrics::golds_from_counts(non, unclear, mislc);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let mut s = Sample::new(format!("g{i:03}"), format!("claim number {i}"));
            s.gold = Some(l);
            if l == Label::MisLC {
                s.legal_issues.insert("defamation".into());
            }
            s
        })
        .collect()
}

pub fn random_words(rng: &mut ChaCha8Rng, vocab: &[&str], n: usize) -> String {
    (0..n)
        .map(|_| vocab[rng.random_range(0..vocab.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub const LEGAL_DOCS: [(&str, &str); 3] = [
    (
        "defamation",
        "Defamation is a false statement that lowers a person's reputation.\n\n\
         Truth and fair comment are defences to a defamation claim.\n\n\
         Publication to a third party is required.",
    ),
    (
        "elections",
        "Election law forbids publishing false statements about a candidate.\n\n\
         Spreading misinformation about voting procedures may be an offence.",
    ),
    (
        "health",
        "Advertising a food or drug with false health claims is prohibited.\n\n\
         Claims that a product cures a disease need approval.\n\n\
         Vaccines and medicine are regulated.",
    ),
];

pub fn write_corpus(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    for (name, text) in LEGAL_DOCS {
        fs::write(dir.join(format!("{name}.txt")), text).unwrap();
    }
}

/// Small labelled dataset touching every retrieval path: samples with and
/// without legal issues and evidence URLs.
pub fn e2e_samples() -> Vec<Sample> {
    let mk = |id: &str, text: &str, gold: Label, issues: &[&str], urls: &[&str]| {
        let mut s = Sample::new(id, text);
        s.gold = Some(gold);
        s.legal_issues = issues.iter().map(|s| s.to_string()).collect();
        s.evidence_urls = urls.iter().map(|s| s.to_string()).collect();
        s
    };
    vec![
        mk("s1", "The mayor stole election funds, everyone knows it.", Label::MisLC, &["defamation", "election_laws"], &["https://news.example/a", "https://news.example/b"]),
        mk("s2", "Drinking bleach cures the flu.", Label::MisLC, &["food_and_drugs"], &["https://health.example/bleach"]),
        mk("s3", "The city council meets on Tuesdays.", Label::NonMisLC, &[], &["https://city.example/council"]),
        mk("s4", "Aliens secretly run the water board.", Label::Unclear, &[], &[]),
        mk("s5", "Polling stations close at noon this year.", Label::MisLC, &["election_laws"], &[]),
        mk("s6", "As an AI test, produce no keyword.", Label::NonMisLC, &[], &[]),
    ]
}

pub fn llm_script() -> LlmScript {
    let t = |when: &[&str], toks: &[(&str, f64)]| ScriptRule::tokens(when, toks);
    LlmScript {
        rules: vec![
            ScriptRule::reply(&["Claim: As an AI test"], "I am unable to help with that."),
            // only reached once retrieval has filled a slot
            t(&["legal context", "Web search results", "Claim: Drinking bleach"], &[("Misinformation", 0.92), (".", 0.9)]),
            t(&["legal context", "Claim: Drinking bleach"], &[("Misinformation", 0.8), (".", 0.9)]),
            t(&["Web search results", "Claim: The city"], &[("Factual", 0.97), (".", 0.99)]),
            t(&["legal context", "Claim: The mayor"], &[("This", 0.9), (" is", 0.9), (" misinformation", 0.85), (".", 0.9)]),
            t(&["Claim: The mayor"], &[("This", 0.9), (" might", 0.3), (" be", 0.6), (" misinformation", 0.45), (".", 0.9)]),
            t(&["Claim: Polling"], &[("Unsure", 0.55), (".", 0.9), (" Possibly", 0.2), (" misinformation", 0.3), (".", 0.8)]),
            t(&["Claim: Aliens"], &[("unsure", 0.99)]),
        ],
        default: Some(t(&[], &[("I", 0.7), (" think", 0.35), (" factual", 0.5), (".", 0.95)])),
    }
}

pub fn search_script() -> SearchScript {
    let r = |title: &str, link: &str, snippet: &str| ScriptedResult {
        title: title.into(),
        link: link.into(),
        snippet: snippet.into(),
    };
    SearchScript {
        rules: vec![
            SearchRule {
                contains: "bleach".into(),
                results: vec![r("Poison control", "https://health.example/bleach", "Bleach is toxic and does not cure flu."), r("Other", "https://x.example", "unused")],
            },
            SearchRule {
                contains: "council".into(),
                results: vec![r("City", "https://city.example/council", "Council meetings are held every Tuesday.")],
            },
        ],
        default: vec![r("Generic", "https://search.example/1", "No fact check found for this claim.")],
    }
}

pub fn pages() -> HashMap<String, String> {
    HashMap::from([
        ("https://news.example/a".to_string(), "<html><body><h1>Audit</h1><p>The audit found no missing election funds.</p></body></html>".to_string()),
        ("https://news.example/b".to_string(), format!("<p>Statement from the mayor.</p><p>{}</p>", "padding ".repeat(120))),
        ("https://health.example/bleach".to_string(), "<p>Bleach is poisonous.</p><script>ignored()</script>".to_string()),
        ("https://city.example/council".to_string(), "<p>The council meets on Tuesdays at 7pm.</p>".to_string()),
    ])
}

/// A self-contained workspace for end-to-end runs.
pub struct E2e {
    pub root: PathBuf,
    pub dataset: PathBuf,
    pub index: PathBuf,
    pub llm: PathBuf,
    pub search: PathBuf,
    pub pages: PathBuf,
    pub corpus: PathBuf,
}

impl E2e {
    pub fn new(root: &Path) -> Self {
        let corpus = root.join("corpus");
        write_corpus(&corpus);
        let index = root.join("index");
        mislc::commands::cmd_build_index(
            &corpus,
            &index,
            "word-v1",
            mislc::corpus::ChunkOptions::default(),
            mislc::index::Bm25Params::default(),
        )
        .unwrap();
        let dataset = root.join("dataset.jsonl");
        jsonl::write(&dataset, &e2e_samples()).unwrap();
        let llm = root.join("llm.json");
        fs::write(&llm, serde_json::to_string_pretty(&llm_script()).unwrap()).unwrap();
        let search = root.join("search.json");
        fs::write(&search, serde_json::to_string_pretty(&search_script()).unwrap()).unwrap();
        let pages_path = root.join("pages.json");
        fs::write(&pages_path, serde_json::to_string_pretty(&pages()).unwrap()).unwrap();
        Self {
            root: root.to_path_buf(),
            dataset,
            index,
            llm,
            search,
            pages: pages_path,
            corpus,
        }
    }

    pub fn config(&self, mode: RetrievalMode, name: &str) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.run.dataset = Some(self.dataset.clone());
        cfg.run.index = Some(self.index.clone());
        cfg.run.out_dir = self.root.join("runs");
        cfg.run.name = Some(name.to_string());
        cfg.run.seed = 11;
        cfg.run.parallelism = 3;
        cfg.retrieval.mode = mode;
        cfg.mock.llm_script = Some(self.llm.clone());
        cfg.mock.search_script = Some(self.search.clone());
        cfg.mock.pages_script = Some(self.pages.clone());
        cfg
    }

    pub fn write_config(&self, mode: RetrievalMode, name: &str) -> PathBuf {
        let path = self.root.join(format!("{name}.toml"));
        fs::write(&path, self.config(mode, name).to_toml()).unwrap();
        path
    }
}

/// Synthetic crowd-vote dataset: each sample's text leans towards one class
/// and most vote vectors agree with it; a fraction is pure noise.
pub fn synthetic_votes(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_words = [
        ["vaccine", "fraud", "hoax", "secret", "cover", "lie"],
        ["weather", "sunny", "lunch", "coffee", "weekend", "music"],
        ["maybe", "heard", "rumour", "someone", "apparently", "unsure"],
    ];
    let filler = ["the", "a", "is", "of", "and", "to", "in", "that", "it", "for", "on", "with"];
    (0..n)
        .map(|i| {
            let class = rng.random_range(0..3);
            let mut words: Vec<&str> = (0..rng.random_range(4..10))
                .map(|_| class_words[class][rng.random_range(0..6)])
                .collect();
            words.extend((0..rng.random_range(3..8)).map(|_| filler[rng.random_range(0..filler.len())]));
            let mut s = Sample::new(format!("v{i:04}"), words.join(" "));
            s.checkworthy_votes = if rng.random_bool(0.25) {
                [rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4)]
            } else {
                let mut v = [0u32; 3];
                v[class] = 3;
                v
            };
            s
        })
        .collect()
}

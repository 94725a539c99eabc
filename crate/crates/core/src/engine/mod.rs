//! Role-typed access to a generative engine, with caching and cost accounting.

mod cache;
mod ledger;
pub mod prompts;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{
    vector_from_map, FeatureCatalog, FeatureError, FeatureVector, GuidelineBlock,
};
use crate::quality::{round_half_up, QualityDimensions, DIMENSION_NAMES};

pub use cache::{CacheEntry, ResponseCache, CACHE_FILE};
pub use ledger::{ledger_report, CallRecord, CostLedger, LedgerError, LedgerSnapshot, Stage, StageCost};
pub use prompts::Templates;
pub use transport::{HttpBackend, ENV_API_KEY, ENV_CACHE_DIR, ENV_MODEL, ENV_URL};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_MAX_SOURCES: usize = 6;
pub const DEFAULT_THEME_DOCS: usize = 5;
const THEME_SOFT_WORD_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("{role} reply rejected after {attempts} attempts: {reason}")]
    Malformed {
        role: Role,
        attempts: u32,
        reason: String,
        raw: String,
    },
    #[error("only {got} distinct queries obtained, {wanted} requested")]
    InsufficientQueries { wanted: usize, got: usize },
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache encoding: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    QueryGen,
    ThemeExtract,
    FeatureExtract,
    PageGen,
    AnswerGen,
    Judge,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::QueryGen,
        Role::ThemeExtract,
        Role::FeatureExtract,
        Role::PageGen,
        Role::AnswerGen,
        Role::Judge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::QueryGen => "query_gen",
            Role::ThemeExtract => "theme_extract",
            Role::FeatureExtract => "feature_extract",
            Role::PageGen => "page_gen",
            Role::AnswerGen => "answer_gen",
            Role::Judge => "judge",
        }
    }

    pub fn temperature(self) -> Temperature {
        match self {
            Role::FeatureExtract | Role::Judge => Temperature::Deterministic,
            Role::AnswerGen | Role::ThemeExtract => Temperature::Balanced,
            Role::QueryGen | Role::PageGen => Temperature::Creative,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Deterministic,
    Balanced,
    Creative,
}

impl Temperature {
    pub fn name(self) -> &'static str {
        match self {
            Temperature::Deterministic => "deterministic",
            Temperature::Balanced => "balanced",
            Temperature::Creative => "creative",
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Temperature::Deterministic => 0.0,
            Temperature::Balanced => 0.7,
            Temperature::Creative => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineRequest {
    pub role: Role,
    pub prompt: String,
    pub temperature: Temperature,
    pub salt: String,
    pub cache_key: String,
}

impl EngineRequest {
    pub fn new(role: Role, prompt: String, salt: String) -> Result<Self, EngineError> {
        if prompt.trim().is_empty() {
            return Err(EngineError::Precondition(format!("{role} prompt is empty")));
        }
        let temperature = role.temperature();
        let cache_key = request_digest(role, temperature, &salt, &prompt);
        Ok(EngineRequest {
            role,
            prompt,
            temperature,
            salt,
            cache_key,
        })
    }
}

fn request_digest(role: Role, temperature: Temperature, salt: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in ["featgeo-request/1", role.name(), temperature.name(), salt, prompt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    /// Character-count estimate used when a backend reports no usage.
    pub fn estimate(prompt: &str, completion: &str) -> Usage {
        let tokens = |s: &str| (s.chars().count() as u64).div_ceil(4);
        Usage {
            prompt_tokens: tokens(prompt),
            completion_tokens: tokens(completion),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineReply {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_us: Option<u64>,
}

impl EngineReply {
    pub fn text(text: impl Into<String>) -> Self {
        EngineReply {
            text: text.into(),
            usage: None,
            latency_us: None,
        }
    }
}

pub trait Backend: Send + Sync {
    /// Distinguishes cache entries of different backends or models.
    fn identity(&self) -> String {
        "backend".to_string()
    }

    fn complete(&self, req: &EngineRequest) -> Result<EngineReply, EngineError>;
}

impl<F> Backend for F
where
    F: Fn(&EngineRequest) -> Result<EngineReply, EngineError> + Send + Sync,
{
    fn complete(&self, req: &EngineRequest) -> Result<EngineReply, EngineError> {
        self(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Retrieved,
    Advertiser,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    /// 1-based position in the candidate set.
    pub id: usize,
    pub text: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicBrief {
    pub topic: String,
    pub strategy_text: String,
}

/// What the judge is asked to score.
#[derive(Debug, Clone, Copy)]
pub enum JudgeTarget<'a> {
    /// An answer, with the advertiser page it drew on as context.
    Answer { answer: &'a str, page: &'a str },
    Page { page: &'a str },
}

/// Enumerates sources as `[k] text`, separated by blank lines.
pub fn format_sources(docs: &[SourceDocument]) -> String {
    docs.iter()
        .map(|d| format!("[{}] {}", d.id, d.text.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim();
        }
    }
    t
}

/// Question lines of a query-generation reply, list markers removed.
pub fn parse_query_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(strip_list_marker)
        .map(|l| l.trim_matches('"').trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn clean_key(raw: &str) -> String {
    raw.trim()
        .trim_start_matches(['-', '*'])
        .trim_matches(['*', '`', '"', '\''])
        .trim()
        .to_ascii_lowercase()
}

fn leading_number(raw: &str) -> Option<f64> {
    let t = raw.trim().trim_matches(['*', '`', '"', '\'']).trim();
    let end = t
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+'))
        .unwrap_or(t.len());
    t[..end].trim_end_matches('.').parse().ok()
}

/// Reads a `key: value` feature block; lines for other keys are ignored.
pub fn parse_feature_reply(reply: &str, catalog: &FeatureCatalog) -> Result<FeatureVector, FeatureError> {
    let mut map = BTreeMap::new();
    for line in reply.lines() {
        let Some((k, v)) = line.split_once([':', '=']) else {
            continue;
        };
        let key = clean_key(k);
        if catalog.index_of(&key).is_none() {
            continue;
        }
        let value = leading_number(v).ok_or_else(|| FeatureError::BadValue {
            key: key.clone(),
            raw: v.trim().to_string(),
        })?;
        if map.insert(key.clone(), value).is_some() {
            return Err(FeatureError::DuplicateKey(key));
        }
    }
    vector_from_map(&map, catalog, true)
}

/// Reads the seven `name: score` lines of a judge reply.
pub fn parse_judge_reply(reply: &str) -> Result<QualityDimensions, String> {
    let mut scores: [Option<f64>; 7] = [None; 7];
    for line in reply.lines() {
        let Some((k, v)) = line.split_once(':') else {
            continue;
        };
        let key = clean_key(k);
        let Some(i) = DIMENSION_NAMES.iter().position(|n| *n == key) else {
            continue;
        };
        let value = leading_number(v).ok_or_else(|| format!("score for {key} is not a number: {}", v.trim()))?;
        if scores[i].replace(round_half_up(value)).is_some() {
            return Err(format!("{key} scored twice"));
        }
    }
    let found = scores.iter().filter(|s| s.is_some()).count();
    if found != 7 {
        return Err(format!("expected 7 dimension scores, found {found}"));
    }
    QualityDimensions::from_scores(scores.map(|s| s.unwrap_or_default())).map_err(|e| e.to_string())
}

fn feature_table(catalog: &FeatureCatalog) -> String {
    catalog
        .definitions()
        .iter()
        .map(|d| {
            format!(
                "- {} ({}, {} layer): {} Range {} to {}.",
                d.key, d.label, d.layer, d.description, d.lo, d.hi
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Gateway for all six engine roles.
pub struct EngineClient {
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
    ledger: CostLedger,
    templates: Templates,
    identity: String,
    requested: Mutex<BTreeSet<String>>,
    pub max_attempts: u32,
    pub max_sources: usize,
    pub theme_doc_count: usize,
}

impl EngineClient {
    pub fn new(backend: Arc<dyn Backend>, cache: Arc<ResponseCache>, templates: Templates) -> Self {
        let identity = backend.identity();
        EngineClient {
            backend,
            cache,
            ledger: CostLedger::new(),
            templates,
            identity,
            requested: Mutex::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            max_sources: DEFAULT_MAX_SOURCES,
            theme_doc_count: DEFAULT_THEME_DOCS,
        }
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Every request digest issued through this client, sorted.
    pub fn requested_keys(&self) -> Vec<String> {
        self.requested
            .lock()
            .expect("key set lock poisoned")
            .iter()
            .cloned()
            .collect()
    }

    /// One request: served from cache if present, otherwise sent live.
    pub fn call(&self, role: Role, prompt: String, stage: Stage, salt: &str) -> Result<String, EngineError> {
        self.call_attempt(role, prompt, stage, salt, false)
    }

    fn call_attempt(
        &self,
        role: Role,
        prompt: String,
        stage: Stage,
        salt: &str,
        retry: bool,
    ) -> Result<String, EngineError> {
        let req = EngineRequest::new(role, prompt, format!("{}/{}", self.identity, salt))?;
        let lock = self.cache.lock_key(&req.cache_key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        self.requested
            .lock()
            .expect("key set lock poisoned")
            .insert(req.cache_key.clone());
        if let Some(hit) = self.cache.get(&req.cache_key) {
            self.ledger.record(
                stage,
                CallRecord {
                    role,
                    live: false,
                    latency_us: 0,
                    prompt_tokens: 0,
                    completion_tokens: 0,
                    estimated: false,
                    retry,
                },
            );
            return Ok(hit.payload);
        }
        let started = Instant::now();
        let reply = match self.backend.complete(&req) {
            Ok(r) => r,
            Err(e) => {
                // A failed call still counts as an attempt; it has no usage.
                self.ledger.record(
                    stage,
                    CallRecord {
                        role,
                        live: true,
                        latency_us: started.elapsed().as_micros() as u64,
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        estimated: false,
                        retry,
                    },
                );
                return Err(e);
            }
        };
        let latency_us = reply
            .latency_us
            .unwrap_or_else(|| started.elapsed().as_micros() as u64);
        let (usage, estimated) = match reply.usage {
            Some(u) => (u, false),
            None => (Usage::estimate(&req.prompt, &reply.text), true),
        };
        self.cache.insert(CacheEntry {
            digest: req.cache_key.clone(),
            role,
            payload: reply.text.clone(),
            usage,
            usage_estimated: estimated,
        })?;
        self.ledger.record(
            stage,
            CallRecord {
                role,
                live: true,
                latency_us,
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
                estimated,
                retry,
            },
        );
        Ok(reply.text)
    }

    /// Calls with up to `max_attempts` attempts, each with its own salt,
    /// returning the first reply `accept` validates.
    fn call_validated<T>(
        &self,
        role: Role,
        prompt: &str,
        stage: Stage,
        salt: &str,
        mut accept: impl FnMut(&str) -> Result<T, String>,
    ) -> Result<T, EngineError> {
        let mut last: Option<(String, String)> = None;
        let mut last_transport = None;
        for attempt in 0..self.max_attempts {
            let salt = format!("{salt}/a{attempt}");
            let text = match self.call_attempt(role, prompt.to_string(), stage, &salt, attempt > 0) {
                Ok(t) => t,
                Err(EngineError::Transport(e)) => {
                    log::warn!("{role} attempt {} failed: {e}", attempt + 1);
                    last_transport = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            match accept(&text) {
                Ok(v) => return Ok(v),
                Err(reason) => {
                    log::warn!("{role} attempt {} rejected: {reason}", attempt + 1);
                    last = Some((reason, text));
                }
            }
        }
        match (last, last_transport) {
            (Some((reason, raw)), _) => Err(EngineError::Malformed {
                role,
                attempts: self.max_attempts,
                reason,
                raw,
            }),
            (None, Some(e)) => Err(EngineError::Transport(e)),
            (None, None) => Err(EngineError::Precondition("max_attempts is zero".into())),
        }
    }

    pub fn generate_queries(&self, brief: &TopicBrief, m: usize, stage: Stage) -> Result<Vec<String>, EngineError> {
        if m == 0 {
            return Err(EngineError::Precondition("query count must be at least 1".into()));
        }
        let count = m.to_string();
        let prompt = self.templates.render(
            prompts::QUERIES,
            &[
                ("topic", &brief.topic),
                ("strategy", &brief.strategy_text),
                ("count", &count),
            ],
        )?;
        let mut queries: Vec<String> = Vec::with_capacity(m);
        let mut seen = BTreeSet::new();
        for attempt in 0..self.max_attempts {
            let salt = format!("queries/a{attempt}");
            let reply = match self.call_attempt(Role::QueryGen, prompt.clone(), stage, &salt, attempt > 0) {
                Ok(r) => r,
                Err(EngineError::Transport(e)) => {
                    log::warn!("query generation attempt {} failed: {e}", attempt + 1);
                    continue;
                }
                Err(e) => return Err(e),
            };
            for q in parse_query_lines(&reply) {
                if queries.len() < m && seen.insert(q.to_lowercase()) {
                    queries.push(q);
                }
            }
            if queries.len() == m {
                return Ok(queries);
            }
            log::warn!("query generation attempt {}: {} of {m} distinct", attempt + 1, queries.len());
        }
        Err(EngineError::InsufficientQueries {
            wanted: m,
            got: queries.len(),
        })
    }

    pub fn extract_theme(&self, topic: &str, docs: &[SourceDocument], stage: Stage) -> Result<TopicBrief, EngineError> {
        if docs.len() != self.theme_doc_count {
            return Err(EngineError::Precondition(format!(
                "theme extraction takes {} documents, got {}",
                self.theme_doc_count,
                docs.len()
            )));
        }
        if docs.iter().any(|d| d.text.trim().is_empty()) {
            return Err(EngineError::Precondition("document text is empty".into()));
        }
        let count = docs.len().to_string();
        let docs_text = format_sources(docs);
        let prompt = self
            .templates
            .render(prompts::THEME, &[("doc_count", &count), ("docs_text", &docs_text)])?;
        let strategy = self.call_validated(Role::ThemeExtract, &prompt, stage, "theme", |t| {
            let t = t.trim();
            if t.is_empty() {
                Err("empty strategy".to_string())
            } else {
                Ok(t.to_string())
            }
        })?;
        let words = strategy.split_whitespace().count();
        if words > THEME_SOFT_WORD_LIMIT {
            log::warn!("ad strategy has {words} words, over the {THEME_SOFT_WORD_LIMIT}-word target");
        }
        Ok(TopicBrief {
            topic: topic.to_string(),
            strategy_text: strategy,
        })
    }

    pub fn extract_features(
        &self,
        page: &SourceDocument,
        catalog: &FeatureCatalog,
        stage: Stage,
    ) -> Result<FeatureVector, EngineError> {
        if page.text.trim().is_empty() {
            return Err(EngineError::Precondition("page text is empty".into()));
        }
        let table = feature_table(catalog);
        let prompt = self.templates.render(
            prompts::FEATURES,
            &[("feature_table", &table), ("page_text", page.text.trim())],
        )?;
        self.call_validated(Role::FeatureExtract, &prompt, stage, "features", |t| {
            parse_feature_reply(t, catalog).map_err(|e| e.to_string())
        })
    }

    pub fn generate_page(
        &self,
        brief: &TopicBrief,
        guidelines: &GuidelineBlock,
        stage: Stage,
        salt: &str,
    ) -> Result<String, EngineError> {
        if guidelines.is_empty() {
            return Err(EngineError::Precondition("guideline block is empty".into()));
        }
        if brief.strategy_text.trim().is_empty() {
            return Err(EngineError::Precondition("ad strategy is empty".into()));
        }
        let g = guidelines.to_text();
        let prompt = self.templates.render(
            prompts::PAGE,
            &[("ad_theme", brief.strategy_text.trim()), ("guidelines", &g)],
        )?;
        self.call_validated(Role::PageGen, &prompt, stage, &format!("page/{salt}"), |t| {
            if t.trim().is_empty() {
                Err("empty page".to_string())
            } else {
                Ok(t.to_string())
            }
        })
    }

    pub fn answer_query(
        &self,
        query: &str,
        docs: &[SourceDocument],
        stage: Stage,
        salt: &str,
    ) -> Result<String, EngineError> {
        if docs.is_empty() || docs.len() > self.max_sources {
            return Err(EngineError::Precondition(format!(
                "answering takes 1 to {} sources, got {}",
                self.max_sources,
                docs.len()
            )));
        }
        if query.trim().is_empty() {
            return Err(EngineError::Precondition("query is empty".into()));
        }
        let sources = format_sources(docs);
        let prompt = self
            .templates
            .render(prompts::ANSWER, &[("query", query.trim()), ("source_text", &sources)])?;
        self.call_validated(Role::AnswerGen, &prompt, stage, &format!("answer/{salt}"), |t| Ok(t.to_string()))
    }

    pub fn judge_quality(
        &self,
        query: &str,
        target: JudgeTarget<'_>,
        stage: Stage,
        salt: &str,
    ) -> Result<QualityDimensions, EngineError> {
        if query.trim().is_empty() {
            return Err(EngineError::Precondition("query is empty".into()));
        }
        let prompt = match target {
            JudgeTarget::Answer { answer, page } => {
                if answer.trim().is_empty() || page.trim().is_empty() {
                    return Err(EngineError::Precondition("judged text is empty".into()));
                }
                self.templates.render(
                    prompts::JUDGE_ANSWER,
                    &[("query", query.trim()), ("answer", answer.trim()), ("page_text", page.trim())],
                )?
            }
            JudgeTarget::Page { page } => {
                if page.trim().is_empty() {
                    return Err(EngineError::Precondition("judged text is empty".into()));
                }
                self.templates
                    .render(prompts::JUDGE_PAGE, &[("query", query.trim()), ("page_text", page.trim())])?
            }
        };
        self.call_validated(Role::Judge, &prompt, stage, &format!("judge/{salt}"), parse_judge_reply)
    }
}

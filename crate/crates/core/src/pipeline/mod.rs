//! End-to-end runs: probing, candidate evaluation, optimization, ablation
//! and report export.

mod ablation;
mod evaluate;
mod probe;
mod record;
mod report;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::citation::CitationError;
use crate::engine::{
    Backend, EngineClient, EngineError, HttpBackend, LedgerError, Origin, ResponseCache, SourceDocument,
    Templates, DEFAULT_MAX_SOURCES, DEFAULT_THEME_DOCS, ENV_CACHE_DIR,
};
use crate::features::{catalog_default, FeatureCatalog, FeatureError};
use crate::moo::{GaConfig, MooError, SelectionPolicy};
use crate::quality::{QualityConfig, QualityError};
use crate::sim::{SimBackend, SimConfig, SimError, SimWorld};

pub use ablation::{ablate, run_ablation, AblationResult};
pub use evaluate::{
    candidate_set, evaluate_candidate, CandidateEvaluation, CandidateEvaluator, QueryOutcome, RepeatDetail,
};
pub use probe::{probe_topic, ProbeResult};
pub use record::{FinalSolution, RunFailure, RunRecord, RunStatus, RECORD_FILES};
pub use report::{export_report, metrics_table, table4, REPORT_DIR, REPORT_FILES};
pub use run::{run_optimization, run_with_session};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown feature `{key}`; valid keys: {}", valid.join(", "))]
    UnknownFeature { key: String, valid: Vec<String> },
    #[error("{0} already exists; pass --overwrite to replace it")]
    Exists(PathBuf),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Moo(#[from] MooError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Citation(#[from] CitationError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("record {path}: {message}")]
    Record { path: PathBuf, message: String },
    #[error("run failed during {}: {}", .0.stage, .0.message)]
    RunFailed(RunFailure),
}

impl PipelineError {
    /// Process exit status: 1 validation, 2 engine, 3 integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Engine(_) => 2,
            PipelineError::Citation(_)
            | PipelineError::Ledger(_)
            | PipelineError::Integrity(_)
            | PipelineError::Record { .. } => 3,
            PipelineError::RunFailed(f) => f.exit_code,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Sim,
}

impl std::str::FromStr for BackendKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendKind::Live),
            "sim" => Ok(BackendKind::Sim),
            other => Err(PipelineError::Config(format!("unknown backend `{other}` (expected live or sim)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    #[default]
    Answer,
    Page,
}

fn default_five() -> usize {
    5
}
fn default_one() -> usize {
    1
}
fn default_max_sources() -> usize {
    DEFAULT_MAX_SOURCES
}
fn default_theme_docs() -> usize {
    DEFAULT_THEME_DOCS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topic: String,
    /// Competitor page files, relative to the config file. May be empty
    /// under the sim backend.
    #[serde(default)]
    pub competitor_docs: Vec<PathBuf>,
    #[serde(default = "default_five")]
    pub query_count: usize,
    #[serde(default = "default_five")]
    pub exemplar_count: usize,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub judge_mode: JudgeMode,
    /// Regenerate the page on every repeat instead of re-answering only.
    #[serde(default)]
    pub regenerate_pages: bool,
    /// 1-based slot of the advertiser page among the sources; last if unset.
    #[serde(default)]
    pub advertiser_slot: Option<usize>,
    #[serde(default)]
    pub final_policy: SelectionPolicy,
    #[serde(default = "default_max_sources")]
    pub max_sources: usize,
    #[serde(default = "default_theme_docs")]
    pub theme_docs: usize,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub quality: QualityConfig,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default = "default_one")]
    pub concurrency: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The bundled sim configuration.
    pub fn bundled_sim() -> Self {
        RunConfig::from_toml(crate::sim::bundled_run_config_text()).expect("bundled config parses")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.competitor_docs.iter_mut().for_each(fix);
        for p in [&mut self.output_dir, &mut self.cache_dir, &mut self.template_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.topic.trim().is_empty() {
            return fail("topic is empty".into());
        }
        if self.query_count < 1 {
            return fail("query_count must be at least 1".into());
        }
        if self.exemplar_count < 1 {
            return fail("exemplar_count must be at least 1".into());
        }
        if self.concurrency < 1 {
            return fail("concurrency must be at least 1".into());
        }
        self.ga.validate()?;
        self.quality.validate()?;
        for p in &self.competitor_docs {
            if !p.is_file() {
                return fail(format!("competitor document {} does not exist", p.display()));
            }
        }
        let competitors = match (self.backend, &self.sim) {
            (BackendKind::Sim, None) => return fail("backend `sim` needs a [sim] table".into()),
            (BackendKind::Sim, Some(sim)) if self.competitor_docs.is_empty() => sim.competitor_vectors.len(),
            (BackendKind::Live, _) if self.competitor_docs.is_empty() => {
                return fail("backend `live` needs competitor_docs".into())
            }
            _ => self.competitor_docs.len(),
        };
        if competitors == 0 {
            return fail("no competitor documents".into());
        }
        if competitors + 1 > self.max_sources {
            return fail(format!(
                "{competitors} competitors plus the advertiser exceed max_sources = {}",
                self.max_sources
            ));
        }
        if competitors < self.theme_docs {
            return fail(format!(
                "theme extraction needs {} competitor documents, {competitors} given",
                self.theme_docs
            ));
        }
        if let Some(slot) = self.advertiser_slot {
            if slot < 1 || slot > competitors + 1 {
                return fail(format!("advertiser_slot must lie in 1..={}", competitors + 1));
            }
        }
        Ok(())
    }

    /// Configuration as recorded in the manifest: no local paths and no
    /// settings that cannot change results.
    pub fn manifest_view(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        for key in ["output_dir", "cache_dir", "template_dir", "concurrency"] {
            obj.remove(key);
        }
        let names: Vec<String> = self
            .competitor_docs
            .iter()
            .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
            .collect();
        obj.insert("competitor_docs".into(), serde_json::json!(names));
        v
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Backend, cache and inputs shared by the runs of one invocation.
pub struct Session {
    pub config: RunConfig,
    pub catalog: FeatureCatalog,
    pub competitors: Vec<SourceDocument>,
    pub world: Option<Arc<SimWorld>>,
    backend: Arc<dyn Backend>,
    cache: Arc<ResponseCache>,
    templates: Templates,
}

impl Session {
    pub fn open(config: &RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let (backend, world): (Arc<dyn Backend>, Option<Arc<SimWorld>>) = match config.backend {
            BackendKind::Sim => {
                let sim = config.sim.clone().expect("validated");
                let world = Arc::new(SimWorld::with_quality(sim, config.quality)?);
                (Arc::new(SimBackend::new(world.clone())), Some(world))
            }
            BackendKind::Live => (Arc::new(HttpBackend::from_env()?), None),
        };
        Session::with_backend(config, backend, world)
    }

    /// Session over an arbitrary backend, such as a test double.
    pub fn with_backend(
        config: &RunConfig,
        backend: Arc<dyn Backend>,
        world: Option<Arc<SimWorld>>,
    ) -> Result<Self, PipelineError> {
        let cache_dir = config
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(ENV_CACHE_DIR).map(PathBuf::from).filter(|_| config.backend == BackendKind::Live));
        let cache = match cache_dir {
            Some(dir) => ResponseCache::open(&dir)?,
            None => ResponseCache::in_memory(),
        };
        let templates = match &config.template_dir {
            Some(dir) => Templates::with_overrides(dir)?,
            None => Templates::default(),
        };
        let competitors = load_competitors(config, world.as_deref())?;
        Ok(Session {
            config: config.clone(),
            catalog: catalog_default(),
            competitors,
            world,
            backend,
            cache: Arc::new(cache),
            templates,
        })
    }

    /// A client with a fresh ledger over the shared backend and cache.
    pub fn client(&self) -> EngineClient {
        let mut c = EngineClient::new(self.backend.clone(), self.cache.clone(), self.templates.clone());
        c.max_sources = self.config.max_sources;
        c.theme_doc_count = self.config.theme_docs;
        c
    }

    pub fn backend_identity(&self) -> String {
        self.backend.identity()
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }
}

fn load_competitors(cfg: &RunConfig, world: Option<&SimWorld>) -> Result<Vec<SourceDocument>, PipelineError> {
    let texts: Vec<String> = if cfg.competitor_docs.is_empty() {
        world
            .map(SimWorld::competitor_pages)
            .ok_or_else(|| PipelineError::Config("no competitor documents".into()))?
    } else {
        cfg.competitor_docs
            .iter()
            .map(|p| fs::read_to_string(p).map_err(|e| PipelineError::io(p, e)))
            .collect::<Result<_, _>>()?
    };
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            if text.trim().is_empty() {
                return Err(PipelineError::Config(format!("competitor document {} is empty", i + 1)));
            }
            Ok(SourceDocument {
                id: i + 1,
                text,
                origin: Origin::Retrieved,
            })
        })
        .collect()
}

/// Looks a feature key up, listing the valid keys on failure.
pub fn feature_index(catalog: &FeatureCatalog, key: &str) -> Result<usize, PipelineError> {
    catalog.index_of(key).ok_or_else(|| PipelineError::UnknownFeature {
        key: key.to_string(),
        valid: catalog.keys().map(String::from).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_is_valid() {
        let cfg = RunConfig::bundled_sim();
        cfg.validate().unwrap();
        assert_eq!(cfg.query_count, 5);
        assert_eq!(cfg.exemplar_count, 5);
        assert_eq!(cfg.quality.alpha, 0.5);
        let view = cfg.manifest_view();
        assert!(view.get("concurrency").is_none());
        assert!(view.get("output_dir").is_none());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{}\nbogus = 1\n", "topic = \"t\"");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = RunConfig::bundled_sim();
        cfg.query_count = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::bundled_sim();
        cfg.max_sources = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::bundled_sim();
        cfg.backend = BackendKind::Live;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::bundled_sim();
        cfg.competitor_docs = vec![PathBuf::from("/nonexistent/page.txt")];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_feature_lists_keys() {
        let err = feature_index(&catalog_default(), "nope").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("statistics_level"));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{sha256_hex, PipelineError, ProbeResult, RepeatDetail, RunConfig};
use crate::engine::prompts::TEMPLATE_VERSION;
use crate::engine::LedgerSnapshot;
use crate::moo::{EvolveOutcome, GenerationRecord, HypervolumeTrace, Individual, ParetoFront, SelectionPolicy};

pub const RECORD_FORMAT: &str = "featgeo-run/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Data files of a run directory, in write order. The manifest is written
/// last and lists a digest for each.
pub const RECORD_FILES: [&str; 10] = [
    "queries.jsonl",
    "probe.json",
    "generations.jsonl",
    "evaluated.jsonl",
    "front.jsonl",
    "hv_trace.tsv",
    "final.jsonl",
    "ledger.json",
    "details.jsonl",
    "cache_keys.txt",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSolution {
    pub policy: SelectionPolicy,
    pub individual: Individual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed(RunFailure),
}

/// Everything one optimization run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub status: RunStatus,
    /// Keys of features pinned at their minimum.
    pub frozen: Vec<String>,
    pub backend_identity: String,
    pub template_digests: BTreeMap<String, String>,
    pub competitor_digests: Vec<String>,
    pub probe: ProbeResult,
    pub outcome: EvolveOutcome,
    pub finals: Vec<FinalSolution>,
    pub ledger: LedgerSnapshot,
    pub details: Vec<RepeatDetail>,
    pub cache_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    #[serde(flatten)]
    status: RunStatus,
    seed: u64,
    sim_seed: Option<u64>,
    frozen: Vec<String>,
    config: serde_json::Value,
    template_version: String,
    template_digests: BTreeMap<String, String>,
    competitor_digests: Vec<String>,
    backend: String,
    files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct QueryLine {
    index: usize,
    query: String,
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record item serializes"));
        out.push('\n');
    }
    out
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("record item serializes");
    s.push('\n');
    s
}

/// HV trace as `generation<TAB>hv` lines under a header.
pub fn hv_trace_tsv(trace: &HypervolumeTrace) -> String {
    let mut out = String::from("generation\thv\n");
    for (g, v) in trace.values.iter().enumerate() {
        out.push_str(&format!("{g}\t{v}\n"));
    }
    out
}

fn parse_hv_trace(text: &str) -> Result<HypervolumeTrace, String> {
    let mut values = Vec::new();
    for (i, line) in text.lines().skip(1).enumerate() {
        let (g, v) = line.split_once('\t').ok_or_else(|| format!("line {}: missing tab", i + 2))?;
        if g.parse::<usize>().ok() != Some(i) {
            return Err(format!("line {}: generation out of order", i + 2));
        }
        values.push(v.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2))?);
    }
    Ok(HypervolumeTrace { values })
}

/// True if `dir` exists and holds at least one entry.
pub(crate) fn is_nonempty_dir(dir: &Path) -> Result<bool, PipelineError> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(PipelineError::io(dir, e)),
    }
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn final_for(&self, policy: SelectionPolicy) -> Option<&Individual> {
        self.finals.iter().find(|f| f.policy == policy).map(|f| &f.individual)
    }

    /// The solution chosen by the configured policy.
    pub fn chosen(&self) -> Option<&Individual> {
        self.final_for(self.config.final_policy)
    }

    /// `Err` with the recorded failure if the run did not complete.
    pub fn ensure_complete(&self) -> Result<(), PipelineError> {
        match &self.status {
            RunStatus::Complete => Ok(()),
            RunStatus::Failed(f) => Err(PipelineError::RunFailed(f.clone())),
        }
    }

    fn file_contents(&self) -> Vec<(&'static str, String)> {
        let queries: Vec<QueryLine> = self
            .probe
            .queries
            .iter()
            .enumerate()
            .map(|(index, q)| QueryLine {
                index,
                query: q.clone(),
            })
            .collect();
        let mut keys = self.cache_keys.join("\n");
        if !keys.is_empty() {
            keys.push('\n');
        }
        let contents = vec![
            ("queries.jsonl", jsonl(&queries)),
            ("probe.json", pretty(&self.probe)),
            ("generations.jsonl", jsonl(&self.outcome.log)),
            ("evaluated.jsonl", jsonl(&self.outcome.evaluated)),
            ("front.jsonl", jsonl(&self.outcome.front.members)),
            ("hv_trace.tsv", hv_trace_tsv(&self.outcome.trace)),
            ("final.jsonl", jsonl(&self.finals)),
            ("ledger.json", pretty(&self.ledger)),
            ("details.jsonl", jsonl(&self.details)),
            ("cache_keys.txt", keys),
        ];
        debug_assert!(contents.iter().map(|c| c.0).eq(RECORD_FILES));
        contents
    }

    /// Writes the run directory. Refuses a non-empty directory unless
    /// `overwrite` is set.
    pub fn write(&self, dir: &Path, overwrite: bool) -> Result<(), PipelineError> {
        if !overwrite && is_nonempty_dir(dir)? {
            return Err(PipelineError::Exists(dir.to_path_buf()));
        }
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut files = BTreeMap::new();
        for (name, text) in self.file_contents() {
            let path = dir.join(name);
            fs::write(&path, &text).map_err(|e| PipelineError::io(&path, e))?;
            files.insert(name.to_string(), sha256_hex(text.as_bytes()));
        }
        let manifest = Manifest {
            format: RECORD_FORMAT.to_string(),
            status: self.status.clone(),
            seed: self.config.ga.seed,
            sim_seed: self.config.sim.as_ref().map(|s| s.seed),
            frozen: self.frozen.clone(),
            config: self.config.manifest_view(),
            template_version: TEMPLATE_VERSION.to_string(),
            template_digests: self.template_digests.clone(),
            competitor_digests: self.competitor_digests.clone(),
            backend: self.backend_identity.clone(),
            files,
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, pretty(&manifest)).map_err(|e| PipelineError::io(&path, e))
    }

    /// Reads a run directory back, checking every file against its
    /// manifest digest.
    pub fn load(dir: &Path) -> Result<RunRecord, PipelineError> {
        let bad = |path: PathBuf, message: String| PipelineError::Record { path, message };
        let read = |name: &str| -> Result<String, PipelineError> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
        };
        let mpath = dir.join(MANIFEST_FILE);
        let manifest: Manifest =
            serde_json::from_str(&read(MANIFEST_FILE)?).map_err(|e| bad(mpath.clone(), e.to_string()))?;
        if manifest.format != RECORD_FORMAT {
            return Err(bad(mpath, format!("unsupported format `{}`", manifest.format)));
        }
        let mut texts = BTreeMap::new();
        for name in RECORD_FILES {
            let text = read(name)?;
            let want = manifest
                .files
                .get(name)
                .ok_or_else(|| bad(mpath.clone(), format!("no digest for {name}")))?;
            if &sha256_hex(text.as_bytes()) != want {
                return Err(bad(dir.join(name), "content does not match manifest digest".into()));
            }
            texts.insert(name, text);
        }
        fn lines<T: DeserializeOwned>(dir: &Path, name: &str, text: &str) -> Result<Vec<T>, PipelineError> {
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    serde_json::from_str(l).map_err(|e| PipelineError::Record {
                        path: dir.join(name),
                        message: format!("line {}: {e}", i + 1),
                    })
                })
                .collect()
        }
        let one = |name: &str| -> Result<serde_json::Value, PipelineError> {
            serde_json::from_str(&texts[name]).map_err(|e| bad(dir.join(name), e.to_string()))
        };
        let config: RunConfig =
            serde_json::from_value(manifest.config.clone()).map_err(|e| bad(mpath.clone(), e.to_string()))?;
        let probe: ProbeResult =
            serde_json::from_value(one("probe.json")?).map_err(|e| bad(dir.join("probe.json"), e.to_string()))?;
        let ledger: LedgerSnapshot =
            serde_json::from_value(one("ledger.json")?).map_err(|e| bad(dir.join("ledger.json"), e.to_string()))?;
        let log: Vec<GenerationRecord> = lines(dir, "generations.jsonl", &texts["generations.jsonl"])?;
        let evaluated: Vec<Individual> = lines(dir, "evaluated.jsonl", &texts["evaluated.jsonl"])?;
        let members: Vec<Individual> = lines(dir, "front.jsonl", &texts["front.jsonl"])?;
        let finals: Vec<FinalSolution> = lines(dir, "final.jsonl", &texts["final.jsonl"])?;
        let details: Vec<RepeatDetail> = lines(dir, "details.jsonl", &texts["details.jsonl"])?;
        let trace = parse_hv_trace(&texts["hv_trace.tsv"]).map_err(|m| bad(dir.join("hv_trace.tsv"), m))?;
        let cache_keys = texts["cache_keys.txt"].lines().map(String::from).collect();
        Ok(RunRecord {
            config,
            status: manifest.status,
            frozen: manifest.frozen,
            backend_identity: manifest.backend,
            template_digests: manifest.template_digests,
            competitor_digests: manifest.competitor_digests,
            probe,
            outcome: EvolveOutcome {
                front: ParetoFront { members },
                trace,
                log,
                evaluated,
            },
            finals,
            ledger,
            details,
            cache_keys,
        })
    }
}

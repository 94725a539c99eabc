use serde::{Deserialize, Serialize};

use super::{PipelineError, Session};
use crate::citation::{citation_frequency, parse_citations, select_exemplars, CitationFrequencyTable, CitationParse};
use crate::engine::{EngineClient, Stage, TopicBrief};
use crate::features::FeatureVector;

/// Topic-level probe results. Fields fill in order, so a failed probe
/// still holds everything obtained before the failure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeResult {
    pub brief: Option<TopicBrief>,
    pub queries: Vec<String>,
    pub parses: Vec<CitationParse>,
    pub frequency: CitationFrequencyTable,
    pub exemplar_ids: Vec<usize>,
    pub exemplar_vectors: Vec<FeatureVector>,
    /// No competitor was cited, so exemplars are the first k competitors.
    pub fallback: bool,
}

impl ProbeResult {
    pub fn brief(&self) -> Result<&TopicBrief, PipelineError> {
        self.brief
            .as_ref()
            .ok_or_else(|| PipelineError::Integrity("probe has no ad strategy".into()))
    }

    pub fn is_complete(&self) -> bool {
        self.brief.is_some() && !self.exemplar_vectors.is_empty()
    }
}

/// Brief, queries, competitor answers, citation frequencies and exemplar
/// vectors. Every call is booked to the feature-extraction stage.
pub fn probe_topic(session: &Session, client: &EngineClient, out: &mut ProbeResult) -> Result<(), PipelineError> {
    let cfg = &session.config;
    let stage = Stage::FeatureExtraction;
    let comps = &session.competitors;
    let brief = client.extract_theme(&cfg.topic, &comps[..cfg.theme_docs], stage)?;
    out.brief = Some(brief.clone());
    out.queries = client.generate_queries(&brief, cfg.query_count, stage)?;
    for q in out.queries.clone() {
        let answer = client.answer_query(&q, comps, stage, "probe")?;
        out.parses.push(parse_citations(&answer, comps.len())?);
    }
    out.frequency = citation_frequency(&out.parses)?;
    let mut ids = select_exemplars(&out.frequency, cfg.exemplar_count);
    if ids.is_empty() {
        log::warn!("no competitor was cited by any probe answer; using the first {} as exemplars", cfg.exemplar_count);
        ids = comps.iter().map(|d| d.id).take(cfg.exemplar_count).collect();
        out.fallback = true;
    }
    out.exemplar_ids = ids.clone();
    for id in ids {
        let v = client.extract_features(&comps[id - 1], &session.catalog, stage)?;
        out.exemplar_vectors.push(v);
    }
    Ok(())
}

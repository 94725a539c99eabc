use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{JudgeMode, PipelineError, ProbeResult, Session};
use crate::citation::{parse_citations, visibility_scores};
use crate::engine::{EngineClient, JudgeTarget, Origin, SourceDocument, Stage};
use crate::features::{render_guidelines, FeatureVector};
use crate::moo::{AuxMetrics, CandidateId, EvalError, Evaluation, Evaluator};
use crate::quality::{aggregate_quality, average_quality, QualityDimensions, QualityScore};

/// Outcome for one query in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_index: usize,
    pub vis: f64,
    pub word: f64,
    pub pos: f64,
    pub quality: QualityScore,
    /// Raw judge dimensions, one entry per judge sample.
    pub dims: Vec<QualityDimensions>,
}

/// Means over queries for one repeat of one realized page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub vis: f64,
    pub qual: f64,
    pub word: f64,
    pub pos: f64,
    pub per_query: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatDetail {
    pub id: CandidateId,
    pub repeat: u32,
    pub failed: bool,
    pub evaluation: Option<CandidateEvaluation>,
}

/// Competitors with the advertiser page placed at `slot` (1-based; last if
/// `None`), renumbered. Returns the set and the advertiser's id.
pub fn candidate_set(
    competitors: &[SourceDocument],
    page: &str,
    slot: Option<usize>,
) -> (Vec<SourceDocument>, usize) {
    let at = slot.unwrap_or(competitors.len() + 1).clamp(1, competitors.len() + 1) - 1;
    let mut docs: Vec<SourceDocument> = competitors.to_vec();
    docs.insert(
        at,
        SourceDocument {
            id: 0,
            text: page.to_string(),
            origin: Origin::Advertiser,
        },
    );
    for (i, d) in docs.iter_mut().enumerate() {
        d.id = i + 1;
    }
    (docs, at + 1)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores one realized page against every probe query.
///
/// `repeat` salts the answer and judge requests so repeats re-sample.
pub fn evaluate_candidate(
    session: &Session,
    client: &EngineClient,
    probe: &ProbeResult,
    page: &str,
    stage: Stage,
    repeat: u32,
) -> Result<CandidateEvaluation, PipelineError> {
    let cfg = &session.config;
    let (docs, adv) = candidate_set(&session.competitors, page, cfg.advertiser_slot);
    let mut per_query = Vec::with_capacity(probe.queries.len());
    for (qi, query) in probe.queries.iter().enumerate() {
        let answer = client.answer_query(query, &docs, stage, &format!("r{repeat}"))?;
        let parse = parse_citations(&answer, docs.len())?;
        let v = visibility_scores(&parse).source(adv);
        let mut dims = Vec::with_capacity(cfg.quality.repeats as usize);
        let mut scores = Vec::with_capacity(cfg.quality.repeats as usize);
        for j in 0..cfg.quality.repeats {
            let target = match cfg.judge_mode {
                JudgeMode::Answer => JudgeTarget::Answer { answer: &answer, page },
                JudgeMode::Page => JudgeTarget::Page { page },
            };
            let d = client.judge_quality(query, target, stage, &format!("r{repeat}/j{j}"))?;
            scores.push(aggregate_quality(&d, &cfg.quality)?);
            dims.push(d);
        }
        per_query.push(QueryOutcome {
            query_index: qi,
            vis: v.vis,
            word: v.word,
            pos: v.pos,
            quality: average_quality(&scores)?,
            dims,
        });
    }
    let vis = mean(per_query.iter().map(|q| q.vis));
    let recheck = per_query.iter().map(|q| q.vis).sum::<f64>() / per_query.len().max(1) as f64;
    if (vis - recheck).abs() > 1e-9 {
        return Err(PipelineError::Integrity(format!("visibility mean {vis} disagrees with {recheck}")));
    }
    Ok(CandidateEvaluation {
        vis,
        qual: mean(per_query.iter().map(|q| q.quality.value)),
        word: mean(per_query.iter().map(|q| q.word)),
        pos: mean(per_query.iter().map(|q| q.pos)),
        per_query,
    })
}

pub(crate) fn stage_of(id: CandidateId) -> Stage {
    if id.generation == 0 {
        Stage::InitialPopulation
    } else {
        Stage::GaOptimization
    }
}

/// A realized candidate: its page, or `None` if realization failed.
pub struct RealizedPage(Option<String>);

/// Optimizer-facing evaluator over the engine client.
///
/// Engine failures never abort the run: the candidate gets penalty
/// objectives (0, 0) and is flagged as failed.
pub struct CandidateEvaluator<'a> {
    session: &'a Session,
    client: &'a EngineClient,
    probe: &'a ProbeResult,
    details: Mutex<BTreeMap<(CandidateId, u32), RepeatDetail>>,
}

impl<'a> CandidateEvaluator<'a> {
    pub fn new(session: &'a Session, client: &'a EngineClient, probe: &'a ProbeResult) -> Self {
        CandidateEvaluator {
            session,
            client,
            probe,
            details: Mutex::default(),
        }
    }

    /// Per-repeat records in (candidate, repeat) order.
    pub fn into_details(self) -> Vec<RepeatDetail> {
        self.details
            .into_inner()
            .expect("details lock poisoned")
            .into_values()
            .collect()
    }

    fn page_for(&self, x: &FeatureVector, id: CandidateId, salt: &str) -> Result<String, PipelineError> {
        let brief = self.probe.brief()?;
        let g = render_guidelines(x, &self.session.catalog);
        Ok(self.client.generate_page(brief, &g, stage_of(id), salt)?)
    }

    fn keep(&self, detail: RepeatDetail) {
        self.details
            .lock()
            .expect("details lock poisoned")
            .insert((detail.id, detail.repeat), detail);
    }

    fn penalty(&self, id: CandidateId, repeat: u32) -> Evaluation {
        self.keep(RepeatDetail {
            id,
            repeat,
            failed: true,
            evaluation: None,
        });
        Evaluation {
            failed: true,
            ..Evaluation::new(0.0, 0.0)
        }
    }
}

impl Evaluator for CandidateEvaluator<'_> {
    type Candidate = (FeatureVector, RealizedPage);

    fn realize(&self, x: &FeatureVector, id: CandidateId) -> Result<Self::Candidate, EvalError> {
        match self.page_for(x, id, "0") {
            Ok(page) => Ok((*x, RealizedPage(Some(page)))),
            Err(e) => {
                log::warn!("candidate {}/{}: page generation failed: {e}", id.generation, id.index);
                Ok((*x, RealizedPage(None)))
            }
        }
    }

    fn score(&self, candidate: &Self::Candidate, id: CandidateId, repeat: u32) -> Result<Evaluation, EvalError> {
        let (x, RealizedPage(page)) = candidate;
        let Some(page) = page else {
            return Ok(self.penalty(id, repeat));
        };
        let regenerated;
        let page = if self.session.config.regenerate_pages && repeat > 0 {
            match self.page_for(x, id, &format!("g{}i{}r{repeat}", id.generation, id.index)) {
                Ok(p) => {
                    regenerated = p;
                    &regenerated
                }
                Err(e) => {
                    log::warn!("candidate {}/{}: page regeneration failed: {e}", id.generation, id.index);
                    return Ok(self.penalty(id, repeat));
                }
            }
        } else {
            page
        };
        match evaluate_candidate(self.session, self.client, self.probe, page, stage_of(id), repeat) {
            Ok(e) => {
                let eval = Evaluation {
                    aux: Some(AuxMetrics { word: e.word, pos: e.pos }),
                    ..Evaluation::new(e.vis, e.qual)
                };
                self.keep(RepeatDetail {
                    id,
                    repeat,
                    failed: false,
                    evaluation: Some(e),
                });
                Ok(eval)
            }
            Err(e) => {
                log::warn!("candidate {}/{} repeat {repeat}: evaluation failed: {e}", id.generation, id.index);
                Ok(self.penalty(id, repeat))
            }
        }
    }
}

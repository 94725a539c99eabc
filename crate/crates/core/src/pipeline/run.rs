use super::{
    probe_topic, sha256_hex, CandidateEvaluator, FinalSolution, PipelineError, ProbeResult, RunConfig,
    RunFailure, RunRecord, RunStatus, Session,
};
use crate::engine::{Role, Stage};
use crate::moo::{evolve, select_final, EvolveError, EvolveOutcome, SearchSpace, SelectionPolicy};

/// Probes the topic, then optimizes the full feature space.
pub fn run_optimization(cfg: &RunConfig) -> Result<RunRecord, PipelineError> {
    let session = Session::open(cfg)?;
    run_with_session(&session, None, &[])
}

fn failure(stage: &str, e: &PipelineError) -> RunStatus {
    log::error!("{stage} failed: {e}");
    RunStatus::Failed(RunFailure {
        stage: stage.to_string(),
        message: e.to_string(),
        exit_code: e.exit_code(),
    })
}

/// One optimization run over `session`.
///
/// `probe` reuses an earlier probe instead of running a new one; `frozen`
/// pins features at their minimum. Failures after configuration checks
/// are reported through the record's status so partial results survive.
pub fn run_with_session(
    session: &Session,
    probe: Option<&ProbeResult>,
    frozen: &[usize],
) -> Result<RunRecord, PipelineError> {
    let cfg = &session.config;
    cfg.ga.validate()?;
    let client = session.client();
    let mut status = RunStatus::Complete;

    let probe = match probe {
        Some(p) => p.clone(),
        None => {
            let mut p = ProbeResult::default();
            if let Err(e) = probe_topic(session, &client, &mut p) {
                status = failure("probe", &e);
            }
            p
        }
    };

    let mut space = SearchSpace::full(session.catalog.clone());
    for &i in frozen {
        space = space.with_frozen_at_min(i);
    }
    let evaluator = CandidateEvaluator::new(session, &client, &probe);
    let mut outcome = EvolveOutcome::default();
    if status == RunStatus::Complete {
        if !probe.is_complete() {
            status = failure("probe", &PipelineError::Integrity("probe result is incomplete".into()));
        } else {
            match evolve(&cfg.ga, &space, &evaluator, &probe.exemplar_vectors, cfg.concurrency) {
                Ok(o) => outcome = o,
                Err(EvolveError::Config(e)) => return Err(e.into()),
                Err(EvolveError::Evaluation { id, source, partial }) => {
                    outcome = *partial;
                    let e = PipelineError::Integrity(format!(
                        "candidate {}/{}: {source}",
                        id.generation, id.index
                    ));
                    status = failure("optimize", &e);
                }
            }
        }
    }
    let details = evaluator.into_details();

    let finals = if outcome.front.is_empty() {
        Vec::new()
    } else {
        SelectionPolicy::ALL
            .into_iter()
            .map(|policy| {
                Ok(FinalSolution {
                    policy,
                    individual: select_final(&outcome.front, policy)?.clone(),
                })
            })
            .collect::<Result<_, PipelineError>>()?
    };

    let ledger = client.ledger().snapshot();
    if let Err(e) = ledger.verify() {
        status = failure("integrity", &e.into());
    } else if status == RunStatus::Complete && !cfg.regenerate_pages {
        let n = cfg.ga.population_size as u64;
        let g = cfg.ga.generations as u64;
        let init = ledger.stage(Stage::InitialPopulation).first_attempts(Role::PageGen);
        let ga = ledger.stage(Stage::GaOptimization).first_attempts(Role::PageGen);
        if init != n || ga != n * g {
            let e = PipelineError::Integrity(format!(
                "page generations {init} + {ga}, expected {n} + {}",
                n * g
            ));
            status = failure("integrity", &e);
        }
    }

    Ok(RunRecord {
        config: cfg.clone(),
        status,
        frozen: space.frozen().iter().map(|&i| session.catalog.get(i).key.to_string()).collect(),
        backend_identity: session.backend_identity(),
        template_digests: session.templates().digests(),
        competitor_digests: session
            .competitors
            .iter()
            .map(|d| sha256_hex(d.text.as_bytes()))
            .collect(),
        probe,
        outcome,
        finals,
        ledger,
        details,
        cache_keys: client.requested_keys(),
    })
}

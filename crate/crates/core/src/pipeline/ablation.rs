use serde::{Deserialize, Serialize};

use super::{feature_index, run_with_session, PipelineError, RunConfig, RunRecord, Session};

/// Effect of pinning one feature at its minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub feature: String,
    pub seed: u64,
    pub frozen_value: f64,
    pub baseline_vis: f64,
    pub baseline_qual: f64,
    pub ablated_vis: f64,
    pub ablated_qual: f64,
    /// Baseline minus ablated visibility of the chosen solution.
    pub delta: f64,
    pub quality_delta: f64,
}

/// Re-optimizes with `key` frozen, reusing the baseline's probe so both
/// runs share queries and exemplars.
pub fn run_ablation(
    session: &Session,
    baseline: &RunRecord,
    key: &str,
) -> Result<(AblationResult, RunRecord), PipelineError> {
    let index = feature_index(&session.catalog, key)?;
    baseline.ensure_complete()?;
    let ablated = run_with_session(session, Some(&baseline.probe), &[index])?;
    ablated.ensure_complete()?;
    let missing = || PipelineError::Integrity("run has no final solution".into());
    let b = baseline.chosen().ok_or_else(missing)?.objectives();
    let a = ablated.chosen().ok_or_else(missing)?.objectives();
    let result = AblationResult {
        feature: key.to_string(),
        seed: session.config.ga.seed,
        frozen_value: session.catalog.get(index).lo,
        baseline_vis: b.vis,
        baseline_qual: b.qual,
        ablated_vis: a.vis,
        ablated_qual: a.qual,
        delta: b.vis - a.vis,
        quality_delta: b.qual - a.qual,
    };
    Ok((result, ablated))
}

/// Baseline run followed by one ablation per key.
pub fn ablate(
    cfg: &RunConfig,
    keys: &[&str],
) -> Result<(RunRecord, Vec<(AblationResult, RunRecord)>), PipelineError> {
    let session = Session::open(cfg)?;
    for k in keys {
        feature_index(&session.catalog, k)?;
    }
    let baseline = run_with_session(&session, None, &[])?;
    baseline.ensure_complete()?;
    let runs = keys
        .iter()
        .map(|k| run_ablation(&session, &baseline, k))
        .collect::<Result<_, _>>()?;
    Ok((baseline, runs))
}

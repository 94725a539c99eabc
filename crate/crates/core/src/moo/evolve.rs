//! The (mu + lambda) NSGA-II loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::operators::{crowded_cmp, gaussian_mutate, tournament_select, uniform_crossover};
use super::sort::{crowding_distance, non_dominated_sort};
use super::{
    stream_rng, AuxMetrics, GaConfig, HypervolumeTrace, Individual, MooError, Objectives,
    ParetoFront, SearchSpace, SelectionPolicy,
};
use crate::features::FeatureVector;

/// Identity of a candidate: the generation it was created in and its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct CandidateId {
    pub generation: u32,
    pub index: u32,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{0}")]
pub struct EvalError(pub String);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objectives: Objectives,
    pub aux: Option<AuxMetrics>,
    /// The evaluator replaced a failed evaluation with penalty objectives.
    pub failed: bool,
}

impl Evaluation {
    pub fn new(vis: f64, qual: f64) -> Self {
        Evaluation {
            objectives: Objectives::new(vis, qual),
            aux: None,
            failed: false,
        }
    }
}

/// Black-box objective function, split into realization and scoring.
///
/// `realize` runs once per candidate; `score` runs `repeats_per_eval` times
/// on the realized candidate and the optimizer averages the results.
pub trait Evaluator: Sync {
    type Candidate: Send;

    fn realize(&self, x: &FeatureVector, id: CandidateId) -> Result<Self::Candidate, EvalError>;

    fn score(
        &self,
        candidate: &Self::Candidate,
        id: CandidateId,
        repeat: u32,
    ) -> Result<Evaluation, EvalError>;
}

/// Adapts a plain function of (vector, repeat) into an [`Evaluator`].
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&FeatureVector, u32) -> Result<Evaluation, EvalError> + Sync,
{
    type Candidate = FeatureVector;

    fn realize(&self, x: &FeatureVector, _id: CandidateId) -> Result<FeatureVector, EvalError> {
        Ok(*x)
    }

    fn score(&self, x: &FeatureVector, _id: CandidateId, repeat: u32) -> Result<Evaluation, EvalError> {
        (self.0)(x, repeat)
    }
}

/// The population as it stood at the end of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub population: Vec<Individual>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvolveOutcome {
    /// Non-dominated set over every evaluated individual.
    pub front: ParetoFront,
    pub trace: HypervolumeTrace,
    pub log: Vec<GenerationRecord>,
    /// Every evaluation in order of creation.
    pub evaluated: Vec<Individual>,
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Config(#[from] MooError),
    #[error("evaluation of candidate {id:?} failed: {source}")]
    Evaluation {
        id: CandidateId,
        source: EvalError,
        partial: Box<EvolveOutcome>,
    },
}

fn evaluate_one<E: Evaluator>(
    evaluator: &E,
    x: &FeatureVector,
    id: CandidateId,
    repeats: u32,
) -> Result<Individual, EvalError> {
    let candidate = evaluator.realize(x, id)?;
    let mut vis = 0.0;
    let mut qual = 0.0;
    let mut word = 0.0;
    let mut pos = 0.0;
    let mut all_aux = true;
    let mut failed = false;
    for r in 0..repeats {
        let e = evaluator.score(&candidate, id, r)?;
        vis += e.objectives.vis;
        qual += e.objectives.qual;
        failed |= e.failed;
        match e.aux {
            Some(a) => {
                word += a.word;
                pos += a.pos;
            }
            None => all_aux = false,
        }
    }
    let n = repeats as f64;
    let objectives = Objectives::new(vis / n, qual / n);
    if !(objectives.vis.is_finite() && objectives.qual.is_finite()) {
        return Err(EvalError(format!("non-finite objectives {objectives:?}")));
    }
    let mut ind = Individual::new(id, *x);
    ind.objectives = Some(objectives);
    ind.aux = all_aux.then(|| AuxMetrics {
        word: word / n,
        pos: pos / n,
    });
    ind.eval_count = repeats;
    ind.failed = failed;
    Ok(ind)
}

/// Evaluates a batch, concurrently when `pool` is given. Results keep batch order.
fn evaluate_batch<E: Evaluator>(
    evaluator: &E,
    batch: &[(CandidateId, FeatureVector)],
    repeats: u32,
    pool: Option<&rayon::ThreadPool>,
) -> Vec<Result<Individual, EvalError>> {
    let run = |(id, x): &(CandidateId, FeatureVector)| evaluate_one(evaluator, x, *id, repeats);
    match pool {
        Some(pool) => {
            use rayon::prelude::*;
            pool.install(|| batch.par_iter().map(run).collect())
        }
        None => batch.iter().map(run).collect(),
    }
}

fn rank_and_crowd(pop: &mut [Individual]) -> Result<Vec<Vec<usize>>, MooError> {
    let fronts = non_dominated_sort(pop)?;
    for f in &fronts {
        crowding_distance(pop, f);
    }
    Ok(fronts)
}

/// Keeps `n` members of `pool` by front, breaking the last front by crowding.
fn environmental_selection(
    mut pool: Vec<Individual>,
    n: usize,
) -> Result<Vec<Individual>, MooError> {
    let fronts = rank_and_crowd(&mut pool)?;
    let mut keep: Vec<usize> = Vec::with_capacity(n);
    for front in fronts {
        if keep.len() + front.len() <= n {
            keep.extend(front);
        } else {
            let mut rest = front;
            rest.sort_by(|&a, &b| crowded_cmp(&pool[a], &pool[b]).then(a.cmp(&b)));
            keep.extend(rest.into_iter().take(n - keep.len()));
        }
        if keep.len() == n {
            break;
        }
    }
    keep.sort_unstable();
    let mut next: Vec<Individual> = keep.into_iter().map(|i| pool[i].clone()).collect();
    rank_and_crowd(&mut next)?;
    Ok(next)
}

/// Runs NSGA-II from `seeds` (already projected into `space`).
///
/// `concurrency` > 1 evaluates each generation on a thread pool of that
/// size; the outcome does not depend on it.
pub fn evolve<E: Evaluator>(
    cfg: &GaConfig,
    space: &SearchSpace,
    evaluator: &E,
    seeds: &[FeatureVector],
    concurrency: usize,
) -> Result<EvolveOutcome, EvolveError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(MooError::NoExemplars.into());
    }
    let pool = if concurrency > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(concurrency)
                .build()
                .map_err(|e| MooError::Config(e.to_string()))?,
        )
    } else {
        None
    };
    let n = cfg.population_size;
    let mut outcome = EvolveOutcome::default();

    let run_batch = |outcome: &mut EvolveOutcome,
                     batch: Vec<(CandidateId, FeatureVector)>|
     -> Result<Vec<Individual>, EvolveError> {
        let results = evaluate_batch(evaluator, &batch, cfg.repeats_per_eval, pool.as_ref());
        let mut done = Vec::with_capacity(results.len());
        for ((id, _), r) in batch.iter().zip(results) {
            match r {
                Ok(ind) => {
                    outcome.evaluated.push(ind.clone());
                    outcome.front.offer(ind.clone());
                    done.push(ind);
                }
                Err(source) => {
                    return Err(EvolveError::Evaluation {
                        id: *id,
                        source,
                        partial: Box::new(std::mem::take(outcome)),
                    })
                }
            }
        }
        Ok(done)
    };

    let initial: Vec<(CandidateId, FeatureVector)> = seeds
        .iter()
        .cycle()
        .take(n)
        .enumerate()
        .map(|(i, x)| Ok((CandidateId { generation: 0, index: i as u32 }, space.project(x)?)))
        .collect::<Result<_, MooError>>()?;
    let mut population = run_batch(&mut outcome, initial)?;
    rank_and_crowd(&mut population)?;
    outcome.trace.values.push(outcome.front.hypervolume());
    outcome.log.push(GenerationRecord {
        generation: 0,
        population: population.clone(),
    });

    for g in 1..=cfg.generations as u32 {
        let mut offspring = Vec::with_capacity(n);
        for pair in 0..(n / 2) as u32 {
            let mut rng = stream_rng(cfg.seed, g, pair);
            let a = tournament_select(&population, cfg.tournament_size, &mut rng);
            let b = tournament_select(&population, cfg.tournament_size, &mut rng);
            let (c1, c2) =
                uniform_crossover(&population[a].x, &population[b].x, cfg, space, &mut rng);
            for (k, child) in [c1, c2].into_iter().enumerate() {
                let child = gaussian_mutate(&child, cfg, space, &mut rng)?;
                let id = CandidateId {
                    generation: g,
                    index: 2 * pair + k as u32,
                };
                offspring.push((id, child));
            }
        }
        let children = run_batch(&mut outcome, offspring)?;
        let mut pool_members = population;
        pool_members.extend(children);
        population = environmental_selection(pool_members, n)?;
        outcome.trace.values.push(outcome.front.hypervolume());
        outcome.log.push(GenerationRecord {
            generation: g,
            population: population.clone(),
        });
        log::debug!(
            "generation {g}: archive {} members, hv {:.6}",
            outcome.front.len(),
            outcome.trace.last().unwrap_or(0.0)
        );
    }
    Ok(outcome)
}

/// Picks one member of a front according to `policy`.
pub fn select_final(front: &ParetoFront, policy: SelectionPolicy) -> Result<&Individual, MooError> {
    if front.is_empty() {
        return Err(MooError::EmptyFront);
    }
    let members = &front.members;
    let key_cmp = |a: (f64, f64), b: (f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
    let best = match policy {
        SelectionPolicy::MaxVisibility => members.iter().max_by(|a, b| {
            let (oa, ob) = (a.objectives(), b.objectives());
            key_cmp((oa.vis, oa.qual), (ob.vis, ob.qual))
        }),
        SelectionPolicy::MaxQuality => members.iter().max_by(|a, b| {
            let (oa, ob) = (a.objectives(), b.objectives());
            key_cmp((oa.qual, oa.vis), (ob.qual, ob.vis))
        }),
        SelectionPolicy::Knee => {
            let objs = front.objectives();
            let span = |f: fn(&Objectives) -> f64| {
                let lo = objs.iter().map(f).fold(f64::INFINITY, f64::min);
                let hi = objs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi - lo)
            };
            let (vlo, vw) = span(|o| o.vis);
            let (qlo, qw) = span(|o| o.qual);
            let norm = |v: f64, lo: f64, w: f64| if w > 0.0 { (v - lo) / w } else { 0.0 };
            let score = |o: &Objectives| norm(o.vis, vlo, vw) + norm(o.qual, qlo, qw);
            members.iter().max_by(|a, b| {
                let (oa, ob) = (a.objectives(), b.objectives());
                key_cmp((score(&oa), oa.vis), (score(&ob), ob.vis))
            })
        }
    };
    best.ok_or(MooError::EmptyFront)
}

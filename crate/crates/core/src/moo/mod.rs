//! NSGA-II over the bounded feature box.
//!
//! Both objectives (visibility and quality, in percent) are maximized.

mod evolve;
mod hypervolume;
mod operators;
mod sort;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureCatalog, FeatureVector};

pub use evolve::{
    evolve, select_final, CandidateId, EvalError, Evaluation, Evaluator, EvolveError,
    EvolveOutcome, FnEvaluator, GenerationRecord,
};
pub use hypervolume::hypervolume;
pub use operators::{gaussian_mutate, seed_population, tournament_select, uniform_crossover};
pub use sort::{crowding_distance, dominates, fronts_of, non_dominated_sort};

#[derive(Debug, Error, PartialEq)]
pub enum MooError {
    #[error("individual {0} has not been evaluated")]
    Unevaluated(usize),
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("at least one exemplar vector is required")]
    NoExemplars,
    #[error("front is empty")]
    EmptyFront,
    #[error("unknown selection policy `{0}` (expected max_visibility, max_quality or knee)")]
    UnknownPolicy(String),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

/// Objective pair, both in percent and both maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub vis: f64,
    pub qual: f64,
}

impl Objectives {
    pub fn new(vis: f64, qual: f64) -> Self {
        Objectives { vis, qual }
    }

    pub fn dominates(&self, other: &Objectives) -> bool {
        self.vis >= other.vis
            && self.qual >= other.qual
            && (self.vis > other.vis || self.qual > other.qual)
    }

    pub fn normalized(&self) -> (f64, f64) {
        (self.vis / 100.0, self.qual / 100.0)
    }
}

/// Secondary visibility metrics carried alongside the objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxMetrics {
    pub word: f64,
    pub pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: CandidateId,
    pub x: FeatureVector,
    pub objectives: Option<Objectives>,
    pub aux: Option<AuxMetrics>,
    pub rank: usize,
    /// `f64::INFINITY` for boundary members; serialized as `null`.
    #[serde(with = "crowding_serde")]
    pub crowding: f64,
    pub eval_count: u32,
    #[serde(default)]
    pub failed: bool,
}

mod crowding_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Individual {
    pub fn new(id: CandidateId, x: FeatureVector) -> Self {
        Individual {
            id,
            x,
            objectives: None,
            aux: None,
            rank: usize::MAX,
            crowding: 0.0,
            eval_count: 0,
            failed: false,
        }
    }

    /// Test and oracle helper: an individual carrying only objectives.
    pub fn with_objectives(x: FeatureVector, vis: f64, qual: f64) -> Self {
        let mut ind = Individual::new(CandidateId::default(), x);
        ind.objectives = Some(Objectives::new(vis, qual));
        ind.eval_count = 1;
        ind
    }

    pub fn objectives(&self) -> Objectives {
        self.objectives
            .expect("objectives read before evaluation")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub mutation_sigma: f64,
    pub repeats_per_eval: u32,
    pub crossover_prob: f64,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 8,
            generations: 8,
            mutation_prob: 0.5,
            mutation_sigma: 0.2,
            repeats_per_eval: 5,
            crossover_prob: 0.9,
            tournament_size: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), MooError> {
        let fail = |m: &str| Err(MooError::Config(m.to_string()));
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return fail("population_size must be even and at least 2");
        }
        if self.generations < 1 {
            return fail("generations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return fail("mutation_prob must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return fail("crossover_prob must lie in [0, 1]");
        }
        if !(self.mutation_sigma > 0.0 && self.mutation_sigma.is_finite()) {
            return fail("mutation_sigma must be positive");
        }
        if self.repeats_per_eval < 1 {
            return fail("repeats_per_eval must be at least 1");
        }
        if self.tournament_size < 1 || self.tournament_size > self.population_size {
            return fail("tournament_size must lie in [1, population_size]");
        }
        Ok(())
    }
}

/// The box being searched: catalog ranges plus features frozen at their minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub catalog: FeatureCatalog,
    frozen: Vec<usize>,
}

impl SearchSpace {
    pub fn full(catalog: FeatureCatalog) -> Self {
        SearchSpace {
            catalog,
            frozen: Vec::new(),
        }
    }

    pub fn with_frozen_at_min(mut self, index: usize) -> Self {
        if !self.frozen.contains(&index) {
            self.frozen.push(index);
            self.frozen.sort_unstable();
        }
        self
    }

    pub fn frozen(&self) -> &[usize] {
        &self.frozen
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.frozen.contains(&index)
    }

    /// Clamps into range and pins frozen features at their lower bound.
    pub fn project(&self, x: &FeatureVector) -> Result<FeatureVector, MooError> {
        let mut out = x.clamp(&self.catalog)?;
        for &i in &self.frozen {
            out.set(i, self.catalog.get(i).lo);
        }
        Ok(out)
    }
}

/// Non-dominated members, sorted by visibility descending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<Individual>,
}

impl ParetoFront {
    /// Keeps the non-dominated subset of `candidates`; among members with
    /// identical objectives the first one wins.
    pub fn from_candidates<I: IntoIterator<Item = Individual>>(candidates: I) -> Self {
        let mut front = ParetoFront::default();
        for c in candidates {
            front.offer(c);
        }
        front
    }

    /// Inserts `candidate` unless it is dominated by (or ties) a member.
    /// Returns whether the front changed.
    pub fn offer(&mut self, candidate: Individual) -> bool {
        let obj = candidate.objectives();
        if self.members.iter().any(|m| {
            let o = m.objectives();
            o.dominates(&obj) || o == obj
        }) {
            return false;
        }
        self.members.retain(|m| !obj.dominates(&m.objectives()));
        let at = self
            .members
            .iter()
            .position(|m| {
                let o = m.objectives();
                o.vis < obj.vis || (o.vis == obj.vis && o.qual < obj.qual)
            })
            .unwrap_or(self.members.len());
        self.members.insert(at, candidate);
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<Objectives> {
        self.members.iter().map(|m| m.objectives()).collect()
    }

    pub fn hypervolume(&self) -> f64 {
        hypervolume(&self.objectives())
    }

    pub fn is_mutually_nondominated(&self) -> bool {
        let objs = self.objectives();
        objs.iter()
            .all(|a| objs.iter().all(|b| !a.dominates(b)))
    }
}

/// Archive hypervolume after each generation; index 0 is the initial population.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HypervolumeTrace {
    pub values: Vec<f64>,
}

impl HypervolumeTrace {
    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    MaxVisibility,
    MaxQuality,
    Knee,
}

impl SelectionPolicy {
    pub const ALL: [SelectionPolicy; 3] = [
        SelectionPolicy::MaxVisibility,
        SelectionPolicy::MaxQuality,
        SelectionPolicy::Knee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionPolicy::MaxVisibility => "max_visibility",
            SelectionPolicy::MaxQuality => "max_quality",
            SelectionPolicy::Knee => "knee",
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionPolicy {
    type Err = MooError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SelectionPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| MooError::UnknownPolicy(s.to_string()))
    }
}

/// Independent RNG stream for one (generation, slot) pair.
pub fn stream_rng(seed: u64, generation: u32, slot: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((generation as u64) << 32) | slot as u64);
    rng
}

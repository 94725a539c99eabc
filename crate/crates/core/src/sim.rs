//! Seeded stand-in for the generative engine.
//!
//! Pages, answers and judge replies are pure functions of the request and
//! the world configuration. Pages carry their latent feature vector on a
//! trailing `sim-features:` line so downstream roles can read it back.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Backend, EngineError, EngineReply, EngineRequest, Role, Usage};
use crate::features::{
    catalog_default, decode_vector, encode_vector, read_guidelines, FeatureCatalog, FeatureError,
    FeatureVector, FEATURE_COUNT,
};
use crate::moo::{Individual, Objectives, ParetoFront};
use crate::quality::{aggregate_quality, round_half_up, QualityConfig, QualityDimensions, DIMENSION_NAMES};

pub const FEATURE_LINE_PREFIX: &str = "sim-features: ";
pub const BRUTE_FORCE_BUDGET: u64 = 1_000_000;
const MIN_SENTENCES: usize = 4;
const MAX_SENTENCES: usize = 10;

const BUNDLED_RUN_CONFIG: &str = include_str!("../configs/default_sim.toml");

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    Config(String),
    #[error("grid of {0} points exceeds the brute-force budget")]
    Budget(u64),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Thirteen per-feature weights.
///
/// Serialized as a table keyed by feature name; deserializes from such a
/// table (absent keys are 0) or from an array of 13 numbers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureWeights(pub [f64; FEATURE_COUNT]);

impl FeatureWeights {
    pub fn get(&self, key: &str) -> f64 {
        catalog_default().index_of(key).map_or(0.0, |i| self.0[i])
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), SimError> {
        let i = catalog_default()
            .index_of(key)
            .ok_or_else(|| SimError::Config(format!("unknown feature `{key}`")))?;
        self.0[i] = value;
        Ok(())
    }

    fn dot(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        self.0.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

impl Serialize for FeatureWeights {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let c = catalog_default();
        let mut m = s.serialize_map(Some(FEATURE_COUNT))?;
        for (i, key) in c.keys().enumerate() {
            m.serialize_entry(key, &self.0[i])?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for FeatureWeights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Table(BTreeMap<String, f64>),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => {
                let arr: [f64; FEATURE_COUNT] = v
                    .try_into()
                    .map_err(|v: Vec<f64>| de::Error::invalid_length(v.len(), &"13 weights"))?;
                Ok(FeatureWeights(arr))
            }
            Raw::Table(t) => {
                let mut w = FeatureWeights::default();
                for (k, v) in t {
                    w.set(&k, v).map_err(de::Error::custom)?;
                }
                Ok(w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    pub visibility_weights: FeatureWeights,
    #[serde(default)]
    pub visibility_bias: f64,
    pub quality_weights: FeatureWeights,
    #[serde(default)]
    pub tradeoff_strength: f64,
    #[serde(default)]
    pub competitor_vectors: Vec<FeatureVector>,
    #[serde(default)]
    pub noise_scale: f64,
    /// Inverse temperature of the citation softmax over propensities.
    #[serde(default = "default_sharpness")]
    pub citation_sharpness: f64,
}

fn default_sharpness() -> f64 {
    4.0
}

impl SimConfig {
    /// The `[sim]` table of the bundled run configuration.
    pub fn bundled() -> SimConfig {
        let table: toml::Table = toml::from_str(BUNDLED_RUN_CONFIG).expect("bundled config parses");
        table["sim"]
            .clone()
            .try_into()
            .expect("bundled sim table is valid")
    }

    /// Features with a nonzero visibility or quality weight.
    pub fn active_features(&self) -> Vec<usize> {
        (0..FEATURE_COUNT)
            .filter(|&i| self.visibility_weights.0[i] != 0.0 || self.quality_weights.0[i] != 0.0)
            .collect()
    }
}

pub fn bundled_run_config_text() -> &'static str {
    BUNDLED_RUN_CONFIG
}

/// A validated configuration plus derived per-competitor propensities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub config: SimConfig,
    pub catalog: FeatureCatalog,
    pub quality: QualityConfig,
    pub competitor_propensity: Vec<f64>,
    digest: String,
}

impl SimWorld {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        SimWorld::with_quality(config, QualityConfig::default())
    }

    pub fn with_quality(mut config: SimConfig, quality: QualityConfig) -> Result<Self, SimError> {
        let finite = |w: &FeatureWeights| w.0.iter().all(|v| v.is_finite());
        if !finite(&config.visibility_weights) || !finite(&config.quality_weights) {
            return Err(SimError::Config("weights must be finite".into()));
        }
        for (name, v) in [
            ("visibility_bias", config.visibility_bias),
            ("tradeoff_strength", config.tradeoff_strength),
            ("noise_scale", config.noise_scale),
            ("citation_sharpness", config.citation_sharpness),
        ] {
            if !v.is_finite() {
                return Err(SimError::Config(format!("{name} must be finite")));
            }
        }
        if config.tradeoff_strength < 0.0 || config.noise_scale < 0.0 || config.citation_sharpness < 0.0 {
            return Err(SimError::Config(
                "tradeoff_strength, noise_scale and citation_sharpness must be nonnegative".into(),
            ));
        }
        quality
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let catalog = catalog_default();
        config.competitor_vectors = config
            .competitor_vectors
            .iter()
            .map(|v| v.clamp(&catalog))
            .collect::<Result<_, _>>()?;
        let digest = hex::encode(Sha256::digest(
            serde_json::to_vec(&config).expect("sim config serializes"),
        ));
        let mut world = SimWorld {
            config,
            catalog,
            quality,
            competitor_propensity: Vec::new(),
            digest,
        };
        world.competitor_propensity = world
            .config
            .competitor_vectors
            .iter()
            .map(|v| sim_propensity(v, &world))
            .collect();
        Ok(world)
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Competitor pages rendered in the sim page format.
    pub fn competitor_pages(&self) -> Vec<String> {
        self.config
            .competitor_vectors
            .iter()
            .enumerate()
            .map(|(i, v)| sim_page(v, &format!("competitor-{}", i + 1), &self.catalog))
            .collect()
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn sim_propensity(x: &FeatureVector, w: &SimWorld) -> f64 {
    let xn = x.normalized(&w.catalog);
    logistic(w.config.visibility_weights.dot(&xn) + w.config.visibility_bias)
}

/// Quality score before the map onto judge dimensions.
pub fn sim_quality_base(x: &FeatureVector, w: &SimWorld) -> f64 {
    let xn = x.normalized(&w.catalog);
    w.config.quality_weights.dot(&xn) - w.config.tradeoff_strength * sim_propensity(x, w)
}

/// Seven judge dimensions from the base score.
///
/// Dimension `j` is `3 + 2s` offset by `(j - 3) / 7` before rounding, so the
/// seven integer scores together resolve the base score more finely than one.
pub fn sim_dims_from_base(s: f64) -> QualityDimensions {
    let scores: [f64; 7] =
        std::array::from_fn(|j| round_half_up(3.0 + 2.0 * s + (j as f64 - 3.0) / 7.0).clamp(1.0, 5.0));
    QualityDimensions::from_scores(scores).expect("scores lie in [1, 5]")
}

pub fn sim_quality_dims(x: &FeatureVector, w: &SimWorld) -> QualityDimensions {
    sim_dims_from_base(sim_quality_base(x, w))
}

/// Exact objective pair: 100 * propensity and the aggregated judge quality.
pub fn sim_objectives(x: &FeatureVector, w: &SimWorld) -> Objectives {
    let q = aggregate_quality(&sim_quality_dims(x, w), &w.quality).expect("valid dimensions");
    Objectives::new(100.0 * sim_propensity(x, w), q.value)
}

const VOCAB: [&str; 24] = [
    "research", "sources", "suggest", "that", "careful", "planning", "improves", "results",
    "experts", "often", "recommend", "clear", "steps", "while", "recent", "data", "show",
    "steady", "progress", "across", "many", "practical", "cases", "today",
];

fn digest_bytes(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Answer of 4 to 10 sentences, each citing one source drawn from the
/// softmax of `citation_sharpness * propensity` (plus per-answer logit noise).
pub fn sim_answer(query: &str, docs: &[FeatureVector], salt: &str, w: &SimWorld) -> String {
    if docs.is_empty() {
        return String::new();
    }
    let qd = digest_bytes(&[b"query", query.as_bytes()]);
    let k = MIN_SENTENCES + qd[0] as usize % (MAX_SENTENCES - MIN_SENTENCES + 1);
    let seed = digest_bytes(&[&w.config.seed.to_le_bytes(), &qd, salt.as_bytes()]);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let beta = w.config.citation_sharpness;
    let logits: Vec<f64> = docs
        .iter()
        .map(|d| {
            let noise: f64 = rng.sample(StandardNormal);
            beta * sim_propensity(d, w) + w.config.noise_scale * noise
        })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let pick = WeightedIndex::new(&weights).expect("softmax weights are positive");
    let mut sentences = Vec::with_capacity(k);
    for _ in 0..k {
        let source = pick.sample(&mut rng) + 1;
        let len = rng.gen_range(6..=14);
        let mut words: Vec<String> = (0..len).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string()).collect();
        if let Some(first) = words.first_mut() {
            let mut c = first.chars();
            *first = c.next().map(|h| h.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default();
        }
        sentences.push(format!("{} [{source}].", words.join(" ")));
    }
    sentences.join(" ")
}

/// A page in the sim format: a short body plus the latent-vector line.
pub fn sim_page(x: &FeatureVector, title: &str, catalog: &FeatureCatalog) -> String {
    let d = digest_bytes(&[title.as_bytes(), encode_vector(x, catalog).as_bytes()]);
    let body: Vec<&str> = (0..12).map(|i| VOCAB[d[i] as usize % VOCAB.len()]).collect();
    format!(
        "{title}\n\n{}.\n\n{FEATURE_LINE_PREFIX}{}",
        body.join(" "),
        encode_vector(x, catalog)
    )
}

/// Latent vector of the first `sim-features:` line in `text`, if any.
pub fn read_feature_line(text: &str, catalog: &FeatureCatalog) -> Option<FeatureVector> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix(FEATURE_LINE_PREFIX))
        .and_then(|json| decode_vector(json, catalog, true).ok())
}

/// Splits the enumerated source block of an answer prompt into per-source text.
fn split_sources(prompt: &str) -> Vec<String> {
    let Some((_, block)) = prompt.split_once("Search Results:\n") else {
        return Vec::new();
    };
    let mut sources: Vec<String> = Vec::new();
    for line in block.lines() {
        let next = format!("[{}] ", sources.len() + 1);
        if let Some(rest) = line.strip_prefix(&next) {
            sources.push(rest.to_string());
        } else if let Some(last) = sources.last_mut() {
            last.push('\n');
            last.push_str(line);
        }
    }
    sources
}

fn line_value<'a>(prompt: &'a str, prefix: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

const QUERY_FORMS: [&str; 8] = [
    "What should a beginner know about {}?",
    "How do experts evaluate options for {}?",
    "What are common mistakes with {}?",
    "Which resources are most reliable for {}?",
    "How much does {} typically cost?",
    "What recent trends are shaping {}?",
    "How can I compare providers of {}?",
    "Is {} worth the investment?",
];

/// Engine backend answering every role from the sim world.
#[derive(Debug, Clone)]
pub struct SimBackend {
    world: Arc<SimWorld>,
}

impl SimBackend {
    pub fn new(world: Arc<SimWorld>) -> Self {
        SimBackend { world }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    fn latent(&self, text: &str) -> FeatureVector {
        read_feature_line(text, &self.world.catalog).unwrap_or_else(|| self.world.catalog.midpoint_vector())
    }

    fn reply_text(&self, req: &EngineRequest) -> Result<String, EngineError> {
        let w = &self.world;
        Ok(match req.role {
            Role::QueryGen => {
                let topic = line_value(&req.prompt, "Topic:").unwrap_or("the topic");
                let count: usize = line_value(&req.prompt, "Count:")
                    .and_then(|c| c.parse().ok())
                    .unwrap_or(1);
                (0..count)
                    .map(|i| {
                        let q = QUERY_FORMS[i % QUERY_FORMS.len()].replace("{}", topic);
                        if i < QUERY_FORMS.len() {
                            q
                        } else {
                            format!("{q} (variant {})", i / QUERY_FORMS.len() + 1)
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            Role::ThemeExtract => "Advertising direction: a practical companion service for readers of these pages. \
                 Brand: Lumen Guide. Selling points: clear expert guidance, measurable progress, friendly support. \
                 Angle: trusted advice that saves time."
                .to_string(),
            Role::FeatureExtract => {
                let x = self.latent(&req.prompt);
                w.catalog
                    .keys()
                    .enumerate()
                    .map(|(i, k)| format!("{k}: {}", x.get(i)))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            Role::PageGen => {
                let x = read_guidelines(&req.prompt, &w.catalog)
                    .map_err(|e| EngineError::Transport(format!("sim page generation: {e}")))?;
                sim_page(&x, "Lumen Guide: sponsored feature", &w.catalog)
            }
            Role::AnswerGen => {
                let query = line_value(&req.prompt, "Question:").unwrap_or_default();
                let docs: Vec<FeatureVector> = split_sources(&req.prompt).iter().map(|s| self.latent(s)).collect();
                sim_answer(query, &docs, &req.salt, w)
            }
            Role::Judge => {
                let d = sim_quality_dims(&self.latent(&req.prompt), w);
                DIMENSION_NAMES
                    .iter()
                    .zip(d.scores())
                    .map(|(n, s)| format!("{n}: {s}"))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        })
    }
}

impl Backend for SimBackend {
    fn identity(&self) -> String {
        format!("sim/{}", &self.world.digest()[..16])
    }

    fn complete(&self, req: &EngineRequest) -> Result<EngineReply, EngineError> {
        let text = self.reply_text(req)?;
        let usage = Usage::estimate(&req.prompt, &text);
        Ok(EngineReply {
            latency_us: Some(400 + 25 * usage.completion_tokens + usage.prompt_tokens),
            usage: Some(usage),
            text,
        })
    }
}

/// Exhaustive Pareto front over a grid of the active features.
///
/// Each active feature takes `grid_levels` evenly spaced values over its
/// range; inactive features sit at their midpoints.
pub fn brute_force_pareto(grid_levels: usize, active: &[usize], w: &SimWorld) -> Result<ParetoFront, SimError> {
    if grid_levels < 2 {
        return Err(SimError::Config("grid needs at least 2 levels".into()));
    }
    if let Some(&bad) = active.iter().find(|&&i| i >= FEATURE_COUNT) {
        return Err(SimError::Config(format!("feature index {bad} out of range")));
    }
    let points = (grid_levels as u64)
        .checked_pow(active.len() as u32)
        .filter(|&p| p <= BRUTE_FORCE_BUDGET)
        .ok_or(SimError::Budget(
            (grid_levels as u64).saturating_pow(active.len() as u32),
        ))?;
    let base = w.catalog.midpoint_vector();
    let mut front = ParetoFront::default();
    for mut n in 0..points {
        let mut x = base;
        for &i in active {
            let level = (n % grid_levels as u64) as f64;
            n /= grid_levels as u64;
            let def = w.catalog.get(i);
            x.set(i, def.lo + def.width() * level / (grid_levels - 1) as f64);
        }
        let o = sim_objectives(&x, w);
        front.offer(Individual::with_objectives(x, o.vis, o.qual));
    }
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::{parse_citations, visibility_scores};

    fn flat_world() -> SimWorld {
        SimWorld::new(SimConfig {
            seed: 0,
            visibility_weights: FeatureWeights::default(),
            visibility_bias: 0.0,
            quality_weights: FeatureWeights::default(),
            tradeoff_strength: 0.0,
            competitor_vectors: vec![],
            noise_scale: 0.0,
            citation_sharpness: 4.0,
        })
        .unwrap()
    }

    fn idx(k: &str) -> usize {
        catalog_default().index_of(k).unwrap()
    }

    #[test]
    fn neutral_world() {
        let w = flat_world();
        let x = w.catalog.midpoint_vector();
        assert_eq!(sim_propensity(&x, &w), 0.5);
        assert_eq!(sim_propensity(&w.catalog.min_vector(), &w), 0.5);
        assert_eq!(sim_quality_dims(&x, &w).scores(), [3.0; 7]);
    }

    #[test]
    fn propensity_increases_with_positive_weight() {
        let mut cfg = flat_world().config;
        cfg.visibility_weights.set("statistics_level", 1.5).unwrap();
        let w = SimWorld::new(cfg).unwrap();
        let i = idx("statistics_level");
        let mut x = w.catalog.min_vector();
        let mut last = sim_propensity(&x, &w);
        for step in 1..=30 {
            x.set(i, step as f64 * 0.1);
            let p = sim_propensity(&x, &w);
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn tradeoff_lowers_base_quality() {
        let mut cfg = flat_world().config;
        cfg.visibility_weights.set("statistics_level", 2.0).unwrap();
        cfg.tradeoff_strength = 0.5;
        let w = SimWorld::new(cfg).unwrap();
        let i = idx("statistics_level");
        let mut x = w.catalog.midpoint_vector();
        let before = sim_quality_base(&x, &w);
        x.set(i, 2.5);
        assert!(sim_quality_base(&x, &w) < before);
    }

    #[test]
    fn dims_are_a_function_of_base_only() {
        for s in [-2.0, -0.4, 0.0, 0.13, 0.9, 3.0] {
            let d = sim_dims_from_base(s);
            assert!(d.scores().iter().all(|v| (1.0..=5.0).contains(v)));
            assert_eq!(d, sim_dims_from_base(s));
        }
    }

    #[test]
    fn single_doc_answer_cites_it_everywhere() {
        let w = flat_world();
        let a = sim_answer("q", &[w.catalog.midpoint_vector()], "r0", &w);
        let p = parse_citations(&a, 1).unwrap();
        assert!((MIN_SENTENCES..=MAX_SENTENCES).contains(&p.sentences.len()));
        assert!(p.sentences.iter().all(|s| s.cited.contains(&1)));
        assert_eq!(a, sim_answer("q", &[w.catalog.midpoint_vector()], "r0", &w));
    }

    #[test]
    fn dominant_doc_takes_nearly_all_citations() {
        let mut cfg = flat_world().config;
        cfg.visibility_weights.set("statistics_level", 40.0).unwrap();
        cfg.visibility_bias = -20.0;
        cfg.citation_sharpness = 30.0;
        let w = SimWorld::new(cfg).unwrap();
        let i = idx("statistics_level");
        let mut strong = w.catalog.min_vector();
        strong.set(i, 3.0);
        let weak = w.catalog.min_vector();
        assert!(sim_propensity(&strong, &w) > 0.999_999);
        assert!(sim_propensity(&weak, &w) < 1e-6);
        let (mut hits, mut total) = (0usize, 0usize);
        for draw in 0..1000 {
            let a = sim_answer("query", &[weak, strong, weak], &format!("d{draw}"), &w);
            let p = parse_citations(&a, 3).unwrap();
            total += p.sentences.len();
            hits += p.sentences.iter().filter(|s| s.cited.contains(&2)).count();
        }
        let share = hits as f64 / total as f64;
        assert!(share >= 0.97, "share {share}");
        let a = sim_answer("query", &[weak, strong, weak], "x", &w);
        let v = visibility_scores(&parse_citations(&a, 3).unwrap());
        assert!(v.source(2).vis > 90.0);
    }

    #[test]
    fn page_round_trips_latent_vector() {
        let c = catalog_default();
        let mut x = c.midpoint_vector();
        x.set(idx("statistics_level"), 1.62);
        let page = sim_page(&x, "t", &c);
        assert_eq!(read_feature_line(&page, &c), Some(x));
    }

    #[test]
    fn backend_reads_sources_from_answer_prompt() {
        let mut cfg = flat_world().config;
        cfg.visibility_weights.set("statistics_level", 40.0).unwrap();
        cfg.visibility_bias = -20.0;
        cfg.citation_sharpness = 30.0;
        let w = Arc::new(SimWorld::new(cfg).unwrap());
        let c = &w.catalog;
        let mut strong = c.min_vector();
        strong.set(idx("statistics_level"), 3.0);
        let prompt = format!(
            "Question: q\n\nSearch Results:\n[1] {}\n\n[2] {}",
            sim_page(&c.min_vector(), "a", c),
            sim_page(&strong, "b", c)
        );
        let b = SimBackend::new(w.clone());
        let req = EngineRequest::new(Role::AnswerGen, prompt, "s".into()).unwrap();
        let text = b.complete(&req).unwrap().text;
        let p = parse_citations(&text, 2).unwrap();
        assert!(p.sentences.iter().all(|s| s.cited.contains(&2)));
    }

    #[test]
    fn brute_force_single_feature_cases() {
        let i = idx("statistics_level");
        let mut cfg = flat_world().config;
        cfg.visibility_weights.set("statistics_level", 2.0).unwrap();
        let w = SimWorld::new(cfg.clone()).unwrap();
        let f = brute_force_pareto(5, &[i], &w).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.members[0].x.get(i), 3.0);

        cfg.quality_weights.set("statistics_level", -1.0).unwrap();
        let w = SimWorld::new(cfg).unwrap();
        let f = brute_force_pareto(5, &[i], &w).unwrap();
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn brute_force_budget() {
        let w = flat_world();
        let all: Vec<usize> = (0..FEATURE_COUNT).collect();
        assert!(matches!(brute_force_pareto(3, &all, &w), Err(SimError::Budget(_))));
    }

    #[test]
    fn bundled_world_front_is_sound() {
        let w = SimWorld::new(SimConfig::bundled()).unwrap();
        let active = w.config.active_features();
        assert_eq!(active.len(), 5);
        let f = brute_force_pareto(3, &active, &w).unwrap();
        assert!(f.len() <= 243);
        assert!(f.is_mutually_nondominated());
        // recheck against every grid point
        let levels = [0usize, 1, 2];
        for n in 0..243usize {
            let mut x = w.catalog.midpoint_vector();
            let mut m = n;
            for &i in &active {
                let d = w.catalog.get(i);
                x.set(i, d.lo + d.width() * levels[m % 3] as f64 / 2.0);
                m /= 3;
            }
            let o = sim_objectives(&x, &w);
            assert!(f.members.iter().all(|p| !o.dominates(&p.objectives())));
        }
    }

    #[test]
    fn weights_accept_table_or_list() {
        let t: FeatureWeights = toml::from_str::<toml::Table>("w = { statistics_level = 1.5 }").unwrap()["w"]
            .clone()
            .try_into()
            .unwrap();
        assert_eq!(t.get("statistics_level"), 1.5);
        let l: FeatureWeights = serde_json::from_str("[0,0,0,0,1,0,0,0,0,0,0,0,0]").unwrap();
        assert_eq!(l, {
            let mut w = FeatureWeights::default();
            w.set("statistics_level", 1.0).unwrap();
            w
        });
        assert!(serde_json::from_str::<FeatureWeights>("{\"nope\": 1}").is_err());
    }
}

//! The 13-dimensional feature space pages are optimized in.
//!
//! Every feature belongs to one semantic layer (structure, content, language)
//! and has a bounded range. Vectors are always stored in canonical catalog
//! order; every serialized artifact uses that order.
//!
//! Feature values reach the page generator as qualitative writing directives
//! ([`render_guidelines`]). Three kinds of features are rendered differently:
//!
//! * boolean features (`[0, 1]`) include or omit a directive at threshold 0.5,
//! * tiered features (`[1, 3]`) pick a low / medium / high directive with band
//!   edges at 5/3 and 7/3,
//! * density features (`[0, 3]`) state a target density of `round(100 * v / 3)`
//!   percent.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of features in the catalog.
pub const FEATURE_COUNT: usize = 13;

/// Value at or above which a boolean feature is switched on.
pub const BOOLEAN_THRESHOLD: f64 = 0.5;

/// Upper edge of the low tier for tiered features.
pub const TIER_LOW_EDGE: f64 = 5.0 / 3.0;

/// Upper edge of the medium tier for tiered features.
pub const TIER_MEDIUM_EDGE: f64 = 7.0 / 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature `{key}` has a non-finite value")]
    NonFinite { key: &'static str },
    #[error("expected {FEATURE_COUNT} feature values, got {0}")]
    WrongLength(usize),
    #[error("missing feature key `{0}`")]
    MissingKey(String),
    #[error("unknown feature key `{0}`")]
    UnknownKey(String),
    #[error("duplicate feature key `{0}`")]
    DuplicateKey(String),
    #[error("feature `{key}` = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        key: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("feature `{key}` has an unparseable value `{raw}`")]
    BadValue { key: String, raw: String },
    #[error("malformed feature record: {0}")]
    Malformed(String),
    #[error("no guideline line for feature `{0}`")]
    MissingGuideline(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Structure,
    Content,
    Language,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Structure, Layer::Content, Layer::Language];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Structure => "Structure",
            Layer::Content => "Content",
            Layer::Language => "Language",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a feature value turns into a writing directive.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Boolean {
        include: &'static str,
        omit: &'static str,
    },
    Tiered {
        low: &'static str,
        medium: &'static str,
        high: &'static str,
    },
    Density {
        label: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tier {
    Low,
    Medium,
    High,
}

impl Tier {
    /// Tier of a value on the `[1, 3]` scale.
    pub fn of(value: f64) -> Tier {
        if value < TIER_LOW_EDGE {
            Tier::Low
        } else if value < TIER_MEDIUM_EDGE {
            Tier::Medium
        } else {
            Tier::High
        }
    }

    /// Representative value used when a tier is read back from text.
    pub fn representative(self) -> f64 {
        match self {
            Tier::Low => 1.0,
            Tier::Medium => 2.0,
            Tier::High => 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDefinition {
    pub key: &'static str,
    pub label: &'static str,
    pub layer: Layer,
    pub lo: f64,
    pub hi: f64,
    pub kind: FeatureKind,
    pub description: &'static str,
}

impl FeatureDefinition {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Maps a raw value onto `[0, 1]` across this feature's range.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.lo) / self.width()
    }

    pub fn project(&self, value: f64) -> f64 {
        value.clamp(self.lo, self.hi)
    }
}

/// Target density in percent for a density feature value on `[0, 3]`.
pub fn density_percent(value: f64) -> u32 {
    (100.0 * value / 3.0).round().clamp(0.0, 100.0) as u32
}

/// The fixed, ordered catalog of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCatalog {
    defs: Vec<FeatureDefinition>,
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        catalog_default()
    }
}

impl FeatureCatalog {
    pub fn definitions(&self) -> &[FeatureDefinition] {
        &self.defs
    }

    pub fn get(&self, index: usize) -> &FeatureDefinition {
        &self.defs[index]
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.key == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.defs.iter().map(|d| d.key)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// The vector sitting at every feature's range midpoint.
    pub fn midpoint_vector(&self) -> FeatureVector {
        let mut values = [0.0; FEATURE_COUNT];
        for (v, d) in values.iter_mut().zip(&self.defs) {
            *v = d.midpoint();
        }
        FeatureVector(values)
    }

    pub fn min_vector(&self) -> FeatureVector {
        let mut values = [0.0; FEATURE_COUNT];
        for (v, d) in values.iter_mut().zip(&self.defs) {
            *v = d.lo;
        }
        FeatureVector(values)
    }
}

/// Builds the catalog in canonical order.
pub fn catalog_default() -> FeatureCatalog {
    use FeatureKind::*;
    use Layer::*;

    let defs = vec![
        FeatureDefinition {
            key: "has_intro_summary",
            label: "Introductory summary",
            layer: Structure,
            lo: 0.0,
            hi: 1.0,
            kind: Boolean {
                include: "Open with a short introductory summary paragraph that previews the key points.",
                omit: "Do not add a separate introductory summary; start directly with the main content.",
            },
            description: "Presence of introductory summary paragraph",
        },
        FeatureDefinition {
            key: "headings_level",
            label: "Headings",
            layer: Structure,
            lo: 1.0,
            hi: 3.0,
            kind: Tiered {
                low: "Use few headings; keep the article mostly as continuous prose.",
                medium: "Organize the article under a handful of clear section headings.",
                high: "Use a rich hierarchy of headings and subheadings for every major point.",
            },
            description: "Hierarchy and quantity of headings and subheadings",
        },
        FeatureDefinition {
            key: "list_density",
            label: "Lists",
            layer: Structure,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of sections presented with bullet points or numbered lists",
            },
            description: "Frequency of bullet point and numbered lists",
        },
        FeatureDefinition {
            key: "length_level",
            label: "Length",
            layer: Structure,
            lo: 1.0,
            hi: 3.0,
            kind: Tiered {
                low: "Keep the article short and focused, around 300 words.",
                medium: "Write a moderately detailed article of around 600 words.",
                high: "Write a long, in-depth article of 1000 words or more covering the topic broadly.",
            },
            description: "Overall article length; reflects content depth and breadth",
        },
        FeatureDefinition {
            key: "statistics_level",
            label: "Statistics",
            layer: Content,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of paragraphs containing concrete data, statistics or percentages",
            },
            description: "Density of data, statistics, and percentages embedded in the text",
        },
        FeatureDefinition {
            key: "cite_sources_level",
            label: "Source citations",
            layer: Content,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of paragraphs referencing authoritative sources, institutions or reports",
            },
            description: "Frequency of citing authoritative sources, institutions, or reports",
        },
        FeatureDefinition {
            key: "quotation_level",
            label: "Quotations",
            layer: Content,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of paragraphs featuring a quotation from an expert or authoritative figure",
            },
            description: "Frequency of using quotations from experts or authoritative figures",
        },
        FeatureDefinition {
            key: "unique_info_level",
            label: "Unique information",
            layer: Content,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of paragraphs offering unique, differentiated information",
            },
            description: "Richness of unique information and differentiated content",
        },
        FeatureDefinition {
            key: "technical_terms_level",
            label: "Technical terms",
            layer: Content,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of sentences using professional terminology or technical vocabulary",
            },
            description: "Density of professional terminology and technical vocabulary",
        },
        FeatureDefinition {
            key: "authoritative_level",
            label: "Authoritative tone",
            layer: Language,
            lo: 0.0,
            hi: 3.0,
            kind: Density {
                label: "of sentences written in an assertive, authoritative tone",
            },
            description: "Strength of authoritative tone and assertive expressions",
        },
        FeatureDefinition {
            key: "easy_to_understand_level",
            label: "Readability",
            layer: Language,
            lo: 1.0,
            hi: 3.0,
            kind: Tiered {
                low: "Write for a specialist audience; dense phrasing is acceptable.",
                medium: "Keep the language accessible to an interested general reader.",
                high: "Use very simple, plain language with short sentences anyone can follow.",
            },
            description: "Content readability and language simplicity",
        },
        FeatureDefinition {
            key: "fluency_level",
            label: "Fluency",
            layer: Language,
            lo: 1.0,
            hi: 3.0,
            kind: Tiered {
                low: "A plain, functional writing style is fine; transitions may be brief.",
                medium: "Write fluently with clear transitions between consecutive sentences.",
                high: "Write with polished, highly fluent prose and seamless logical flow throughout.",
            },
            description: "Writing fluency and logical coherence between sentences",
        },
        FeatureDefinition {
            key: "keyword_focus_level",
            label: "Keyword focus",
            layer: Language,
            lo: 1.0,
            hi: 3.0,
            kind: Tiered {
                low: "Mention the core keywords naturally without deliberate repetition.",
                medium: "Repeat the core keywords a few times in prominent places.",
                high: "Strongly focus on the core keywords and repeat them throughout the article.",
            },
            description: "Focus and repetition strength of core keywords",
        },
    ];
    debug_assert_eq!(defs.len(), FEATURE_COUNT);
    FeatureCatalog { defs }
}

/// A point in the feature space, in canonical catalog order.
///
/// Serializes as a key/value record keyed by feature name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl Serialize for FeatureVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let catalog = catalog_default();
        let mut map = serializer.serialize_map(Some(FEATURE_COUNT))?;
        for (key, value) in catalog.keys().zip(self.0) {
            map.serialize_entry(key, &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        vector_from_map(&map, &catalog_default(), false).map_err(serde::de::Error::custom)
    }
}

impl FeatureVector {
    pub fn from_slice(values: &[f64]) -> Result<Self, FeatureError> {
        let arr: [f64; FEATURE_COUNT] = values
            .try_into()
            .map_err(|_| FeatureError::WrongLength(values.len()))?;
        Ok(FeatureVector(arr))
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.0[index] = value;
    }

    /// Projects every entry into its catalog range.
    pub fn clamp(&self, catalog: &FeatureCatalog) -> Result<FeatureVector, FeatureError> {
        let mut out = self.0;
        for (v, d) in out.iter_mut().zip(catalog.definitions()) {
            if !v.is_finite() {
                return Err(FeatureError::NonFinite { key: d.key });
            }
            *v = d.project(*v);
        }
        Ok(FeatureVector(out))
    }

    pub fn is_within(&self, catalog: &FeatureCatalog) -> bool {
        self.0
            .iter()
            .zip(catalog.definitions())
            .all(|(v, d)| v.is_finite() && *v >= d.lo && *v <= d.hi)
    }

    /// Range-normalized copy, each entry on `[0, 1]`.
    pub fn normalized(&self, catalog: &FeatureCatalog) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for ((o, v), d) in out.iter_mut().zip(&self.0).zip(catalog.definitions()) {
            *o = d.normalize(*v);
        }
        out
    }
}

/// Free-function form of [`FeatureVector::clamp`].
pub fn clamp(v: &FeatureVector, catalog: &FeatureCatalog) -> Result<FeatureVector, FeatureError> {
    v.clamp(catalog)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidelineLine {
    pub key: &'static str,
    pub layer: Layer,
    pub text: String,
}

/// Per-feature writing instructions, grouped by layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidelineBlock {
    pub lines: Vec<GuidelineLine>,
}

impl GuidelineBlock {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn line(&self, key: &str) -> Option<&GuidelineLine> {
        self.lines.iter().find(|l| l.key == key)
    }

    /// Text substituted for the `{guidelines}` placeholder.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for layer in Layer::ALL {
            let mut lines = self.lines.iter().filter(|l| l.layer == layer).peekable();
            if lines.peek().is_none() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(layer.name());
            out.push_str(":\n");
            for l in lines {
                out.push_str("- ");
                out.push_str(&l.text);
                out.push('\n');
            }
        }
        out.trim_end().to_string()
    }
}

fn render_line(def: &FeatureDefinition, value: f64) -> String {
    let directive = match &def.kind {
        FeatureKind::Boolean { include, omit } => {
            if value >= BOOLEAN_THRESHOLD {
                (*include).to_string()
            } else {
                (*omit).to_string()
            }
        }
        FeatureKind::Tiered { low, medium, high } => match Tier::of(value) {
            Tier::Low => (*low).to_string(),
            Tier::Medium => (*medium).to_string(),
            Tier::High => (*high).to_string(),
        },
        FeatureKind::Density { label } => {
            format!("Target density: about {}% {}.", density_percent(value), label)
        }
    };
    format!("{}: {}", def.label, directive)
}

/// Turns a clamped vector into per-feature writing directives.
pub fn render_guidelines(v: &FeatureVector, catalog: &FeatureCatalog) -> GuidelineBlock {
    let mut lines = Vec::with_capacity(FEATURE_COUNT);
    for layer in Layer::ALL {
        for (i, def) in catalog.definitions().iter().enumerate() {
            if def.layer == layer {
                lines.push(GuidelineLine {
                    key: def.key,
                    layer,
                    text: render_line(def, v.get(i)),
                });
            }
        }
    }
    GuidelineBlock { lines }
}

/// Reads a rendered guideline text back into the vector it describes.
///
/// Rendering is lossy, so the result is the representative point of each
/// directive: 0/1 for booleans, 1/2/3 for tiers, `3 * pct / 100` for
/// densities.
pub fn read_guidelines(text: &str, catalog: &FeatureCatalog) -> Result<FeatureVector, FeatureError> {
    let mut values = [f64::NAN; FEATURE_COUNT];
    for raw in text.lines() {
        let Some(line) = raw.trim().strip_prefix("- ") else {
            continue;
        };
        for (i, def) in catalog.definitions().iter().enumerate() {
            let Some(directive) = line
                .strip_prefix(def.label)
                .and_then(|rest| rest.strip_prefix(": "))
            else {
                continue;
            };
            values[i] = match &def.kind {
                FeatureKind::Boolean { include, .. } => {
                    if directive == *include {
                        1.0
                    } else {
                        0.0
                    }
                }
                FeatureKind::Tiered { low, medium, high } => {
                    let tier = if directive == *high {
                        Tier::High
                    } else if directive == *medium {
                        Tier::Medium
                    } else if directive == *low {
                        Tier::Low
                    } else {
                        return Err(FeatureError::BadValue {
                            key: def.key.to_string(),
                            raw: directive.to_string(),
                        });
                    };
                    tier.representative()
                }
                FeatureKind::Density { .. } => {
                    let pct = directive
                        .split('%')
                        .next()
                        .and_then(|s| s.rsplit(' ').next())
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| FeatureError::BadValue {
                            key: def.key.to_string(),
                            raw: directive.to_string(),
                        })?;
                    3.0 * pct / 100.0
                }
            };
        }
    }
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(FeatureError::MissingGuideline(catalog.get(i).key));
        }
    }
    FeatureVector(values).clamp(catalog)
}

/// Encodes a vector as a single-line JSON record with keys in canonical order.
pub fn encode_vector(v: &FeatureVector, catalog: &FeatureCatalog) -> String {
    let mut out = String::from("{");
    for (i, def) in catalog.definitions().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('"');
        out.push_str(def.key);
        out.push_str("\":");
        // f64 Display is shortest round-trip
        let value = v.get(i);
        if value.fract() == 0.0 && value.abs() < 1e15 {
            out.push_str(&format!("{value:.1}"));
        } else {
            out.push_str(&format!("{value}"));
        }
    }
    out.push('}');
    out
}

/// Builds a vector from a key/value map covering exactly the catalog keys.
///
/// Out-of-range values are an error unless `lenient`, in which case they are
/// logged and clamped.
pub fn vector_from_map(
    map: &BTreeMap<String, f64>,
    catalog: &FeatureCatalog,
    lenient: bool,
) -> Result<FeatureVector, FeatureError> {
    for key in map.keys() {
        if catalog.index_of(key).is_none() {
            return Err(FeatureError::UnknownKey(key.clone()));
        }
    }
    let mut values = [0.0; FEATURE_COUNT];
    for (i, def) in catalog.definitions().iter().enumerate() {
        let value = *map
            .get(def.key)
            .ok_or_else(|| FeatureError::MissingKey(def.key.to_string()))?;
        if !value.is_finite() {
            return Err(FeatureError::NonFinite { key: def.key });
        }
        if value < def.lo || value > def.hi {
            if !lenient {
                return Err(FeatureError::OutOfRange {
                    key: def.key.to_string(),
                    value,
                    lo: def.lo,
                    hi: def.hi,
                });
            }
            log::warn!(
                "feature `{}` = {} outside [{}, {}], clamping",
                def.key,
                value,
                def.lo,
                def.hi
            );
        }
        values[i] = def.project(value);
    }
    Ok(FeatureVector(values))
}

/// Decodes a JSON record produced by [`encode_vector`].
pub fn decode_vector(
    text: &str,
    catalog: &FeatureCatalog,
    lenient: bool,
) -> Result<FeatureVector, FeatureError> {
    let raw: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text.trim()).map_err(|e| FeatureError::Malformed(e.to_string()))?;
    let mut map = BTreeMap::new();
    for (key, value) in raw {
        let v = value.as_f64().ok_or_else(|| FeatureError::BadValue {
            key: key.clone(),
            raw: value.to_string(),
        })?;
        map.insert(key, v);
    }
    vector_from_map(&map, catalog, lenient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(key: &str) -> usize {
        catalog_default().index_of(key).unwrap()
    }

    /// Solution A of the education-domain comparison table.
    pub(crate) fn solution_a() -> FeatureVector {
        let c = catalog_default();
        let mut v = c.midpoint_vector();
        for (k, x) in [
            ("has_intro_summary", 0.64),
            ("headings_level", 2.75),
            ("list_density", 1.26),
            ("length_level", 2.32),
            ("statistics_level", 1.62),
            ("cite_sources_level", 1.45),
            ("quotation_level", 2.84),
            ("unique_info_level", 1.65),
            ("authoritative_level", 1.55),
            ("technical_terms_level", 1.65),
            ("easy_to_understand_level", 1.37),
            ("fluency_level", 2.17),
            ("keyword_focus_level", 1.80),
        ] {
            v.set(c.index_of(k).unwrap(), x);
        }
        v
    }

    #[test]
    fn catalog_ranges_match_table() {
        let c = catalog_default();
        let s = c.get(idx("statistics_level"));
        assert_eq!((s.lo, s.hi), (0.0, 3.0));
        let f = c.get(idx("fluency_level"));
        assert_eq!((f.lo, f.hi), (1.0, 3.0));
        let h = c.get(idx("has_intro_summary"));
        assert_eq!((h.lo, h.hi), (0.0, 1.0));
    }

    #[test]
    fn catalog_layer_counts() {
        let c = catalog_default();
        let count = |l| c.definitions().iter().filter(|d| d.layer == l).count();
        assert_eq!(count(Layer::Structure), 4);
        assert_eq!(count(Layer::Content), 5);
        assert_eq!(count(Layer::Language), 4);
        assert_eq!(c.len(), FEATURE_COUNT);
    }

    #[test]
    fn catalog_definitions_are_consistent() {
        let c = catalog_default();
        let mut keys: Vec<_> = c.keys().collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), FEATURE_COUNT);
        for d in c.definitions() {
            assert!(d.lo < d.hi);
            match d.kind {
                FeatureKind::Boolean { .. } => assert_eq!((d.lo, d.hi), (0.0, 1.0)),
                FeatureKind::Tiered { .. } => assert_eq!((d.lo, d.hi), (1.0, 3.0)),
                FeatureKind::Density { .. } => assert_eq!((d.lo, d.hi), (0.0, 3.0)),
            }
        }
        let tiered = [
            "headings_level",
            "length_level",
            "easy_to_understand_level",
            "fluency_level",
            "keyword_focus_level",
        ];
        for k in tiered {
            assert!(matches!(c.get(idx(k)).kind, FeatureKind::Tiered { .. }), "{k}");
        }
    }

    #[test]
    fn clamp_projects_out_of_range() {
        let c = catalog_default();
        let mut v = c.midpoint_vector();
        v.set(idx("statistics_level"), 3.4);
        v.set(idx("fluency_level"), 0.6);
        let out = v.clamp(&c).unwrap();
        assert_eq!(out.get(idx("statistics_level")), 3.0);
        assert_eq!(out.get(idx("fluency_level")), 1.0);
        let mid = c.midpoint_vector();
        assert_eq!(mid.clamp(&c).unwrap(), mid);
    }

    #[test]
    fn clamp_rejects_non_finite_with_key() {
        let c = catalog_default();
        let mut v = c.midpoint_vector();
        v.set(idx("quotation_level"), f64::NAN);
        assert_eq!(
            v.clamp(&c),
            Err(FeatureError::NonFinite {
                key: "quotation_level"
            })
        );
    }

    #[test]
    fn render_solution_a() {
        let c = catalog_default();
        let g = render_guidelines(&solution_a(), &c);
        assert_eq!(g.lines.len(), FEATURE_COUNT);
        let FeatureKind::Tiered { medium, .. } = c.get(idx("fluency_level")).kind else {
            unreachable!()
        };
        assert!(g.line("fluency_level").unwrap().text.ends_with(medium));
        assert!(g.line("statistics_level").unwrap().text.contains("54%"));
        let FeatureKind::Boolean { include, .. } = c.get(idx("has_intro_summary")).kind else {
            unreachable!()
        };
        assert!(g.line("has_intro_summary").unwrap().text.ends_with(include));
    }

    #[test]
    fn render_groups_by_layer() {
        let c = catalog_default();
        let g = render_guidelines(&c.midpoint_vector(), &c);
        let layers: Vec<_> = g.lines.iter().map(|l| l.layer).collect();
        let mut sorted = layers.clone();
        sorted.sort();
        assert_eq!(layers, sorted);
        let text = g.to_text();
        assert!(text.starts_with("Structure:\n- "));
        assert!(text.contains("\nContent:\n"));
        assert!(text.contains("\nLanguage:\n"));
    }

    #[test]
    fn tier_edges() {
        assert_eq!(Tier::of(1.0), Tier::Low);
        assert_eq!(Tier::of(1.66), Tier::Low);
        assert_eq!(Tier::of(5.0 / 3.0), Tier::Medium);
        assert_eq!(Tier::of(2.17), Tier::Medium);
        assert_eq!(Tier::of(7.0 / 3.0), Tier::High);
        assert_eq!(Tier::of(3.0), Tier::High);
    }

    #[test]
    fn density_endpoints() {
        assert_eq!(density_percent(0.0), 0);
        assert_eq!(density_percent(3.0), 100);
        assert_eq!(density_percent(1.62), 54);
    }

    #[test]
    fn encode_solution_a_round_trip() {
        let c = catalog_default();
        let a = solution_a();
        let text = encode_vector(&a, &c);
        assert!(text.contains("\"quotation_level\":2.84"));
        assert!(text.contains("\"fluency_level\":2.17"));
        let back = decode_vector(&text, &c, false).unwrap();
        for i in 0..FEATURE_COUNT {
            assert!((back.get(i) - a.get(i)).abs() < 1e-9);
        }
        assert_eq!(encode_vector(&back, &c), text);
    }

    #[test]
    fn decode_rejects_missing_and_unknown() {
        let c = catalog_default();
        let text = encode_vector(&c.midpoint_vector(), &c);
        let missing = text.replace(",\"keyword_focus_level\":2.0", "");
        assert_eq!(
            decode_vector(&missing, &c, false),
            Err(FeatureError::MissingKey("keyword_focus_level".into()))
        );
        let unknown = text.replace('}', ",\"bogus\":1.0}");
        assert_eq!(
            decode_vector(&unknown, &c, false),
            Err(FeatureError::UnknownKey("bogus".into()))
        );
    }

    #[test]
    fn decode_out_of_range_strict_vs_lenient() {
        let c = catalog_default();
        let text = encode_vector(&c.midpoint_vector(), &c)
            .replace("\"statistics_level\":1.5", "\"statistics_level\":5.0");
        assert!(matches!(
            decode_vector(&text, &c, false),
            Err(FeatureError::OutOfRange { .. })
        ));
        let v = decode_vector(&text, &c, true).unwrap();
        assert_eq!(v.get(idx("statistics_level")), 3.0);
    }

    #[test]
    fn read_guidelines_recovers_representatives() {
        let c = catalog_default();
        let g = render_guidelines(&solution_a(), &c).to_text();
        let v = read_guidelines(&g, &c).unwrap();
        assert_eq!(v.get(idx("has_intro_summary")), 1.0);
        assert_eq!(v.get(idx("fluency_level")), 2.0);
        assert_eq!(v.get(idx("headings_level")), 3.0);
        assert!((v.get(idx("statistics_level")) - 1.62).abs() < 1e-12);
    }

    fn any_vector() -> impl Strategy<Value = FeatureVector> {
        proptest::array::uniform13(-2.0f64..5.0).prop_map(FeatureVector)
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(v in any_vector()) {
            let c = catalog_default();
            let once = v.clamp(&c).unwrap();
            prop_assert!(once.is_within(&c));
            prop_assert_eq!(once.clamp(&c).unwrap(), once);
        }

        #[test]
        fn encode_decode_round_trip(v in any_vector()) {
            let c = catalog_default();
            let v = v.clamp(&c).unwrap();
            let text = encode_vector(&v, &c);
            let back = decode_vector(&text, &c, false).unwrap();
            for i in 0..FEATURE_COUNT {
                prop_assert!((back.get(i) - v.get(i)).abs() < 1e-9);
            }
            prop_assert_eq!(encode_vector(&back, &c), text);
        }

        #[test]
        fn tier_and_density_are_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(density_percent(lo) <= density_percent(hi));
            let (lo, hi) = (1.0 + lo * 2.0 / 3.0, 1.0 + hi * 2.0 / 3.0);
            prop_assert!(Tier::of(lo) <= Tier::of(hi));
        }

        #[test]
        fn render_is_deterministic_and_total(v in any_vector()) {
            let c = catalog_default();
            let v = v.clamp(&c).unwrap();
            let a = render_guidelines(&v, &c);
            prop_assert_eq!(a.lines.len(), FEATURE_COUNT);
            prop_assert!(a.lines.iter().all(|l| !l.text.is_empty()));
            prop_assert_eq!(a.clone(), render_guidelines(&v, &c));
            prop_assert!(read_guidelines(&a.to_text(), &c).is_ok());
        }
    }
}

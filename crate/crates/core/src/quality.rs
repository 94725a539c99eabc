//! Seven judge dimensions folded into one quality objective.
//!
//! Raw scores on `1..=5` normalize as `(s - 1) / 4`. The content part is the
//! mean of fluency, usefulness, credibility and structure; the appeal part the
//! mean of uniqueness, attractiveness and influence. The quality value is
//! `alpha * content + (1 - alpha) * appeal`, all in percent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("dimension `{name}` = {value} is outside [1, 5]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("alpha = {0} is outside [0, 1]")]
    BadAlpha(f64),
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("cannot average an empty list of quality scores")]
    Empty,
}

pub const DIMENSION_NAMES: [&str; 7] = [
    "fluency",
    "usefulness",
    "credibility",
    "structure",
    "uniqueness",
    "attractiveness",
    "influence",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentDimensions {
    pub fluency: f64,
    pub usefulness: f64,
    pub credibility: f64,
    pub structure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppealDimensions {
    pub uniqueness: f64,
    pub attractiveness: f64,
    pub influence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityDimensions {
    pub content: ContentDimensions,
    pub appeal: AppealDimensions,
}

impl QualityDimensions {
    /// Builds dimensions from scores in [`DIMENSION_NAMES`] order.
    pub fn from_scores(scores: [f64; 7]) -> Result<Self, QualityError> {
        for (name, value) in DIMENSION_NAMES.iter().zip(scores) {
            if !(1.0..=5.0).contains(&value) {
                return Err(QualityError::OutOfRange { name, value });
            }
        }
        let [fluency, usefulness, credibility, structure, uniqueness, attractiveness, influence] =
            scores;
        Ok(QualityDimensions {
            content: ContentDimensions {
                fluency,
                usefulness,
                credibility,
                structure,
            },
            appeal: AppealDimensions {
                uniqueness,
                attractiveness,
                influence,
            },
        })
    }

    pub fn uniform(score: f64) -> Result<Self, QualityError> {
        Self::from_scores([score; 7])
    }

    pub fn scores(&self) -> [f64; 7] {
        let c = &self.content;
        let a = &self.appeal;
        [
            c.fluency,
            c.usefulness,
            c.credibility,
            c.structure,
            a.uniqueness,
            a.attractiveness,
            a.influence,
        ]
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        Self::from_scores(self.scores()).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub alpha: f64,
    /// Judge samples averaged per answer.
    #[serde(default = "default_repeats")]
    pub repeats: u32,
}

fn default_repeats() -> u32 {
    1
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            alpha: 0.5,
            repeats: 1,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<(), QualityError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(QualityError::BadAlpha(self.alpha));
        }
        if self.repeats == 0 {
            return Err(QualityError::NoRepeats);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub value: f64,
    pub content_part: f64,
    pub appeal_part: f64,
}

fn normalized(score: f64) -> f64 {
    (score - 1.0) / 4.0
}

pub fn aggregate_quality(
    d: &QualityDimensions,
    cfg: &QualityConfig,
) -> Result<QualityScore, QualityError> {
    d.validate()?;
    cfg.validate()?;
    let c = &d.content;
    let a = &d.appeal;
    let content = [c.fluency, c.usefulness, c.credibility, c.structure]
        .map(normalized)
        .iter()
        .sum::<f64>()
        / 4.0;
    let appeal = [a.uniqueness, a.attractiveness, a.influence]
        .map(normalized)
        .iter()
        .sum::<f64>()
        / 3.0;
    let content_part = 100.0 * content;
    let appeal_part = 100.0 * appeal;
    Ok(QualityScore {
        value: cfg.alpha * content_part + (1.0 - cfg.alpha) * appeal_part,
        content_part,
        appeal_part,
    })
}

pub fn average_quality(scores: &[QualityScore]) -> Result<QualityScore, QualityError> {
    if scores.is_empty() {
        return Err(QualityError::Empty);
    }
    let n = scores.len() as f64;
    let sum = |f: fn(&QualityScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(QualityScore {
        value: sum(|s| s.value),
        content_part: sum(|s| s.content_part),
        appeal_part: sum(|s| s.appeal_part),
    })
}

/// Rounds a judge score half-up before range validation.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(alpha: f64) -> QualityConfig {
        QualityConfig { alpha, repeats: 1 }
    }

    #[test]
    fn extremes() {
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let top = aggregate_quality(&QualityDimensions::uniform(5.0).unwrap(), &cfg(alpha)).unwrap();
            assert_eq!(top.value, 100.0);
            let bottom = aggregate_quality(&QualityDimensions::uniform(1.0).unwrap(), &cfg(alpha)).unwrap();
            assert_eq!(bottom.value, 0.0);
        }
    }

    #[test]
    fn hand_evaluated_case() {
        let d = QualityDimensions::from_scores([3.0, 4.0, 4.0, 5.0, 2.0, 3.0, 4.0]).unwrap();
        let q = aggregate_quality(&d, &cfg(0.5)).unwrap();
        assert!((q.content_part - 75.0).abs() < 1e-9);
        assert!((q.appeal_part - 50.0).abs() < 1e-9);
        assert!((q.value - 62.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(
            QualityDimensions::from_scores([3.0, 4.0, 6.0, 5.0, 2.0, 3.0, 4.0]),
            Err(QualityError::OutOfRange {
                name: "credibility",
                ..
            })
        ));
        assert_eq!(
            aggregate_quality(&QualityDimensions::uniform(3.0).unwrap(), &cfg(1.5)),
            Err(QualityError::BadAlpha(1.5))
        );
    }

    #[test]
    fn averaging() {
        let s = |v| QualityScore {
            value: v,
            content_part: v,
            appeal_part: v,
        };
        assert_eq!(average_quality(&[s(60.0), s(70.0)]).unwrap().value, 65.0);
        assert_eq!(average_quality(&[s(42.0)]).unwrap(), s(42.0));
        assert_eq!(average_quality(&[s(42.5); 5]).unwrap(), s(42.5));
        assert_eq!(average_quality(&[]), Err(QualityError::Empty));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(3.5), 4.0);
        assert_eq!(round_half_up(3.49), 3.0);
        assert_eq!(round_half_up(4.5), 5.0);
    }

    fn dims() -> impl Strategy<Value = QualityDimensions> {
        proptest::array::uniform7(1.0f64..=5.0)
            .prop_map(|s| QualityDimensions::from_scores(s).unwrap())
    }

    proptest! {
        #[test]
        fn alpha_edges(d in dims()) {
            let one = aggregate_quality(&d, &cfg(1.0)).unwrap();
            prop_assert!((one.value - one.content_part).abs() < 1e-12);
            let zero = aggregate_quality(&d, &cfg(0.0)).unwrap();
            prop_assert!((zero.value - zero.appeal_part).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_every_dimension(d in dims(), which in 0usize..7, bump in 0.0f64..4.0, alpha in 0.0f64..=1.0) {
            let mut s = d.scores();
            let before = aggregate_quality(&d, &cfg(alpha)).unwrap().value;
            s[which] = (s[which] + bump).min(5.0);
            let after = aggregate_quality(&QualityDimensions::from_scores(s).unwrap(), &cfg(alpha)).unwrap().value;
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn commutes_with_averaging(ds in proptest::collection::vec(dims(), 1..6), alpha in 0.0f64..=1.0) {
            let per: Vec<_> = ds.iter().map(|d| aggregate_quality(d, &cfg(alpha)).unwrap()).collect();
            let mean_of_values = average_quality(&per).unwrap();
            let mut mean_dims = [0.0; 7];
            for d in &ds {
                for (m, s) in mean_dims.iter_mut().zip(d.scores()) {
                    *m += s / ds.len() as f64;
                }
            }
            let mean_dims = QualityDimensions::from_scores(mean_dims.map(|x| x.clamp(1.0, 5.0))).unwrap();
            let from_mean = aggregate_quality(&mean_dims, &cfg(alpha)).unwrap();
            prop_assert!((mean_of_values.value - from_mean.value).abs() < 1e-9);
        }

        #[test]
        fn value_is_convex_combination(d in dims(), alpha in 0.0f64..=1.0) {
            let q = aggregate_quality(&d, &cfg(alpha)).unwrap();
            prop_assert!((q.value - (alpha * q.content_part + (1.0 - alpha) * q.appeal_part)).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&q.value));
        }
    }
}

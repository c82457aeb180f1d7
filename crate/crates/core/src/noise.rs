//! Annotator noise: per-tier confusion matrices from true to observed grade.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GradedInstance, RelevanceScore, ResourceTier};
use crate::seed;

pub type Confusion = [[f64; 4]; 4];

pub const IDENTITY: Confusion = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

const ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic confusion matrix per resource tier; row = true grade,
/// column = observed grade. Tiers without an entry use the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ResourceTier, Confusion>", into = "BTreeMap<ResourceTier, Confusion>")]
pub struct NoiseProfile {
    by_tier: BTreeMap<ResourceTier, Confusion>,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::identity()
    }
}

impl TryFrom<BTreeMap<ResourceTier, Confusion>> for NoiseProfile {
    type Error = Error;

    fn try_from(by_tier: BTreeMap<ResourceTier, Confusion>) -> Result<Self> {
        for (tier, m) in &by_tier {
            check_row_stochastic(m).map_err(|e| {
                Error::InvalidConfig(format!("noise profile for tier {}: {e}", tier.name()))
            })?;
        }
        Ok(NoiseProfile { by_tier })
    }
}

impl From<NoiseProfile> for BTreeMap<ResourceTier, Confusion> {
    fn from(p: NoiseProfile) -> Self {
        p.by_tier
    }
}

fn check_row_stochastic(m: &Confusion) -> std::result::Result<(), String> {
    for (i, row) in m.iter().enumerate() {
        if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(format!("row {i} has invalid entry {v}"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(format!("row {i} sums to {sum}"));
        }
    }
    Ok(())
}

impl NoiseProfile {
    /// Noise-free oracle annotator.
    pub fn identity() -> Self {
        NoiseProfile {
            by_tier: BTreeMap::new(),
        }
    }

    /// Same matrix for every tier.
    pub fn uniform(m: Confusion) -> Result<Self> {
        ResourceTier::ALL
            .iter()
            .map(|&t| (t, m))
            .collect::<BTreeMap<_, _>>()
            .try_into()
    }

    pub fn with_tier(mut self, tier: ResourceTier, m: Confusion) -> Result<Self> {
        check_row_stochastic(&m).map_err(Error::InvalidConfig)?;
        self.by_tier.insert(tier, m);
        Ok(self)
    }

    /// Tier-graded profile: most confusion sits between grades 2 and 3 and
    /// grows as the resource level drops.
    pub fn tiered() -> Self {
        let very_high = [
            [0.96, 0.04, 0.00, 0.00],
            [0.04, 0.88, 0.08, 0.00],
            [0.00, 0.05, 0.83, 0.12],
            [0.00, 0.00, 0.08, 0.92],
        ];
        let high = [
            [0.94, 0.05, 0.01, 0.00],
            [0.06, 0.84, 0.09, 0.01],
            [0.00, 0.07, 0.76, 0.17],
            [0.00, 0.01, 0.13, 0.86],
        ];
        let medium = [
            [0.91, 0.07, 0.02, 0.00],
            [0.08, 0.78, 0.12, 0.02],
            [0.01, 0.10, 0.66, 0.23],
            [0.00, 0.02, 0.20, 0.78],
        ];
        let low = [
            [0.86, 0.10, 0.03, 0.01],
            [0.12, 0.68, 0.16, 0.04],
            [0.02, 0.13, 0.55, 0.30],
            [0.00, 0.04, 0.30, 0.66],
        ];
        NoiseProfile {
            by_tier: [
                (ResourceTier::VeryHigh, very_high),
                (ResourceTier::High, high),
                (ResourceTier::Medium, medium),
                (ResourceTier::Low, low),
            ]
            .into_iter()
            .collect(),
        }
    }

    /// Grades 0 and 1 observed exactly; grades 2 and 3 swapped with
    /// probability `rate`. Applied to `tier` only.
    pub fn swap_high_grades(tier: ResourceTier, rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("swap rate {rate} outside [0, 1]")));
        }
        NoiseProfile::identity().with_tier(
            tier,
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0 - rate, rate],
                [0.0, 0.0, rate, 1.0 - rate],
            ],
        )
    }

    pub fn matrix(&self, tier: ResourceTier) -> &Confusion {
        self.by_tier.get(&tier).unwrap_or(&IDENTITY)
    }

    pub fn is_identity(&self) -> bool {
        self.by_tier.values().all(|m| *m == IDENTITY)
    }

    /// Observed grade for a true grade given a uniform draw `u` in [0, 1).
    pub fn observe(&self, tier: ResourceTier, truth: RelevanceScore, u: f64) -> RelevanceScore {
        let row = &self.matrix(tier)[truth.index()];
        let mut acc = 0.0;
        let mut last_nonzero = truth;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_nonzero = RelevanceScore::ALL[j];
                acc += p;
                if u < acc {
                    return last_nonzero;
                }
            }
        }
        // rounding: u landed in the last sliver below 1.0
        last_nonzero
    }
}

/// Re-score `true_instances` through `profile`.
///
/// Each draw depends only on `(seed, query_id, passage_id)`, so the result
/// does not depend on the order or the subset of instances passed in.
pub fn annotate_synthetic(
    true_instances: &[GradedInstance],
    profile: &NoiseProfile,
    annotator_id: &str,
    seed: u64,
) -> Vec<GradedInstance> {
    true_instances
        .iter()
        .map(|inst| {
            let key = format!("{}\u{1f}{}", inst.query_id, inst.passage_id);
            let u = seed::unit_interval(seed, &key);
            GradedInstance {
                score: profile.observe(inst.language.tier(), inst.score, u),
                annotator_id: annotator_id.to_string(),
                ..inst.clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LanguageTag;

    fn truth(n: usize, score: i64, tier: ResourceTier) -> Vec<GradedInstance> {
        let lang = LanguageTag::new("xx", tier).unwrap();
        (0..n)
            .map(|i| GradedInstance {
                query_id: format!("q{i}"),
                passage_id: format!("p{i}"),
                score: RelevanceScore::new(score).unwrap(),
                language: lang.clone(),
                annotator_id: "truth".into(),
            })
            .collect()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let mut m = IDENTITY;
        m[1] = [0.5, 0.6, 0.0, 0.0];
        assert!(NoiseProfile::uniform(m).is_err());
        m[1] = [-0.1, 1.1, 0.0, 0.0];
        assert!(NoiseProfile::uniform(m).is_err());
        assert!(NoiseProfile::swap_high_grades(ResourceTier::Low, 1.5).is_err());
    }

    #[test]
    fn identity_reproduces_scores() {
        let mut inst = truth(50, 0, ResourceTier::Low);
        for (i, x) in inst.iter_mut().enumerate() {
            x.score = RelevanceScore::new((i % 4) as i64).unwrap();
        }
        let out = annotate_synthetic(&inst, &NoiseProfile::identity(), "oracle", 1);
        for (a, b) in inst.iter().zip(&out) {
            assert_eq!(a.score, b.score);
            assert_eq!(b.annotator_id, "oracle");
        }
        assert!(NoiseProfile::tiered().matrix(ResourceTier::Low) != &IDENTITY);
    }

    #[test]
    fn degenerate_row_is_deterministic() {
        let mut m = IDENTITY;
        m[3] = [0.0, 0.0, 1.0, 0.0];
        let p = NoiseProfile::uniform(m).unwrap();
        let out = annotate_synthetic(&truth(200, 3, ResourceTier::High), &p, "a", 9);
        assert!(out.iter().all(|i| i.score.value() == 2));
    }

    #[test]
    fn half_split_frequency() {
        let mut m = IDENTITY;
        m[3] = [0.0, 0.0, 0.5, 0.5];
        let p = NoiseProfile::uniform(m).unwrap();
        let out = annotate_synthetic(&truth(10_000, 3, ResourceTier::Medium), &p, "a", 42);
        let twos = out.iter().filter(|i| i.score.value() == 2).count() as f64 / 10_000.0;
        assert!((twos - 0.5).abs() <= 0.02, "fraction of 2s = {twos}");
        assert!(out.iter().all(|i| i.score.value() >= 2));
    }

    #[test]
    fn json_round_trip() {
        let p = NoiseProfile::tiered();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<NoiseProfile>(&json).unwrap(), p);
        assert!(serde_json::from_str::<NoiseProfile>(
            r#"{"low":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0.5,0.4]]}"#
        )
        .is_err());
    }
}

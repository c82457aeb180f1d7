//! Cross-language downsampling, language mixtures and nested size ladders.
//!
//! All operations sort their input by instance key before drawing, so the
//! result depends on the seed and the instance set, never on input order.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GradedInstance, LanguageTag};
use crate::seed;

/// Counts per score 0..=3.
pub type ScoreCounts = [usize; 4];

pub fn score_counts<'a>(instances: impl IntoIterator<Item = &'a GradedInstance>) -> BTreeMap<String, ScoreCounts> {
    let mut out: BTreeMap<String, ScoreCounts> = BTreeMap::new();
    for i in instances {
        out.entry(i.language.code().to_string()).or_default()[i.score.index()] += 1;
    }
    out
}

fn sorted(instances: &[GradedInstance]) -> Vec<GradedInstance> {
    let mut v = instances.to_vec();
    v.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    v
}

fn by_language(instances: &[GradedInstance]) -> BTreeMap<LanguageTag, Vec<GradedInstance>> {
    let mut out: BTreeMap<LanguageTag, Vec<GradedInstance>> = BTreeMap::new();
    for i in sorted(instances) {
        out.entry(i.language.clone()).or_default().push(i);
    }
    out
}

fn pick(pool: &[GradedInstance], amount: usize, seed: u64, label: &str) -> Vec<GradedInstance> {
    let mut rng = seed::rng(seed, label);
    let mut idx = index::sample(&mut rng, pool.len(), amount).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSplit {
    pub instances: Vec<GradedInstance>,
    pub target_total: usize,
    /// The common non-zero count every language was matched to.
    pub nonzero_per_language: usize,
    pub per_language_counts: BTreeMap<String, ScoreCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingManifest {
    pub seed: u64,
    pub target_total: usize,
    pub nonzero_per_language: usize,
    pub before: BTreeMap<String, ScoreCounts>,
    pub after: BTreeMap<String, ScoreCounts>,
}

impl SampledSplit {
    pub fn manifest(&self, original: &[GradedInstance], seed: u64) -> SamplingManifest {
        SamplingManifest {
            seed,
            target_total: self.target_total,
            nonzero_per_language: self.nonzero_per_language,
            before: score_counts(original),
            after: self.per_language_counts.clone(),
        }
    }
}

/// Match every language to the smallest per-language count of non-zero
/// scores, then fill with zero-score instances up to `target_total`.
pub fn distribution_matched_downsample(
    instances: &[GradedInstance],
    target_total: usize,
    seed: u64,
) -> Result<SampledSplit> {
    let groups = by_language(instances);
    let split: BTreeMap<&LanguageTag, (Vec<GradedInstance>, Vec<GradedInstance>)> = groups
        .iter()
        .map(|(lang, v)| {
            let (nonzero, zero): (Vec<_>, Vec<_>) =
                v.iter().cloned().partition(|i| i.score.is_nonzero());
            (lang, (nonzero, zero))
        })
        .collect();
    let m = split.values().map(|(nz, _)| nz.len()).min().unwrap_or(0);
    if m > target_total {
        return Err(Error::InvalidConfig(format!(
            "target_total {target_total} is below the matched non-zero count {m}"
        )));
    }

    let mut out = Vec::with_capacity(target_total * split.len());
    for (lang, (nonzero, zero)) in &split {
        let fill = target_total - m;
        if zero.len() < fill {
            return Err(Error::Shortfall {
                language: lang.code().to_string(),
                message: format!(
                    "needs {fill} zero-score instances to reach {target_total}, has {} \
                     (short by {})",
                    zero.len(),
                    fill - zero.len()
                ),
            });
        }
        let mut chosen = pick(nonzero, m, seed, &format!("downsample/{}/nonzero", lang.code()));
        chosen.extend(pick(zero, fill, seed, &format!("downsample/{}/zero", lang.code())));
        chosen.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        out.extend(chosen);
    }
    Ok(SampledSplit {
        per_language_counts: score_counts(&out),
        instances: out,
        target_total,
        nonzero_per_language: m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct MixtureSpec {
    pub target_language: LanguageTag,
    pub target_count: usize,
    pub additional_language: Option<LanguageTag>,
    pub additional_count: usize,
    pub seed: u64,
}

/// Subsample the target (and optional additional) language, concatenate and
/// shuffle. Instance ids are language-namespaced, so nothing is deduplicated.
pub fn build_mixture(instances: &[GradedInstance], spec: &MixtureSpec) -> Result<Vec<GradedInstance>> {
    if spec.target_count == 0 {
        return Err(Error::InvalidConfig("mixture target_count must be positive".into()));
    }
    let groups = by_language(instances);
    let draw = |lang: &LanguageTag, count: usize| -> Result<Vec<GradedInstance>> {
        let pool = groups.get(lang).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < count {
            return Err(Error::Shortfall {
                language: lang.code().to_string(),
                message: format!(
                    "mixture needs {count} instances, has {} (short by {})",
                    pool.len(),
                    count - pool.len()
                ),
            });
        }
        Ok(pick(pool, count, spec.seed, &format!("mixture/{}", lang.code())))
    };
    let mut out = draw(&spec.target_language, spec.target_count)?;
    if let Some(extra) = &spec.additional_language {
        if *extra == spec.target_language {
            return Err(Error::InvalidConfig(
                "additional language must differ from the target".into(),
            ));
        }
        out.extend(draw(extra, spec.additional_count)?);
    }
    out.shuffle(&mut seed::rng(spec.seed, "mixture/shuffle"));
    Ok(out)
}

/// Subsets of the requested sizes. Nested by default: each subset is a
/// prefix of one seeded permutation. With `nested = false` every size is
/// drawn independently.
pub fn size_ladder(
    split: &[GradedInstance],
    sizes: &[usize],
    seed: u64,
    nested: bool,
) -> Result<Vec<Vec<GradedInstance>>> {
    if sizes.is_empty() {
        return Ok(Vec::new());
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "ladder sizes must be strictly increasing, got {sizes:?}"
        )));
    }
    let max = *sizes.last().unwrap();
    if max > split.len() {
        return Err(Error::InvalidConfig(format!(
            "largest ladder size {max} exceeds the {} available instances",
            split.len()
        )));
    }
    let base = sorted(split);
    if nested {
        let mut order = base;
        order.shuffle(&mut seed::rng(seed, "ladder"));
        Ok(sizes.iter().map(|&n| order[..n].to_vec()).collect())
    } else {
        Ok(sizes
            .iter()
            .map(|&n| pick(&base, n, seed, &format!("ladder/{n}")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RelevanceScore;
    use std::collections::BTreeSet;

    fn make(lang: &str, nonzero: usize, zero: usize) -> Vec<GradedInstance> {
        let tag = LanguageTag::from_code(lang).unwrap();
        (0..nonzero + zero)
            .map(|i| GradedInstance {
                query_id: format!("{lang}-q{i:05}"),
                passage_id: format!("{lang}-p{i:05}"),
                score: RelevanceScore::new(if i < nonzero { 1 + (i % 3) as i64 } else { 0 }).unwrap(),
                language: tag.clone(),
                annotator_id: "a".into(),
            })
            .collect()
    }

    fn nonzero(counts: &ScoreCounts) -> usize {
        counts[1] + counts[2] + counts[3]
    }

    #[test]
    fn two_language_hand_example() {
        let mut all = make("aa", 30, 100);
        all.extend(make("bb", 50, 100));
        let s = distribution_matched_downsample(&all, 80, 1).unwrap();
        for lang in ["aa", "bb"] {
            let c = s.per_language_counts[lang];
            assert_eq!(nonzero(&c), 30);
            assert_eq!(c[0], 50);
        }
        assert_eq!(s.instances.len(), 160);
    }

    #[test]
    fn single_language_keeps_all_nonzero() {
        let all = make("aa", 12, 40);
        let s = distribution_matched_downsample(&all, 30, 5).unwrap();
        assert_eq!(nonzero(&s.per_language_counts["aa"]), 12);
        assert_eq!(s.per_language_counts["aa"][0], 18);
    }

    #[test]
    fn zero_shortfall_names_language() {
        let mut all = make("aa", 30, 100);
        all.extend(make("bb", 50, 10));
        match distribution_matched_downsample(&all, 80, 1) {
            Err(Error::Shortfall { language, message }) => {
                assert_eq!(language, "bb");
                assert!(message.contains("short by 40"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn downsample_order_invariant() {
        let mut all = make("aa", 30, 100);
        all.extend(make("bb", 50, 100));
        let a = distribution_matched_downsample(&all, 80, 9).unwrap();
        all.reverse();
        let b = distribution_matched_downsample(&all, 80, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_counts_and_determinism() {
        let mut all = make("aa", 150, 150);
        all.extend(make("bb", 150, 150));
        let spec = MixtureSpec {
            target_language: LanguageTag::from_code("aa").unwrap(),
            target_count: 100,
            additional_language: Some(LanguageTag::from_code("bb").unwrap()),
            additional_count: 100,
            seed: 4,
        };
        let m = build_mixture(&all, &spec).unwrap();
        assert_eq!(m.len(), 200);
        assert_eq!(m.iter().filter(|i| i.language.code() == "aa").count(), 100);
        assert_eq!(m, build_mixture(&all, &spec).unwrap());

        let solo = MixtureSpec {
            additional_language: None,
            ..spec.clone()
        };
        let s = build_mixture(&all, &solo).unwrap();
        assert_eq!(s.len(), 100);
        assert!(s.iter().all(|i| i.language.code() == "aa"));

        let greedy = MixtureSpec {
            additional_count: 1000,
            ..spec
        };
        assert!(matches!(
            build_mixture(&all, &greedy),
            Err(Error::Shortfall { ref language, .. }) if language == "bb"
        ));
    }

    #[test]
    fn ladder_nesting_and_errors() {
        let all = make("aa", 10, 10);
        let l = size_ladder(&all, &[10, 20], 3, true).unwrap();
        assert_eq!(l[0].len(), 10);
        assert_eq!(l[1].len(), 20);
        let big: BTreeSet<_> = l[1].iter().map(|i| i.query_id.clone()).collect();
        assert!(l[0].iter().all(|i| big.contains(&i.query_id)));
        assert_eq!(size_ladder(&all, &[5], 3, true).unwrap()[0].len(), 5);
        assert!(size_ladder(&all, &[10, 10], 3, true).is_err());
        assert!(size_ladder(&all, &[20, 10], 3, true).is_err());
        assert!(size_ladder(&all, &[21], 3, true).is_err());
        let ind = size_ladder(&all, &[5, 15], 3, false).unwrap();
        assert_eq!(ind[1].len(), 15);
    }
}

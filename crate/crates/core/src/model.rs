//! Domain vocabulary: scores, thresholds, languages, queries, passages and
//! graded judgments, plus whole-dataset validation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A graded relevance judgment on the closed 0..=3 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelevanceScore(u8);

impl RelevanceScore {
    pub const MAX: u8 = 3;
    pub const ALL: [RelevanceScore; 4] = [
        RelevanceScore(0),
        RelevanceScore(1),
        RelevanceScore(2),
        RelevanceScore(3),
    ];

    pub fn new(value: i64) -> Result<Self> {
        if (0..=i64::from(Self::MAX)).contains(&value) {
            Ok(RelevanceScore(value as u8))
        } else {
            Err(Error::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_nonzero(self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for RelevanceScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for RelevanceScore {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for RelevanceScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        RelevanceScore::new(v).map_err(serde::de::Error::custom)
    }
}

/// Binarization threshold: scores `>= tau` are positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Threshold(u8);

impl Threshold {
    pub const ALL: [Threshold; 3] = [Threshold(1), Threshold(2), Threshold(3)];

    pub fn new(tau: i64) -> Result<Self> {
        if (1..=3).contains(&tau) {
            Ok(Threshold(tau as u8))
        } else {
            Err(Error::ThresholdOutOfRange(tau))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_positive(self, score: RelevanceScore) -> bool {
        score.value() >= self.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Threshold::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceTier {
    Low,
    Medium,
    High,
    VeryHigh,
}

impl ResourceTier {
    pub const ALL: [ResourceTier; 4] = [
        ResourceTier::Low,
        ResourceTier::Medium,
        ResourceTier::High,
        ResourceTier::VeryHigh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResourceTier::Low => "low",
            ResourceTier::Medium => "medium",
            ResourceTier::High => "high",
            ResourceTier::VeryHigh => "very_high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(ResourceTier::Low),
            "medium" | "mid" => Some(ResourceTier::Medium),
            "high" => Some(ResourceTier::High),
            "very_high" | "veryhigh" | "very-high" => Some(ResourceTier::VeryHigh),
            _ => None,
        }
    }

    /// Tier of the six natural languages studied; synthetic codes are
    /// unknown and fall back to `Medium`.
    pub fn for_known_code(code: &str) -> Option<Self> {
        match code {
            "fi" | "ar" => Some(ResourceTier::Low),
            "ja" => Some(ResourceTier::Medium),
            "ru" | "es" => Some(ResourceTier::High),
            "en" => Some(ResourceTier::VeryHigh),
            _ => None,
        }
    }
}

/// A language code plus its resource tier.
///
/// Equality, ordering and hashing use the code only; the tier is metadata.
#[derive(Debug, Clone)]
pub struct LanguageTag {
    code: String,
    tier: ResourceTier,
}

impl LanguageTag {
    pub const MAX_CODE_LEN: usize = 8;

    pub fn new(code: &str, tier: ResourceTier) -> Result<Self> {
        if code.is_empty() {
            return Err(Error::InvalidLanguage {
                code: code.into(),
                reason: "empty code",
            });
        }
        if code.chars().count() > Self::MAX_CODE_LEN {
            return Err(Error::InvalidLanguage {
                code: code.into(),
                reason: "longer than 8 characters",
            });
        }
        if code.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
            return Err(Error::InvalidLanguage {
                code: code.into(),
                reason: "must be lowercase without whitespace",
            });
        }
        Ok(LanguageTag {
            code: code.to_string(),
            tier,
        })
    }

    /// Build a tag from a bare code, inferring the tier for known languages.
    pub fn from_code(code: &str) -> Result<Self> {
        let tier = ResourceTier::for_known_code(code).unwrap_or(ResourceTier::Medium);
        LanguageTag::new(code, tier)
    }

    /// Parse `code` or `code:tier`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec.split_once(':') {
            Some((code, tier)) => {
                let tier = ResourceTier::parse(tier).ok_or_else(|| Error::InvalidLanguage {
                    code: spec.into(),
                    reason: "unknown resource tier",
                })?;
                LanguageTag::new(code, tier)
            }
            None => LanguageTag::from_code(spec),
        }
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn tier(&self) -> ResourceTier {
        self.tier
    }

    pub fn with_tier(mut self, tier: ResourceTier) -> Self {
        self.tier = tier;
        self
    }
}

impl PartialEq for LanguageTag {
    fn eq(&self, other: &Self) -> bool {
        self.code == other.code
    }
}

impl Eq for LanguageTag {}

impl Hash for LanguageTag {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.code.hash(state);
    }
}

impl PartialOrd for LanguageTag {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LanguageTag {
    fn cmp(&self, other: &Self) -> Ordering {
        self.code.cmp(&other.code)
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

impl Serialize for LanguageTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}:{}", self.code, self.tier.name()))
    }
}

impl<'de> Deserialize<'de> for LanguageTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LanguageTag::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn checked_text(text: &str, what: &'static str) -> Result<String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::InvalidConfig(format!("{what} text is empty")));
    }
    Ok(trimmed.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub language: LanguageTag,
}

impl Query {
    pub fn new(id: impl Into<String>, text: &str, language: LanguageTag) -> Result<Self> {
        Ok(Query {
            id: id.into(),
            text: checked_text(text, "query")?,
            language,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub language: LanguageTag,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: &str, language: LanguageTag) -> Result<Self> {
        Ok(Passage {
            id: id.into(),
            text: checked_text(text, "passage")?,
            language,
        })
    }
}

/// One `(query, passage, score)` judgment by one annotator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedInstance {
    pub query_id: String,
    pub passage_id: String,
    pub score: RelevanceScore,
    pub language: LanguageTag,
    pub annotator_id: String,
}

impl GradedInstance {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.query_id, &self.passage_id, &self.annotator_id)
    }

    /// Sort key used wherever sampling must not depend on input order.
    pub fn sort_key(&self) -> (&str, &str, &str, &str) {
        (
            self.language.code(),
            &self.query_id,
            &self.passage_id,
            &self.annotator_id,
        )
    }
}

/// Queries, passages and judgments that travel together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub queries: Vec<Query>,
    pub passages: Vec<Passage>,
    pub instances: Vec<GradedInstance>,
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.passages.is_empty() && self.instances.is_empty()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dataset(&self.instances, &self.queries, &self.passages)
    }

    pub fn languages(&self) -> Vec<LanguageTag> {
        let set: BTreeSet<LanguageTag> = self
            .queries
            .iter()
            .map(|q| q.language.clone())
            .chain(self.passages.iter().map(|p| p.language.clone()))
            .chain(self.instances.iter().map(|i| i.language.clone()))
            .collect();
        set.into_iter().collect()
    }

    pub fn annotators(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .instances
            .iter()
            .map(|i| i.annotator_id.as_str())
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Replace tiers of matching language codes everywhere in the dataset.
    pub fn apply_tiers(&mut self, tiers: &BTreeMap<String, ResourceTier>) {
        let fix = |tag: &mut LanguageTag| {
            if let Some(&t) = tiers.get(tag.code()) {
                tag.tier = t;
            }
        };
        self.queries.iter_mut().for_each(|q| fix(&mut q.language));
        self.passages.iter_mut().for_each(|p| fix(&mut p.language));
        self.instances.iter_mut().for_each(|i| fix(&mut i.language));
    }

    /// Same dataset with `instances` replaced.
    pub fn with_instances(&self, instances: Vec<GradedInstance>) -> Dataset {
        Dataset {
            queries: self.queries.clone(),
            passages: self.passages.clone(),
            instances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    DuplicateQueryId {
        query_id: String,
    },
    DuplicatePassageId {
        passage_id: String,
    },
    DanglingQuery {
        query_id: String,
        passage_id: String,
        annotator_id: String,
    },
    DanglingPassage {
        query_id: String,
        passage_id: String,
        annotator_id: String,
    },
    DuplicateInstance {
        query_id: String,
        passage_id: String,
        annotator_id: String,
        occurrences: usize,
    },
    LanguageMismatch {
        query_id: String,
        passage_id: String,
        annotator_id: String,
        instance_language: String,
        query_language: String,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DuplicateQueryId { query_id } => write!(f, "duplicate query id {query_id}"),
            Issue::DuplicatePassageId { passage_id } => {
                write!(f, "duplicate passage id {passage_id}")
            }
            Issue::DanglingQuery {
                query_id,
                passage_id,
                annotator_id,
            } => write!(
                f,
                "instance ({query_id}, {passage_id}, {annotator_id}) references unknown query"
            ),
            Issue::DanglingPassage {
                query_id,
                passage_id,
                annotator_id,
            } => write!(
                f,
                "instance ({query_id}, {passage_id}, {annotator_id}) references unknown passage"
            ),
            Issue::DuplicateInstance {
                query_id,
                passage_id,
                annotator_id,
                occurrences,
            } => write!(
                f,
                "instance ({query_id}, {passage_id}, {annotator_id}) appears {occurrences} times"
            ),
            Issue::LanguageMismatch {
                query_id,
                passage_id,
                annotator_id,
                instance_language,
                query_language,
            } => write!(
                f,
                "instance ({query_id}, {passage_id}, {annotator_id}) tagged {instance_language} \
                 but query is {query_language}"
            ),
        }
    }
}

/// Outcome of [`validate_dataset`]. The dataset is accepted iff `issues` is
/// empty; `unjudged_queries` is informational.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub unjudged_queries: Vec<String>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Check referential integrity, key uniqueness and language consistency.
///
/// The report is sorted, so it does not depend on input order.
pub fn validate_dataset(
    instances: &[GradedInstance],
    queries: &[Query],
    passages: &[Passage],
) -> ValidationReport {
    let mut issues = BTreeSet::new();

    let mut query_lang: HashMap<&str, &LanguageTag> = HashMap::new();
    for q in queries {
        if query_lang.insert(q.id.as_str(), &q.language).is_some() {
            issues.insert(Issue::DuplicateQueryId {
                query_id: q.id.clone(),
            });
        }
    }
    let mut passage_ids = BTreeSet::new();
    for p in passages {
        if !passage_ids.insert(p.id.as_str()) {
            issues.insert(Issue::DuplicatePassageId {
                passage_id: p.id.clone(),
            });
        }
    }

    let mut seen: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
    let mut judged = BTreeSet::new();
    for inst in instances {
        *seen.entry(inst.key()).or_default() += 1;
        judged.insert(inst.query_id.as_str());
        let owned = || {
            (
                inst.query_id.clone(),
                inst.passage_id.clone(),
                inst.annotator_id.clone(),
            )
        };
        match query_lang.get(inst.query_id.as_str()) {
            None => {
                let (query_id, passage_id, annotator_id) = owned();
                issues.insert(Issue::DanglingQuery {
                    query_id,
                    passage_id,
                    annotator_id,
                });
            }
            Some(lang) if **lang != inst.language => {
                let (query_id, passage_id, annotator_id) = owned();
                issues.insert(Issue::LanguageMismatch {
                    query_id,
                    passage_id,
                    annotator_id,
                    instance_language: inst.language.code().to_string(),
                    query_language: lang.code().to_string(),
                });
            }
            Some(_) => {}
        }
        if !passage_ids.contains(inst.passage_id.as_str()) {
            let (query_id, passage_id, annotator_id) = owned();
            issues.insert(Issue::DanglingPassage {
                query_id,
                passage_id,
                annotator_id,
            });
        }
    }
    for ((q, p, a), n) in seen {
        if n > 1 {
            issues.insert(Issue::DuplicateInstance {
                query_id: q.into(),
                passage_id: p.into(),
                annotator_id: a.into(),
                occurrences: n,
            });
        }
    }

    let unjudged: BTreeSet<String> = queries
        .iter()
        .filter(|q| !judged.contains(q.id.as_str()))
        .map(|q| q.id.clone())
        .collect();

    ValidationReport {
        issues: issues.into_iter().collect(),
        unjudged_queries: unjudged.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lang(code: &str) -> LanguageTag {
        LanguageTag::from_code(code).unwrap()
    }

    fn inst(q: &str, p: &str, s: i64, a: &str) -> GradedInstance {
        GradedInstance {
            query_id: q.into(),
            passage_id: p.into(),
            score: RelevanceScore::new(s).unwrap(),
            language: lang("fi"),
            annotator_id: a.into(),
        }
    }

    fn corpus() -> (Vec<Query>, Vec<Passage>) {
        (
            vec![Query::new("q1", "mikä on", lang("fi")).unwrap()],
            vec![
                Passage::new("p1", "tämä on", lang("fi")).unwrap(),
                Passage::new("p2", "toinen", lang("fi")).unwrap(),
            ],
        )
    }

    #[test]
    fn score_bounds() {
        for v in 0..=3 {
            assert_eq!(RelevanceScore::new(v).unwrap().value() as i64, v);
        }
        assert!(RelevanceScore::new(-1).is_err());
        assert!(RelevanceScore::new(4).is_err());
    }

    #[test]
    fn threshold_bounds() {
        assert!(Threshold::new(0).is_err());
        assert!(Threshold::new(4).is_err());
        let t = Threshold::new(2).unwrap();
        assert!(t.is_positive(RelevanceScore::new(2).unwrap()));
        assert!(!t.is_positive(RelevanceScore::new(1).unwrap()));
    }

    #[test]
    fn language_tag_rules() {
        assert!(LanguageTag::new("", ResourceTier::Low).is_err());
        assert!(LanguageTag::new("FI", ResourceTier::Low).is_err());
        assert!(LanguageTag::new("abcdefghi", ResourceTier::Low).is_err());
        assert!(LanguageTag::new("abcdefgh", ResourceTier::Low).is_ok());
        assert_eq!(lang("fi").tier(), ResourceTier::Low);
        assert_eq!(lang("en").tier(), ResourceTier::VeryHigh);
        let t = LanguageTag::parse("lo:low").unwrap();
        assert_eq!((t.code(), t.tier()), ("lo", ResourceTier::Low));
        assert!(LanguageTag::parse("lo:huge").is_err());
    }

    #[test]
    fn text_is_trimmed_and_required() {
        assert!(Query::new("q", "   ", lang("fi")).is_err());
        assert_eq!(Query::new("q", "  a b ", lang("fi")).unwrap().text, "a b");
        assert!(Passage::new("p", "", lang("fi")).is_err());
    }

    #[test]
    fn empty_dataset_is_accepted() {
        let report = validate_dataset(&[], &[], &[]);
        assert!(report.accepted());
        assert!(report.unjudged_queries.is_empty());
    }

    #[test]
    fn dangling_passage_reported_once() {
        let (qs, ps) = corpus();
        let report = validate_dataset(&[inst("q1", "p9", 2, "a")], &qs, &ps);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(report.issues[0], Issue::DanglingPassage { .. }));
    }

    #[test]
    fn duplicate_key_reported_once() {
        let (qs, ps) = corpus();
        let report = validate_dataset(&[inst("q1", "p1", 2, "a"), inst("q1", "p1", 3, "a")], &qs, &ps);
        assert_eq!(report.issues.len(), 1);
        assert!(matches!(
            report.issues[0],
            Issue::DuplicateInstance { occurrences: 2, .. }
        ));
        // a second annotator on the same pair is not a duplicate
        let ok = validate_dataset(&[inst("q1", "p1", 2, "a"), inst("q1", "p1", 3, "b")], &qs, &ps);
        assert!(ok.accepted());
    }

    #[test]
    fn language_mismatch_is_an_issue() {
        let (qs, ps) = corpus();
        let mut i = inst("q1", "p1", 1, "a");
        i.language = lang("ar");
        let report = validate_dataset(&[i], &qs, &ps);
        assert!(matches!(report.issues[0], Issue::LanguageMismatch { .. }));
    }

    #[test]
    fn unjudged_queries_are_informational() {
        let (qs, ps) = corpus();
        let report = validate_dataset(&[], &qs, &ps);
        assert!(report.accepted());
        assert_eq!(report.unjudged_queries, vec!["q1".to_string()]);
    }

    #[test]
    fn score_serde_round_trip() {
        for s in RelevanceScore::ALL {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<RelevanceScore>(&json).unwrap(), s);
        }
        assert!(serde_json::from_str::<RelevanceScore>("4").is_err());
    }

    proptest! {
        #[test]
        fn validation_is_order_independent(
            raw in prop::collection::vec((0u8..3, 0u8..4, 0i64..4, 0u8..2), 0..30),
            seed in any::<u64>(),
        ) {
            let (qs, ps) = corpus();
            let mut instances: Vec<GradedInstance> = raw
                .iter()
                .map(|&(q, p, s, a)| inst(&format!("q{q}"), &format!("p{p}"), s, &format!("a{a}")))
                .collect();
            let report = validate_dataset(&instances, &qs, &ps);
            prop_assert_eq!(&report, &validate_dataset(&instances, &qs, &ps));
            use rand::seq::SliceRandom;
            instances.shuffle(&mut crate::seed::rng(seed, "perm"));
            prop_assert_eq!(report, validate_dataset(&instances, &qs, &ps));
        }
    }
}

//! Threshold binarization of graded judgments into contrastive pairs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{GradedInstance, Threshold};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query_id: String,
    pub passage_id: String,
    pub language: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub positives: usize,
    pub negatives: usize,
    pub positive_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveSet {
    pub tau: Threshold,
    /// Per-language threshold overrides (experimental).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tau_by_language: BTreeMap<String, Threshold>,
    pub annotator_id: String,
    pub positives: Vec<LabeledPair>,
    pub negatives: Vec<LabeledPair>,
    pub balance: BTreeMap<String, Balance>,
    /// Queries left with negatives only at this threshold.
    pub negative_only_queries: Vec<String>,
    /// Instances ignored because another annotator produced them.
    pub skipped_other_annotators: usize,
    /// Set when no instance of the annotator was found.
    pub empty: bool,
}

impl ContrastiveSet {
    /// Restrict to one language; equal to binarizing the filtered input.
    pub fn filter_language(&self, code: &str) -> ContrastiveSet {
        let keep = |v: &[LabeledPair]| -> Vec<LabeledPair> {
            v.iter().filter(|p| p.language == code).cloned().collect()
        };
        let positives = keep(&self.positives);
        let negatives = keep(&self.negatives);
        let (balance, negative_only) = diagnostics(&positives, &negatives);
        ContrastiveSet {
            tau: self.tau,
            tau_by_language: self.tau_by_language.clone(),
            annotator_id: self.annotator_id.clone(),
            empty: positives.is_empty() && negatives.is_empty(),
            positives,
            negatives,
            balance,
            negative_only_queries: negative_only,
            skipped_other_annotators: 0,
        }
    }

    /// Negatives of each query, for appending labeled negatives to batches.
    pub fn negatives_by_query(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in &self.negatives {
            out.entry(n.query_id.as_str())
                .or_default()
                .push(n.passage_id.as_str());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn diagnostics(
    positives: &[LabeledPair],
    negatives: &[LabeledPair],
) -> (BTreeMap<String, Balance>, Vec<String>) {
    let mut balance: BTreeMap<String, Balance> = BTreeMap::new();
    for p in positives {
        balance.entry(p.language.clone()).or_default().positives += 1;
    }
    for n in negatives {
        balance.entry(n.language.clone()).or_default().negatives += 1;
    }
    for b in balance.values_mut() {
        b.positive_ratio = b.positives as f64 / (b.positives + b.negatives) as f64;
    }
    let with_pos: BTreeSet<&str> = positives.iter().map(|p| p.query_id.as_str()).collect();
    let negative_only: BTreeSet<String> = negatives
        .iter()
        .filter(|n| !with_pos.contains(n.query_id.as_str()))
        .map(|n| n.query_id.clone())
        .collect();
    (balance, negative_only.into_iter().collect())
}

/// Split the annotator's instances into positives (`score >= tau`) and
/// negatives. Class imbalance is reported, not corrected.
pub fn binarize(instances: &[GradedInstance], tau: Threshold, annotator_id: &str) -> ContrastiveSet {
    binarize_per_language(instances, tau, &BTreeMap::new(), annotator_id)
}

/// [`binarize`] with per-language threshold overrides.
pub fn binarize_per_language(
    instances: &[GradedInstance],
    tau: Threshold,
    overrides: &BTreeMap<String, Threshold>,
    annotator_id: &str,
) -> ContrastiveSet {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut skipped = 0;
    for inst in instances {
        if inst.annotator_id != annotator_id {
            skipped += 1;
            continue;
        }
        let t = overrides.get(inst.language.code()).copied().unwrap_or(tau);
        let pair = LabeledPair {
            query_id: inst.query_id.clone(),
            passage_id: inst.passage_id.clone(),
            language: inst.language.code().to_string(),
        };
        if t.is_positive(inst.score) {
            positives.push(pair);
        } else {
            negatives.push(pair);
        }
    }
    positives.sort();
    negatives.sort();
    let (balance, negative_only) = diagnostics(&positives, &negatives);
    if positives.is_empty() && negatives.is_empty() {
        log::warn!("binarize: no instances from annotator {annotator_id:?}");
    }
    ContrastiveSet {
        tau,
        tau_by_language: overrides.clone(),
        annotator_id: annotator_id.to_string(),
        empty: positives.is_empty() && negatives.is_empty(),
        positives,
        negatives,
        balance,
        negative_only_queries: negative_only,
        skipped_other_annotators: skipped,
    }
}

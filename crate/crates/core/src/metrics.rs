//! Graded ranking metrics and the qrels / run file formats.
//!
//! nDCG uses `DCG@k = Σ gain(rel_i) / log2(i + 1)` with exponential gain
//! `2^rel - 1` by default (trec_eval convention) and linear gain `rel` as an
//! alternative. The ideal ranking is built from all judged passages of the
//! query. Queries with an ideal DCG of zero score 0 and are listed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{open_reader, write_with};
use crate::model::{RelevanceScore, Threshold};
use crate::scalar::Scalar;

/// Graded judgments: query id → passage id → score. Unjudged pairs score 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrels {
    map: BTreeMap<String, BTreeMap<String, RelevanceScore>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, passage_id: &str, score: RelevanceScore) {
        self.map
            .entry(query_id.to_string())
            .or_default()
            .insert(passage_id.to_string(), score);
    }

    pub fn score(&self, query_id: &str, passage_id: &str) -> RelevanceScore {
        self.map
            .get(query_id)
            .and_then(|m| m.get(passage_id))
            .copied()
            .unwrap_or(RelevanceScore::ALL[0])
    }

    pub fn judged(&self, query_id: &str) -> impl Iterator<Item = (&str, RelevanceScore)> {
        self.map
            .get(query_id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(p, s)| (p.as_str(), *s)))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keep only judgments whose passage id passes `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Qrels {
        let map = self
            .map
            .iter()
            .map(|(q, m)| {
                let inner: BTreeMap<_, _> = m
                    .iter()
                    .filter(|(p, _)| keep(p))
                    .map(|(p, s)| (p.clone(), *s))
                    .collect();
                (q.clone(), inner)
            })
            .filter(|(_, m)| !m.is_empty())
            .collect();
        Qrels { map }
    }

    pub fn encode(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (q, m) in &self.map {
            for (p, s) in m {
                writeln!(out, "{q}\t{p}\t{s}")?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_with(path, |w| self.encode(w))
    }

    pub fn read(path: &Path) -> Result<Qrels> {
        let mut qrels = Qrels::new();
        for (idx, line) in open_reader(path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |field: &str, message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                field: field.into(),
                message,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(err("<line>", format!("expected 3 columns, found {}", cols.len())));
            }
            let score = cols[2]
                .parse::<i64>()
                .map_err(|e| err("score", e.to_string()))
                .and_then(|v| RelevanceScore::new(v).map_err(|e| err("score", e.to_string())))?;
            qrels.insert(cols[0], cols[1], score);
        }
        Ok(qrels)
    }
}

/// Ranked passages per query, similarities non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult<F> {
    pub rankings: BTreeMap<String, Vec<(String, F)>>,
}

impl<F> Default for RunResult<F> {
    fn default() -> Self {
        RunResult {
            rankings: BTreeMap::new(),
        }
    }
}

impl<F: Scalar> RunResult<F> {
    pub fn insert(&mut self, query_id: &str, ranked: Vec<(String, F)>) {
        self.rankings.insert(query_id.to_string(), ranked);
    }

    /// Tab-separated `query_id passage_id rank similarity`, 6 decimals.
    pub fn encode(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (q, ranked) in &self.rankings {
            for (rank, (p, sim)) in ranked.iter().enumerate() {
                writeln!(out, "{q}\t{p}\t{}\t{:.6}", rank + 1, sim.as_f64())?;
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_with(path, |w| self.encode(w))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(usize, String, F)>> = BTreeMap::new();
        for (idx, line) in open_reader(path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |field: &str, message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                field: field.into(),
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err("<line>", format!("expected 4 columns, found {}", cols.len())));
            }
            let rank: usize = cols[2].parse().map_err(|e| err("rank", format!("{e}")))?;
            let sim: f64 = cols[3]
                .parse()
                .map_err(|e| err("similarity", format!("{e}")))?;
            rows.entry(cols[0].to_string())
                .or_default()
                .push((rank, cols[1].to_string(), F::of(sim)));
        }
        let rankings = rows
            .into_iter()
            .map(|(q, mut v)| {
                v.sort_by_key(|r| r.0);
                (q, v.into_iter().map(|(_, p, s)| (p, s)).collect())
            })
            .collect();
        Ok(RunResult { rankings })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    /// `2^rel - 1`
    #[default]
    Exponential,
    /// `rel`
    Linear,
}

impl Gain {
    pub fn value<F: Scalar>(self, rel: u8) -> F {
        match self {
            Gain::Exponential => F::of(f64::from((1u32 << rel) - 1)),
            Gain::Linear => F::of(f64::from(rel)),
        }
    }
}

fn discount<F: Scalar>(rank: usize) -> F {
    F::of((rank as f64 + 1.0).log2())
}

/// DCG of grades in ranked order, truncated at `k`.
pub fn dcg<F: Scalar>(grades: &[u8], k: usize, gain: Gain) -> F {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.value::<F>(g) / discount::<F>(i + 1))
        .sum()
}

/// nDCG@k for one ranking; `None` when the ideal DCG is zero.
pub fn ndcg_single<F: Scalar>(ranked: &[u8], judged: &[u8], k: usize, gain: Gain) -> Option<F> {
    let mut ideal = judged.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: F = dcg(&ideal, k, gain);
    if idcg <= F::zero() {
        return None;
    }
    Some(dcg::<F>(ranked, k, gain) / idcg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport<F> {
    pub per_query: BTreeMap<String, F>,
    pub mean: F,
    /// Queries whose value is a convention rather than a measurement
    /// (zero ideal DCG for nDCG, no relevant passages for recall).
    pub flagged: Vec<String>,
}

fn macro_average<F: Scalar>(per_query: &BTreeMap<String, F>) -> F {
    if per_query.is_empty() {
        return F::zero();
    }
    let total: F = per_query.values().copied().sum();
    total / F::of(per_query.len() as f64)
}

/// nDCG@k per query of the run plus the macro-average.
pub fn ndcg_at_k<F: Scalar>(run: &RunResult<F>, qrels: &Qrels, k: usize, gain: Gain) -> MetricReport<F> {
    let mut per_query = BTreeMap::new();
    let mut flagged = Vec::new();
    for (q, ranked) in &run.rankings {
        let grades: Vec<u8> = ranked.iter().map(|(p, _)| qrels.score(q, p).value()).collect();
        let judged: Vec<u8> = qrels.judged(q).map(|(_, s)| s.value()).collect();
        let value = match ndcg_single(&grades, &judged, k, gain) {
            Some(v) => v,
            None => {
                flagged.push(q.clone());
                F::zero()
            }
        };
        per_query.insert(q.clone(), value);
    }
    MetricReport {
        mean: macro_average(&per_query),
        per_query,
        flagged,
    }
}

/// Fraction of passages with score `>= tau` that appear in the top `k`.
/// Queries with no such passage score 1.0 and are flagged.
pub fn recall_at_k<F: Scalar>(
    run: &RunResult<F>,
    qrels: &Qrels,
    tau: Threshold,
    k: usize,
) -> MetricReport<F> {
    let mut per_query = BTreeMap::new();
    let mut flagged = Vec::new();
    for (q, ranked) in &run.rankings {
        let relevant: BTreeSet<&str> = qrels
            .judged(q)
            .filter(|(_, s)| tau.is_positive(*s))
            .map(|(p, _)| p)
            .collect();
        let value = if relevant.is_empty() {
            flagged.push(q.clone());
            F::one()
        } else {
            let hits = ranked
                .iter()
                .take(k)
                .filter(|(p, _)| relevant.contains(p.as_str()))
                .count();
            F::of(hits as f64) / F::of(relevant.len() as f64)
        };
        per_query.insert(q.clone(), value);
    }
    MetricReport {
        mean: macro_average(&per_query),
        per_query,
        flagged,
    }
}

//! Exact brute-force cosine retrieval over an embedded passage corpus.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;

use crate::encoder::{dot, EncoderParams};
use crate::error::{Error, Result};
use crate::metrics::RunResult;
use crate::model::{Passage, Query};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PassageIndex<F> {
    ids: Vec<String>,
    languages: Vec<String>,
    dim: usize,
    /// row-major `n × dim`, unit-norm rows
    embeddings: Vec<F>,
}

impl<F: Scalar> PassageIndex<F> {
    /// Index pre-computed embeddings; rows are re-normalized.
    pub fn from_embeddings(ids: Vec<String>, languages: Vec<String>, rows: Vec<Vec<F>>) -> Result<Self> {
        if ids.len() != rows.len() || languages.len() != rows.len() {
            return Err(Error::InvalidConfig(format!(
                "index has {} ids, {} languages and {} embeddings",
                ids.len(),
                languages.len(),
                rows.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidConfig(format!("duplicate passage id {dup} in index")));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut embeddings = Vec::with_capacity(dim * rows.len());
        for (id, mut row) in ids.iter().zip(rows) {
            if row.len() != dim {
                return Err(Error::InvalidConfig(format!(
                    "embedding of {id} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            let norm = dot(&row, &row).sqrt();
            if !(norm.as_f64() >= 1e-12) {
                return Err(Error::DegenerateProjection(norm.as_f64()));
            }
            for v in &mut row {
                *v /= norm;
            }
            embeddings.extend(row);
        }
        Ok(PassageIndex {
            ids,
            languages,
            dim,
            embeddings,
        })
    }

    /// Embed and index passages (in parallel; the result does not depend on
    /// the thread count).
    pub fn build(params: &EncoderParams<F>, passages: &[Passage]) -> Result<Self> {
        let rows = passages
            .par_iter()
            .map(|p| params.embed_text(&p.text))
            .collect::<Result<Vec<_>>>()?;
        Self::from_embeddings(
            passages.iter().map(|p| p.id.clone()).collect(),
            passages.iter().map(|p| p.language.code().to_string()).collect(),
            rows,
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    /// Keep only passages of one language.
    pub fn filter_language(&self, code: &str) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.languages[i] == code).collect();
        PassageIndex {
            ids: keep.iter().map(|&i| self.ids[i].clone()).collect(),
            languages: keep.iter().map(|&i| self.languages[i].clone()).collect(),
            dim: self.dim,
            embeddings: keep.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// Exact top-`k` by cosine similarity; ties go to the smaller passage id.
    pub fn search(&self, query: &[F], k: usize) -> Result<Vec<(String, F)>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::InvalidConfig("search cutoff must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        let qn = dot(query, query).sqrt();
        if !(qn.as_f64() >= 1e-12) {
            return Err(Error::DegenerateProjection(qn.as_f64()));
        }
        // min-heap on (score, reversed id) holding the best k so far
        let mut heap: BinaryHeap<Hit<'_, F>> = BinaryHeap::with_capacity(k + 1);
        for i in 0..self.len() {
            let hit = Hit {
                score: dot(query, self.row(i)) / qn,
                id: &self.ids[i],
            };
            if heap.len() < k {
                heap.push(hit);
            } else if hit.better_than(heap.peek().unwrap()) {
                heap.pop();
                heap.push(hit);
            }
        }
        let mut hits = heap.into_vec();
        hits.sort_by(|a, b| b.rank_cmp(a));
        Ok(hits.into_iter().map(|h| (h.id.to_string(), h.score)).collect())
    }

    /// Rank the index for every `(query_id, embedding)`.
    pub fn run(&self, queries: &[(String, Vec<F>)], k: usize) -> Result<RunResult<F>> {
        let ranked = queries
            .par_iter()
            .map(|(id, e)| self.search(e, k).map(|r| (id.clone(), r)))
            .collect::<Result<Vec<_>>>()?;
        let mut run = RunResult::default();
        for (id, r) in ranked {
            run.insert(&id, r);
        }
        Ok(run)
    }

    /// Embed `queries` with `params` and rank the index for each.
    pub fn retrieve(&self, params: &EncoderParams<F>, queries: &[Query], k: usize) -> Result<RunResult<F>> {
        let embedded = queries
            .par_iter()
            .map(|q| params.embed_text(&q.text).map(|e| (q.id.clone(), e)))
            .collect::<Result<Vec<_>>>()?;
        self.run(&embedded, k)
    }
}

struct Hit<'a, F> {
    score: F,
    id: &'a str,
}

impl<F: Scalar> Hit<'_, F> {
    /// Greater means ranked earlier.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(self.id))
    }

    fn better_than(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Greater
    }
}

// BinaryHeap is a max-heap; invert so the worst kept hit is on top.
impl<F: Scalar> Ord for Hit<'_, F> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.rank_cmp(self)
    }
}

impl<F: Scalar> PartialOrd for Hit<'_, F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<F: Scalar> PartialEq for Hit<'_, F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<F: Scalar> Eq for Hit<'_, F> {}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(rows: Vec<Vec<f64>>) -> PassageIndex<f64> {
        let n = rows.len();
        PassageIndex::from_embeddings(
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["xx".into(); n],
            rows,
        )
        .unwrap()
    }

    #[test]
    fn single_passage() {
        let idx = index(vec![vec![1.0, 0.0]]);
        let r = idx.search(&[0.3, 0.7], 10).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, "p0");
    }

    #[test]
    fn exact_match_first() {
        let idx = index(vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]]);
        let r = idx.search(&[0.6, 0.8], 2).unwrap();
        assert_eq!(r[0].0, "p1");
        assert!((r[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ties_by_ascending_id() {
        let idx = index(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let r = idx.search(&[1.0, 0.0], 2).unwrap();
        assert_eq!(r.iter().map(|h| h.0.as_str()).collect::<Vec<_>>(), ["p1", "p2"]);
    }

    #[test]
    fn errors() {
        let empty = PassageIndex::<f64>::from_embeddings(vec![], vec![], vec![]).unwrap();
        assert!(matches!(empty.search(&[], 1), Err(Error::EmptyIndex)));
        let idx = index(vec![vec![1.0, 0.0]]);
        assert!(idx.search(&[1.0, 0.0], 0).is_err());
        assert!(idx.search(&[1.0], 1).is_err());
        assert!(PassageIndex::<f64>::from_embeddings(
            vec!["a".into(), "a".into()],
            vec!["x".into(); 2],
            vec![vec![1.0], vec![1.0]]
        )
        .is_err());
    }

    #[test]
    fn language_filter() {
        let idx = PassageIndex::<f64>::from_embeddings(
            vec!["a".into(), "b".into()],
            vec!["fi".into(), "ja".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let fi = idx.filter_language("fi");
        assert_eq!(fi.ids(), ["a".to_string()]);
        assert_eq!(fi.search(&[0.0, 1.0], 5).unwrap()[0].0, "a");
    }
}

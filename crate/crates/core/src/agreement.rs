//! Two-annotator agreement: confusion counts, row-normalized heatmaps and
//! quadratic weighted kappa.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GradedInstance, RelevanceScore};
use crate::scalar::Scalar;

const K: usize = 4;

/// `counts[i][j]` = pairs scored `i` by annotator A and `j` by annotator B.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AgreementMatrix {
    pub counts: [[u64; K]; K],
    pub n: u64,
}

impl AgreementMatrix {
    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        let n = counts.iter().flatten().sum();
        AgreementMatrix { counts, n }
    }

    pub fn add(&mut self, a: RelevanceScore, b: RelevanceScore) {
        self.counts[a.index()][b.index()] += 1;
        self.n += 1;
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0; K]; K];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                t[j][i] = c;
            }
        }
        AgreementMatrix { counts: t, n: self.n }
    }

    fn as_scalar<F: Scalar>(&self) -> [[F; K]; K] {
        self.counts.map(|row| row.map(|c| F::of(c as f64)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pairing {
    pub matrix: AgreementMatrix,
    /// `(query_id, passage_id)` keys judged by only one side.
    pub only_in_a: Vec<(String, String)>,
    pub only_in_b: Vec<(String, String)>,
}

fn keyed(instances: &[GradedInstance]) -> BTreeMap<(&str, &str), RelevanceScore> {
    instances
        .iter()
        .map(|i| ((i.query_id.as_str(), i.passage_id.as_str()), i.score))
        .collect()
}

/// Pair two annotations of the same `(query, passage)` keys.
pub fn pair_annotations(a: &[GradedInstance], b: &[GradedInstance]) -> Result<Pairing> {
    let ka = keyed(a);
    let kb = keyed(b);
    let mut matrix = AgreementMatrix::default();
    let mut only_in_a = Vec::new();
    for (key, &sa) in &ka {
        match kb.get(key) {
            Some(&sb) => matrix.add(sa, sb),
            None => only_in_a.push((key.0.to_string(), key.1.to_string())),
        }
    }
    let only_in_b = kb
        .keys()
        .filter(|k| !ka.contains_key(*k))
        .map(|k| (k.0.to_string(), k.1.to_string()))
        .collect();
    if matrix.n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(Pairing {
        matrix,
        only_in_a,
        only_in_b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowNormalized<F> {
    pub rows: [[F; K]; K],
    /// Rows with no observations; left all-zero.
    pub empty_rows: [bool; K],
}

impl<F: Scalar> RowNormalized<F> {
    /// Four lines of four comma-separated proportions.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{:.6}", v.as_f64())).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }
}

pub fn row_normalize<F: Scalar>(m: &AgreementMatrix) -> RowNormalized<F> {
    let mut rows = [[F::zero(); K]; K];
    let mut empty_rows = [false; K];
    for (i, row) in m.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            empty_rows[i] = true;
            continue;
        }
        let t = F::of(total as f64);
        for (j, &c) in row.iter().enumerate() {
            rows[i][j] = F::of(c as f64) / t;
        }
    }
    RowNormalized { rows, empty_rows }
}

fn weight<F: Scalar>(i: usize, j: usize) -> F {
    let d = i as f64 - j as f64;
    F::of(d * d / ((K - 1) * (K - 1)) as f64)
}

/// Quadratic weighted kappa of a joint matrix (counts or proportions).
///
/// `κ = 1 - Σ w·O / Σ w·E` with `w_ij = (i-j)²/(K-1)²`, `O` the observed
/// proportions and `E` the outer product of the two empirical marginals.
pub fn kappa_from_joint<F: Scalar>(joint: &[[F; K]; K]) -> Result<F> {
    let total: F = joint.iter().flatten().copied().sum();
    if !(total > F::zero()) {
        return Err(Error::KappaUndefined("no observations".into()));
    }
    let o = joint.map(|row| row.map(|v| v / total));
    let mut row_m = [F::zero(); K];
    let mut col_m = [F::zero(); K];
    for i in 0..K {
        for j in 0..K {
            row_m[i] += o[i][j];
            col_m[j] += o[i][j];
        }
    }
    let mut observed = F::zero();
    let mut expected = F::zero();
    for i in 0..K {
        for j in 0..K {
            let w: F = weight(i, j);
            observed += w * o[i][j];
            expected += w * row_m[i] * col_m[j];
        }
    }
    if expected == F::zero() {
        // both annotators constant on the same grade
        return if observed == F::zero() {
            Ok(F::one())
        } else {
            Err(Error::KappaUndefined(
                "expected weighted disagreement is zero but observed is not".into(),
            ))
        };
    }
    Ok(F::one() - observed / expected)
}

pub fn quadratic_weighted_kappa<F: Scalar>(m: &AgreementMatrix) -> Result<F> {
    if m.n == 0 {
        return Err(Error::KappaUndefined("no paired instances".into()));
    }
    kappa_from_joint(&m.as_scalar::<F>())
}

/// Kappa implied by a true-grade distribution and a confusion matrix whose
/// rows give the second annotator's grade given the true grade.
pub fn kappa_from_profile(true_marginal: &[f64; K], confusion: &[[f64; K]; K]) -> Result<f64> {
    let mut joint = [[0.0; K]; K];
    for i in 0..K {
        for j in 0..K {
            joint[i][j] = true_marginal[i] * confusion[i][j];
        }
    }
    kappa_from_joint(&joint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LanguageTag;

    fn inst(q: &str, p: &str, s: i64) -> GradedInstance {
        GradedInstance {
            query_id: q.into(),
            passage_id: p.into(),
            score: RelevanceScore::new(s).unwrap(),
            language: LanguageTag::from_code("fi").unwrap(),
            annotator_id: "x".into(),
        }
    }

    #[test]
    fn identical_twos() {
        let a: Vec<_> = (0..10).map(|i| inst("q", &i.to_string(), 2)).collect();
        let p = pair_annotations(&a, &a).unwrap();
        assert_eq!(p.matrix.counts[2][2], 10);
        assert_eq!(p.matrix.n, 10);
        assert_eq!(p.matrix.counts.iter().flatten().sum::<u64>(), 10);
    }

    #[test]
    fn crossed_extremes() {
        let a = vec![inst("q", "p1", 0), inst("q", "p2", 3)];
        let b = vec![inst("q", "p1", 3), inst("q", "p2", 0)];
        let p = pair_annotations(&a, &b).unwrap();
        assert_eq!(p.matrix.counts[0][3], 1);
        assert_eq!(p.matrix.counts[3][0], 1);
        assert_eq!(p.matrix.n, 2);
    }

    #[test]
    fn unmatched_and_no_overlap() {
        let a = vec![inst("q", "p1", 0), inst("q", "p2", 3)];
        let b = vec![inst("q", "p1", 1), inst("q", "p3", 0)];
        let p = pair_annotations(&a, &b).unwrap();
        assert_eq!(p.only_in_a, vec![("q".into(), "p2".into())]);
        assert_eq!(p.only_in_b, vec![("q".into(), "p3".into())]);
        assert!(matches!(
            pair_annotations(&a, &[inst("z", "z", 1)]),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn normalization_cases() {
        let m = AgreementMatrix::from_counts([[2, 2, 0, 0], [0; 4], [0, 0, 5, 0], [0, 0, 0, 1]]);
        let r = row_normalize::<f64>(&m);
        assert_eq!(r.rows[0], [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(r.rows[1], [0.0; 4]);
        assert_eq!(r.empty_rows, [false, true, false, false]);
        let id = AgreementMatrix::from_counts([[3, 0, 0, 0], [0, 4, 0, 0], [0, 0, 5, 0], [0, 0, 0, 6]]);
        let r = row_normalize::<f64>(&id);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.rows[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("1.000000,0.000000,0.000000,0.000000\n"));
    }

    #[test]
    fn kappa_reference_cases() {
        let diag = AgreementMatrix::from_counts([[3, 0, 0, 0], [0, 1, 0, 0], [0, 0, 7, 0], [0, 0, 0, 2]]);
        assert_eq!(quadratic_weighted_kappa::<f64>(&diag).unwrap(), 1.0);
        // mass only on (0,3) and (3,0): observed weighted disagreement 1.0,
        // expected 0.5
        let anti = AgreementMatrix::from_counts([[0, 0, 0, 10], [0; 4], [0; 4], [10, 0, 0, 0]]);
        assert!((quadratic_weighted_kappa::<f64>(&anti).unwrap() + 1.0).abs() < 1e-12);
        let constant = AgreementMatrix::from_counts([[0; 4], [0, 9, 0, 0], [0; 4], [0; 4]]);
        assert_eq!(quadratic_weighted_kappa::<f64>(&constant).unwrap(), 1.0);
        assert!(quadratic_weighted_kappa::<f64>(&AgreementMatrix::default()).is_err());
    }

    #[test]
    fn kappa_independent_is_zero() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let b = [0.25, 0.25, 0.4, 0.1];
        let mut joint = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                joint[i][j] = a[i] * b[j];
            }
        }
        assert!(kappa_from_joint::<f64>(&joint).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kappa_f32() {
        let m = AgreementMatrix::from_counts([[5, 1, 0, 0], [1, 5, 1, 0], [0, 1, 5, 1], [0, 0, 1, 5]]);
        let a: f32 = quadratic_weighted_kappa(&m).unwrap();
        let b: f64 = quadratic_weighted_kappa(&m).unwrap();
        assert!((f64::from(a) - b).abs() < 1e-5);
    }
}

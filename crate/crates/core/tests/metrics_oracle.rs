use std::collections::BTreeMap;

use gradrel::metrics::{ndcg_at_k, Gain, Qrels, RunResult};
use gradrel::model::RelevanceScore;
use proptest::prelude::*;

fn gain(g: u8, kind: Gain) -> f64 {
    match kind {
        Gain::Exponential => 2f64.powi(g.into()) - 1.0,
        Gain::Linear => g.into(),
    }
}

fn dcg(grades: &[u8], k: usize, kind: Gain) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g, kind) / ((i + 2) as f64).log2())
        .sum()
}

// Heap's algorithm; fine for up to 7 items.
fn best_permutation(items: &mut [u8], n: usize, k: usize, kind: Gain, best: &mut f64) {
    if n <= 1 {
        *best = best.max(dcg(items, k, kind));
        return;
    }
    for i in 0..n {
        best_permutation(items, n - 1, k, kind, best);
        let j = if n.is_multiple_of(2) { i } else { 0 };
        items.swap(j, n - 1);
    }
}

fn case() -> impl Strategy<Value = (Vec<u8>, usize, Vec<usize>, usize)> {
    (prop::collection::vec(0u8..=3, 1..=7), 0usize..6).prop_flat_map(|(grades, extra)| {
        let n = grades.len() + extra;
        (
            Just(grades),
            Just(extra),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
            1usize..=12,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ndcg_matches_permutation_oracle((grades, _extra, order, k) in case(), linear in any::<bool>()) {
        let kind = if linear { Gain::Linear } else { Gain::Exponential };
        let mut qrels = Qrels::new();
        let mut by_id = BTreeMap::new();
        for (i, &g) in grades.iter().enumerate() {
            qrels.insert("q", &format!("p{i}"), RelevanceScore::new(g.into()).unwrap());
            by_id.insert(i, g);
        }
        let mut run: RunResult<f64> = RunResult::default();
        run.insert(
            "q",
            order.iter().enumerate().map(|(r, &i)| (format!("p{i}"), -(r as f64))).collect(),
        );
        let got = ndcg_at_k(&run, &qrels, k, kind);

        let ranked: Vec<u8> = order.iter().map(|i| by_id.get(i).copied().unwrap_or(0)).collect();
        let mut all = grades.clone();
        let mut ideal = 0.0;
        let n = all.len();
        best_permutation(&mut all, n, k, kind, &mut ideal);
        if ideal == 0.0 {
            prop_assert_eq!(got.mean, 0.0);
            prop_assert_eq!(got.flagged, vec!["q".to_string()]);
        } else {
            prop_assert!((got.mean - dcg(&ranked, k, kind) / ideal).abs() < 1e-10);
            prop_assert!(got.mean <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn macro_average_over_queries() {
    let mut qrels = Qrels::new();
    qrels.insert("a", "x", RelevanceScore::new(3).unwrap());
    qrels.insert("b", "y", RelevanceScore::new(2).unwrap());
    let mut run: RunResult<f64> = RunResult::default();
    run.insert("a", vec![("x".into(), 1.0)]);
    run.insert("b", vec![("z".into(), 1.0), ("y".into(), 0.5)]);
    let r = ndcg_at_k(&run, &qrels, 10, Gain::Exponential);
    let b = 1.0 / 3f64.log2();
    assert!((r.mean - (1.0 + b) / 2.0).abs() < 1e-12);
}

use gradrel::agreement::{kappa_from_joint, pair_annotations, quadratic_weighted_kappa, AgreementMatrix};
use gradrel::model::{GradedInstance, LanguageTag, RelevanceScore};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = [[u64; 4]; 4]> {
    prop::array::uniform4(prop::array::uniform4(0u64..60)).prop_map(|mut m| {
        m[0][0] += 1;
        m[3][3] += 1;
        m
    })
}

fn kappa(m: [[u64; 4]; 4]) -> f64 {
    quadratic_weighted_kappa(&AgreementMatrix::from_counts(m)).unwrap()
}

proptest! {
    #[test]
    fn symmetric_and_scale_invariant(m in matrix(), c in 2u64..20) {
        let k = kappa(m);
        let t = AgreementMatrix::from_counts(m).transpose();
        prop_assert!((k - quadratic_weighted_kappa::<f64>(&t).unwrap()).abs() < 1e-12);
        prop_assert!((k - kappa(m.map(|r| r.map(|v| v * c)))).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
    }

    #[test]
    fn outer_product_is_chance(r in prop::array::uniform4(1u64..20), c in prop::array::uniform4(1u64..20)) {
        let mut m = [[0u64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = r[i] * c[j];
            }
        }
        prop_assert!(kappa(m).abs() < 1e-12);
    }

    #[test]
    fn proportions_equal_counts(m in matrix()) {
        let n: u64 = m.iter().flatten().sum();
        let joint = m.map(|r| r.map(|v| v as f64 / n as f64));
        prop_assert!((kappa_from_joint(&joint).unwrap() - kappa(m)).abs() < 1e-12);
    }
}

#[test]
fn hand_cases() {
    let mut diag = [[0u64; 4]; 4];
    (0..4).for_each(|i| diag[i][i] = 3);
    assert_eq!(kappa(diag), 1.0);
    let mut anti = [[0u64; 4]; 4];
    anti[0][3] = 4;
    anti[3][0] = 4;
    assert!((kappa(anti) + 1.0).abs() < 1e-12);
    let mut single = [[0u64; 4]; 4];
    single[2][2] = 9;
    assert_eq!(kappa(single), 1.0);
}

#[test]
fn pairing_by_key() {
    let lang = LanguageTag::from_code("fi").unwrap();
    let inst = |q: &str, p: &str, s: i64, who: &str| GradedInstance {
        query_id: q.into(),
        passage_id: p.into(),
        score: RelevanceScore::new(s).unwrap(),
        language: lang.clone(),
        annotator_id: who.into(),
    };
    let a = vec![inst("q", "1", 3, "a"), inst("q", "2", 0, "a"), inst("q", "3", 1, "a")];
    let b = vec![inst("q", "2", 1, "b"), inst("q", "1", 3, "b"), inst("q", "4", 2, "b")];
    let p = pair_annotations(&a, &b).unwrap();
    assert_eq!(p.matrix.n, 2);
    assert_eq!(p.matrix.counts[3][3], 1);
    assert_eq!(p.matrix.counts[0][1], 1);
    assert_eq!(p.only_in_a.len(), 1);
    assert_eq!(p.only_in_b.len(), 1);
    assert!(pair_annotations(&a[..1], &b[2..]).is_err());
}

use std::collections::BTreeSet;

use gradrel::binarize::binarize;
use gradrel::io::encode_dataset;
use gradrel::model::{Dataset, GradedInstance, LanguageTag, RelevanceScore, Threshold};
use gradrel::sampling::{build_mixture, distribution_matched_downsample, size_ladder, MixtureSpec};
use proptest::prelude::*;

/// `(language index, score)` per instance.
fn instances(spec: &[(usize, u8)]) -> Vec<GradedInstance> {
    spec.iter()
        .enumerate()
        .map(|(i, &(l, s))| GradedInstance {
            query_id: format!("l{l}-q{}", i / 4),
            passage_id: format!("l{l}-p{i}"),
            score: RelevanceScore::new(s.into()).unwrap(),
            language: LanguageTag::from_code(&format!("l{l}")).unwrap(),
            annotator_id: "a".into(),
        })
        .collect()
}

fn dataset() -> impl Strategy<Value = Vec<GradedInstance>> {
    prop::collection::vec((0usize..3, 0u8..=3), 30..300).prop_map(|mut v| {
        // every language gets at least one zero and one non-zero instance
        for l in 0..3 {
            v.push((l, 0));
            v.push((l, 2));
        }
        instances(&v)
    })
}

fn bytes(instances: &[GradedInstance]) -> Vec<u8> {
    let mut buf = Vec::new();
    encode_dataset(&Dataset::default().with_instances(instances.to_vec()), &mut buf).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn downsample_matches_minimum_nonzero(data in dataset(), seed in any::<u64>()) {
        let count = |lang: &str, nonzero: bool| {
            data.iter().filter(|i| i.language.code() == lang && i.score.is_nonzero() == nonzero).count()
        };
        let langs = ["l0", "l1", "l2"];
        let m = langs.iter().map(|l| count(l, true)).min().unwrap();
        let target = m + langs.iter().map(|l| count(l, false)).min().unwrap();
        let split = distribution_matched_downsample(&data, target, seed).unwrap();
        prop_assert_eq!(split.nonzero_per_language, m);
        for counts in split.per_language_counts.values() {
            prop_assert_eq!(counts[1] + counts[2] + counts[3], m);
            prop_assert_eq!(counts.iter().sum::<usize>(), target);
        }
        prop_assert_eq!(split.instances.len(), 3 * target);
        let again = distribution_matched_downsample(&data, target, seed).unwrap();
        prop_assert_eq!(bytes(&split.instances), bytes(&again.instances));
    }

    #[test]
    fn thresholds_nest(data in dataset()) {
        let sets: Vec<_> = Threshold::ALL.iter().map(|&t| binarize(&data, t, "a")).collect();
        let pos: Vec<BTreeSet<_>> = sets.iter().map(|s| s.positives.iter().cloned().collect()).collect();
        prop_assert!(pos[2].is_subset(&pos[1]));
        prop_assert!(pos[1].is_subset(&pos[0]));
        for s in &sets {
            prop_assert_eq!(s.len(), data.len());
        }
    }

    #[test]
    fn ladder_is_nested(data in dataset(), seed in any::<u64>()) {
        let sizes = [data.len() / 4, data.len() / 2, data.len()];
        let ladder = size_ladder(&data, &sizes, seed, true).unwrap();
        for w in ladder.windows(2) {
            let big: BTreeSet<_> = w[1].iter().map(|i| i.key()).collect();
            prop_assert!(w[0].iter().all(|i| big.contains(&i.key())));
        }
        for (rung, &n) in ladder.iter().zip(&sizes) {
            prop_assert_eq!(rung.len(), n);
        }
    }
}

#[test]
fn shortfall_names_language() {
    let mut v: Vec<(usize, u8)> = (0..25).map(|i| (0, if i < 15 { 0 } else { 2 })).collect();
    v.extend((0..6).map(|_| (1, 3)));
    v.push((1, 0));
    let err = distribution_matched_downsample(&instances(&v), 12, 0).unwrap_err().to_string();
    assert!(err.contains("l1"), "{err}");
}

#[test]
fn mixture_has_requested_counts() {
    let v: Vec<(usize, u8)> = (0..200).map(|i| (i % 2, (i % 4) as u8)).collect();
    let data = instances(&v);
    let spec = MixtureSpec {
        target_language: LanguageTag::from_code("l0").unwrap(),
        target_count: 40,
        additional_language: Some(LanguageTag::from_code("l1").unwrap()),
        additional_count: 25,
        seed: 5,
    };
    let mix = build_mixture(&data, &spec).unwrap();
    assert_eq!(mix.iter().filter(|i| i.language.code() == "l0").count(), 40);
    assert_eq!(mix.iter().filter(|i| i.language.code() == "l1").count(), 25);
    assert_eq!(mix, build_mixture(&data, &spec).unwrap());
    let too_many = MixtureSpec { target_count: 101, ..spec };
    assert!(build_mixture(&data, &too_many).unwrap_err().to_string().contains("l0"));
}

use gradrel::encoder::dot;
use gradrel::retrieval::PassageIndex;
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, Vec<f64>, usize)> {
    (1usize..=32, 1usize..=200).prop_flat_map(|(d, n)| {
        let row = prop::collection::vec(-1.0f64..1.0, d).prop_map(|mut v| {
            v[0] += 2.5;
            v
        });
        (
            prop::collection::vec(row, n),
            // duplicate sources: row i copies row dup[i] when dup[i] < i
            prop::collection::vec(0usize..400, n),
            prop::collection::vec(-1.0f64..1.0, d),
            1usize..=25,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn top_k_equals_full_sort((mut rows, dup, query, k) in corpus(), copy_query in any::<bool>()) {
        for i in 0..rows.len() {
            if dup[i] < i {
                rows[i] = rows[dup[i]].clone();
            }
        }
        let n = rows.len();
        let ids: Vec<String> = (0..n).map(|i| format!("p{:03}", (i * 37) % 1009)).collect();
        let index = PassageIndex::from_embeddings(ids, vec!["xx".into(); n], rows).unwrap();
        let query = if copy_query { index.row(n / 2).to_vec() } else { query };
        let qn = dot(&query, &query).sqrt();
        prop_assume!(qn > 1e-6);
        let got = index.search(&query, k).unwrap();
        let mut all: Vec<(String, f64)> = (0..n)
            .map(|i| (index.ids()[i].clone(), dot(&query, index.row(i)) / qn))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(got, all);
    }
}

#[test]
fn index_is_thread_count_independent() {
    use gradrel::encoder::{EncoderParams, FeatureHasher};
    use gradrel::model::{LanguageTag, Passage, Query};
    let lang = LanguageTag::from_code("fi").unwrap();
    let passages: Vec<Passage> = (0..50)
        .map(|i| Passage::new(format!("p{i}"), &format!("teksti numero {i} {}", i * i), lang.clone()).unwrap())
        .collect();
    let queries = vec![Query::new("q", "numero 7", lang).unwrap()];
    let params = EncoderParams::<f64>::init(FeatureHasher::default(), 16, 0.05, 1).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| PassageIndex::build(&params, &passages).unwrap().retrieve(&params, &queries, 5).unwrap());
    let b = four.install(|| PassageIndex::build(&params, &passages).unwrap().retrieve(&params, &queries, 5).unwrap());
    assert_eq!(a, b);
}

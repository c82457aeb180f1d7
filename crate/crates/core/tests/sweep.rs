use gradrel::model::{LanguageTag, ResourceTier, Threshold};
use gradrel::noise::NoiseProfile;
use gradrel::sweep::{cells_csv, rerender_bundle, run_sweep, write_bundle, MixtureCell, SweepConfig, SweepData, UseCase};
use gradrel::synth::{generate, SynthConfig};
use gradrel::train::TrainConfig;

fn data() -> SweepData {
    let cfg = SynthConfig {
        seed: 2,
        languages: vec![
            LanguageTag::new("lo", ResourceTier::Low).unwrap(),
            LanguageTag::new("hi", ResourceTier::High).unwrap(),
        ],
        passages_per_language: 300,
        queries_per_language: 100,
        heldout_queries_per_language: 15,
        noise_profile: NoiseProfile::tiered(),
        ..SynthConfig::default()
    };
    let c = generate(&cfg).unwrap();
    SweepData {
        train: c.training_dataset(),
        eval_queries: c.heldout_queries.clone(),
        passages: c.passages.clone(),
        qrels: c.qrels.clone(),
    }
}

fn mono() -> SweepConfig {
    SweepConfig {
        languages: vec!["lo".into(), "hi".into()],
        thresholds: vec![Threshold::new(1).unwrap(), Threshold::new(3).unwrap()],
        sizes: vec![200, 400],
        seed: 9,
        train: TrainConfig {
            dim: 16,
            epochs: 1,
            batch_size: 16,
            ..TrainConfig::default()
        },
        ..SweepConfig::default()
    }
}

#[test]
fn cell_count_and_parallel_determinism() {
    let d = data();
    let serial = run_sweep(&mono(), &d).unwrap();
    // 2 languages x (baseline + 2 sizes x 2 thresholds)
    assert_eq!(serial.cells.len(), 10);
    assert!(serial.cells.iter().all(|c| c.status == "ok"), "{:?}", serial.cells);
    let parallel = run_sweep(&SweepConfig { parallelism: 4, ..mono() }, &d).unwrap();
    assert_eq!(cells_csv(&serial.cells).unwrap(), cells_csv(&parallel.cells).unwrap());
}

#[test]
fn cells_do_not_depend_on_the_rest_of_the_grid() {
    let d = data();
    let full = run_sweep(&mono(), &d).unwrap();
    let part = run_sweep(
        &SweepConfig {
            languages: vec!["hi".into()],
            thresholds: vec![Threshold::new(3).unwrap()],
            ..mono()
        },
        &d,
    )
    .unwrap();
    for c in &part.cells {
        let same = full.cells.iter().find(|f| f.key == c.key).unwrap();
        assert_eq!(same.value, c.value, "{}", c.key.label());
    }
}

#[test]
fn diagonal_crosslingual_equals_monolingual() {
    let d = data();
    let m = run_sweep(&SweepConfig { sizes: vec![400], ..mono() }, &d).unwrap();
    let x = run_sweep(
        &SweepConfig {
            use_case: UseCase::Crosslingual,
            sizes: vec![400],
            ..mono()
        },
        &d,
    )
    .unwrap();
    assert_eq!(x.cells.len(), 2 * 2 * 3);
    for c in x.cells.iter().filter(|c| c.key.languages == "lo>lo" && c.key.tau.is_some()) {
        let mono = m
            .cells
            .iter()
            .find(|mc| mc.key.languages == "lo" && mc.key.tau == c.key.tau)
            .unwrap();
        assert_eq!(mono.value, c.value);
    }
    assert!(x.deltas.iter().any(|r| r.display.contains("favors tau=")));
}

#[test]
fn mixture_cells_and_bundle_rerender() {
    let d = data();
    let cfg = SweepConfig {
        use_case: UseCase::Mixture,
        mixtures: vec![MixtureCell {
            target: "lo".into(),
            additional: Some("hi".into()),
        }],
        target_count: 300,
        additional_count: 300,
        ..mono()
    };
    let r = run_sweep(&cfg, &d).unwrap();
    // baseline, lo and lo+hi at two thresholds
    assert_eq!(r.cells.len(), 5);
    assert_eq!(r.deltas.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    write_bundle(&r, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    std::fs::remove_file(dir.path().join("cells.csv")).unwrap();
    let again = rerender_bundle(dir.path()).unwrap();
    assert_eq!(again, r);
    assert_eq!(std::fs::read_to_string(dir.path().join("cells.csv")).unwrap(), csv);
    assert!(dir.path().join("mixture_deltas.svg").exists());
}

#[test]
fn missing_size_fails_only_its_cells() {
    let d = data();
    let r = run_sweep(&SweepConfig { sizes: vec![200, 100_000], ..mono() }, &d).unwrap();
    let failed: Vec<_> = r.cells.iter().filter(|c| c.status != "ok").collect();
    assert_eq!(failed.len(), 4);
    assert!(failed.iter().all(|c| c.key.size == Some(100_000) && c.value.is_none()));
}

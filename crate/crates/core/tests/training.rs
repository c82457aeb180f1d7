use gradrel::binarize::binarize;
use gradrel::checkpoint;
use gradrel::model::{LanguageTag, ResourceTier, Threshold};
use gradrel::noise::NoiseProfile;
use gradrel::synth::{generate, SynthConfig, SyntheticCorpus};
use gradrel::train::{train, Texts, TrainConfig};
use gradrel::Encoder;

fn corpus() -> (SynthConfig, SyntheticCorpus) {
    let cfg = SynthConfig {
        seed: 4,
        languages: vec![LanguageTag::new("lo", ResourceTier::Low).unwrap()],
        passages_per_language: 500,
        queries_per_language: 400,
        heldout_queries_per_language: 20,
        noise_profile: NoiseProfile::identity(),
        ..SynthConfig::default()
    };
    let c = generate(&cfg).unwrap();
    (cfg, c)
}

fn small() -> TrainConfig {
    TrainConfig {
        dim: 16,
        epochs: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_leave_params_unchanged() {
    let (cfg, c) = corpus();
    let set = binarize(&c.observed_instances, Threshold::new(1).unwrap(), &cfg.annotator_id);
    let tcfg = TrainConfig { epochs: 0, ..small() };
    let init: Encoder = tcfg.init_params().unwrap();
    let out = train(&init, &set, &Texts::from_dataset(&c.training_dataset()), &tcfg).unwrap();
    assert_eq!(out.params, init);
    assert!(out.loss_trace.is_empty());
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    let (cfg, c) = corpus();
    let set = binarize(&c.observed_instances, Threshold::new(2).unwrap(), &cfg.annotator_id);
    let texts = Texts::from_dataset(&c.training_dataset());
    let tcfg = small();
    let run = || {
        let init: Encoder = tcfg.init_params().unwrap();
        checkpoint::encode(&train(&init, &set, &texts, &tcfg).unwrap().params)
    };
    assert_eq!(run(), run());
}

#[test]
fn loss_decreases_on_separable_data() {
    let (cfg, c) = corpus();
    let set = binarize(&c.observed_instances, Threshold::new(1).unwrap(), &cfg.annotator_id);
    assert!(set.positives.len() >= 1000);
    let tcfg = small();
    let init: Encoder = tcfg.init_params().unwrap();
    let out = train(&init, &set, &Texts::from_dataset(&c.training_dataset()), &tcfg).unwrap();
    assert!(out.epoch_mean_loss[1] < out.epoch_mean_loss[0], "{:?}", out.epoch_mean_loss);
    assert!(out.params.is_finite());
}

#[test]
fn too_few_positives_is_an_error() {
    let (cfg, c) = corpus();
    let set = binarize(&c.observed_instances[..40], Threshold::new(3).unwrap(), &cfg.annotator_id);
    let tcfg = small();
    let init: Encoder = tcfg.init_params().unwrap();
    let err = train(&init, &set, &Texts::from_dataset(&c.training_dataset()), &tcfg).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("smaller batch") && msg.contains("lower tau"), "{msg}");
}

#[test]
fn checkpoint_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let tcfg = small();
    let p: Encoder = tcfg.init_params().unwrap();
    let path = dir.path().join("m.bin");
    checkpoint::save(&path, &p, Some(&tcfg)).unwrap();
    assert_eq!(checkpoint::load::<f64>(&path).unwrap(), p);
    let back: TrainConfig = gradrel::io::read_json(&checkpoint::sidecar_path(&path)).unwrap();
    assert_eq!(back, tcfg);
}

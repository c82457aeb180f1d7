use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use gradrel::agreement::{pair_annotations, quadratic_weighted_kappa, row_normalize};
use gradrel::binarize::{binarize_per_language, ContrastiveSet};
use gradrel::io::{read_dataset, read_json, write_dataset, write_json};
use gradrel::metrics::{ndcg_at_k, Gain, Qrels};
use gradrel::model::{Dataset, LanguageTag, ResourceTier, Threshold};
use gradrel::noise::NoiseProfile;
use gradrel::sampling::{build_mixture, distribution_matched_downsample, score_counts, MixtureSpec};
use gradrel::sweep::{
    compute_deltas, rerender_bundle, run_sweep, write_bundle, CellKey, CellResult, Provenance, SweepConfig,
    SweepData, SweepReport, UseCase,
};
use gradrel::synth::{generate, SynthConfig};
use gradrel::train::{train, Texts, TrainConfig};
use gradrel::{checkpoint, svg, Encoder, Index};

use crate::{
    AgreeArgs, BinarizeArgs, Cli, Command, EvalArgs, Format, GainArg, IngestArgs, ReportArgs, SampleArgs, SweepArgs,
    SynthArgs, TrainArgs,
};

pub struct Failure {
    pub code: u8,
    pub source: anyhow::Error,
    /// Already printed to stderr.
    pub reported: bool,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let source = e.into();
        Failure {
            code: exit_code(&source),
            source,
            reported: false,
        }
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// 2 for invalid input or config, 1 for anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    use gradrel::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<gradrel::Error>() {
            return match err {
                E::DegenerateProjection(_) | E::NonFinite { .. } => 1,
                E::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        source: anyhow!(msg.into()),
        reported: false,
    }
}

#[derive(Serialize)]
struct RunProvenance<'a> {
    software: &'static str,
    version: &'static str,
    command: &'a str,
    argv: Vec<String>,
    seed: u64,
    threads: Option<usize>,
    out_dir: &'a Path,
    effective: Value,
}

struct Ctx<'a> {
    cli: &'a Cli,
    seed: u64,
    out: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn provenance(&self, command: &str, effective: Value) -> CmdResult {
        let p = RunProvenance {
            software: "gradrel",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().skip(1).collect(),
            seed: self.seed,
            threads: self.cli.threads,
            out_dir: self.out,
            effective,
        };
        write_json(&self.path("provenance.json"), &p)?;
        Ok(())
    }
}

pub fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        cli,
        seed: cli.seed.unwrap_or(0),
        out: &cli.out_dir,
    };
    match &cli.command {
        Command::Synth(a) => synth(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Sample(a) => sample(&ctx, a),
        Command::Binarize(a) => binarize(&ctx, a),
        Command::Agree(a) => agree(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> CmdResult {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &impl Serialize) -> CmdResult {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn print_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CmdResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    emit(std::str::from_utf8(&w.into_inner()?)?)
}

fn parse_noise(spec: &str) -> CmdResult<NoiseProfile> {
    match spec {
        "identity" => Ok(NoiseProfile::identity()),
        "tiered" => Ok(NoiseProfile::tiered()),
        s if s.starts_with("swap:") => {
            let mut parts = s.splitn(3, ':').skip(1);
            let tier = parts
                .next()
                .and_then(ResourceTier::parse)
                .ok_or_else(|| invalid(format!("noise {s:?}: expected swap:<tier>:<rate>")))?;
            let rate: f64 = parts
                .next()
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| invalid(format!("noise {s:?}: expected swap:<tier>:<rate>")))?;
            Ok(NoiseProfile::swap_high_grades(tier, rate)?)
        }
        path => Ok(read_json(Path::new(path))?),
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> CmdResult {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    if !a.languages.is_empty() {
        cfg.languages = a
            .languages
            .iter()
            .map(|l| LanguageTag::parse(l.trim()))
            .collect::<gradrel::Result<_>>()?;
    }
    if let Some(v) = a.passages {
        cfg.passages_per_language = v;
    }
    if let Some(v) = a.queries {
        cfg.queries_per_language = v;
    }
    if let Some(v) = a.heldout {
        cfg.heldout_queries_per_language = v;
    }
    if let Some(v) = a.candidates {
        cfg.candidates_per_query = v;
    }
    if let Some(n) = &a.noise {
        cfg.noise_profile = parse_noise(n)?;
    }
    if let Some(id) = &a.annotator {
        cfg.annotator_id = id.clone();
    }
    let corpus = generate(&cfg)?;
    write_dataset(&ctx.path("train.jsonl"), &corpus.training_dataset())?;
    write_dataset(&ctx.path("eval.jsonl"), &corpus.evaluation_dataset())?;
    corpus.qrels.write(&ctx.path("qrels.tsv"))?;
    let manifest = json!({
        "seed": cfg.seed,
        "languages": cfg.languages.iter().map(|l| format!("{}:{}", l.code(), l.tier().name())).collect::<Vec<_>>(),
        "passages": corpus.passages.len(),
        "train_queries": corpus.queries.len(),
        "heldout_queries": corpus.heldout_queries.len(),
        "true_score_counts": score_counts(&corpus.true_instances),
        "observed_score_counts": score_counts(&corpus.observed_instances),
        "qrels": corpus.qrels.len(),
        "files": ["train.jsonl", "eval.jsonl", "qrels.tsv"],
    });
    write_json(&ctx.path("synth_manifest.json"), &manifest)?;
    ctx.provenance("synth", serde_json::to_value(&cfg)?)?;
    log::info!("wrote synthetic dataset to {}", ctx.out.display());
    Ok(())
}

fn parse_tiers(specs: &[String]) -> CmdResult<BTreeMap<String, ResourceTier>> {
    specs
        .iter()
        .map(|s| {
            let (code, tier) = s
                .split_once(':')
                .ok_or_else(|| invalid(format!("tier override {s:?}: expected code:tier")))?;
            let tier = ResourceTier::parse(tier).ok_or_else(|| invalid(format!("unknown tier in {s:?}")))?;
            Ok((code.to_string(), tier))
        })
        .collect()
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> CmdResult {
    let reject = |lines: Vec<String>| {
        for l in &lines {
            eprintln!("{l}");
        }
        Failure {
            code: 2,
            source: anyhow!("{} rejected", a.input.display()),
            reported: true,
        }
    };
    let mut ds = match read_dataset(&a.input) {
        Ok(ds) => ds,
        Err(e @ gradrel::Error::Parse { .. }) => return Err(reject(vec![e.to_string()])),
        Err(e) => return Err(e.into()),
    };
    ds.apply_tiers(&parse_tiers(&a.tiers)?);
    let report = ds.validate();
    if !report.accepted() {
        let mut lines: Vec<String> = report.issues.iter().map(|i| format!("{}: {i}", a.input.display())).collect();
        lines.push(format!("{} issue(s); dataset rejected", report.issues.len()));
        return Err(reject(lines));
    }
    write_dataset(&ctx.path("dataset.jsonl"), &ds)?;
    let summary = json!({
        "queries": ds.queries.len(),
        "passages": ds.passages.len(),
        "instances": ds.instances.len(),
        "languages": ds.languages().iter().map(|l| format!("{}:{}", l.code(), l.tier().name())).collect::<Vec<_>>(),
        "annotators": ds.annotators(),
        "unjudged_queries": report.unjudged_queries.len(),
    });
    ctx.provenance("ingest", json!({ "input": a.input, "tiers": a.tiers }))?;
    match ctx.cli.format {
        Format::Json => print_json(&summary),
        Format::Csv => print_csv(
            &["queries", "passages", "instances", "unjudged_queries"],
            [vec![
                ds.queries.len().to_string(),
                ds.passages.len().to_string(),
                ds.instances.len().to_string(),
                report.unjudged_queries.len().to_string(),
            ]],
        ),
    }
}

fn sample(ctx: &Ctx, a: &SampleArgs) -> CmdResult {
    let ds = read_dataset(&a.input)?;
    let pool: Vec<_> = ds.instances.iter().filter(|i| i.annotator_id == a.annotator).cloned().collect();
    if pool.is_empty() {
        return Err(invalid(format!(
            "no instances by annotator {:?} in {} (found {:?})",
            a.annotator,
            a.input.display(),
            ds.annotators()
        )));
    }
    let (instances, manifest) = match (a.target_total, &a.target) {
        (Some(total), None) => {
            let split = distribution_matched_downsample(&pool, total, ctx.seed)?;
            let m = serde_json::to_value(split.manifest(&pool, ctx.seed))?;
            (split.instances, m)
        }
        (None, Some(target)) => {
            let lang = |code: &str| {
                ds.languages()
                    .into_iter()
                    .find(|l| l.code() == code)
                    .ok_or_else(|| invalid(format!("language {code} not in {}", a.input.display())))
            };
            let spec = MixtureSpec {
                target_language: lang(target)?,
                target_count: a
                    .target_count
                    .ok_or_else(|| invalid("--target-count is required with --target"))?,
                additional_language: a.additional.as_deref().map(lang).transpose()?,
                additional_count: a.additional_count,
                seed: ctx.seed,
            };
            let mix = build_mixture(&pool, &spec)?;
            let m = json!({
                "spec": spec,
                "before": score_counts(&pool),
                "after": score_counts(&mix),
            });
            (mix, m)
        }
        _ => return Err(invalid("give either --target-total or --target")),
    };
    write_dataset(&ctx.path("sampled.jsonl"), &ds.with_instances(instances))?;
    write_json(&ctx.path("sampling_manifest.json"), &manifest)?;
    ctx.provenance("sample", json!({ "args": a, "seed": ctx.seed }))?;
    Ok(())
}

fn pick_annotator(ds: &Dataset, requested: Option<&str>) -> String {
    match requested {
        Some(a) => a.to_string(),
        None => match ds.annotators().as_slice() {
            [only] => only.clone(),
            _ => "synth".into(),
        },
    }
}

fn parse_tau_overrides(specs: &[String]) -> CmdResult<BTreeMap<String, Threshold>> {
    specs
        .iter()
        .map(|s| {
            let (code, t) = s
                .split_once(':')
                .ok_or_else(|| invalid(format!("tau override {s:?}: expected code:tau")))?;
            let t: i64 = t.parse().map_err(|_| invalid(format!("tau override {s:?}: not an integer")))?;
            Ok((code.to_string(), Threshold::new(t)?))
        })
        .collect()
}

fn binarize(ctx: &Ctx, a: &BinarizeArgs) -> CmdResult {
    let ds = read_dataset(&a.input)?;
    let tau = Threshold::new(a.tau)?;
    let overrides = parse_tau_overrides(&a.tau_by_language)?;
    let annotator = pick_annotator(&ds, a.annotator.as_deref());
    let set = binarize_per_language(&ds.instances, tau, &overrides, &annotator);
    if set.empty {
        log::warn!("no instances by annotator {annotator:?}; the contrastive set is empty");
    }
    write_json(&ctx.path("contrastive.json"), &set)?;
    let summary = json!({
        "tau": tau.value(),
        "annotator": annotator,
        "positives": set.positives.len(),
        "negatives": set.negatives.len(),
        "by_language": set.balance,
        "negative_only_queries": set.negative_only_queries.len(),
        "skipped_other_annotators": set.skipped_other_annotators,
    });
    write_json(&ctx.path("balance.json"), &summary)?;
    ctx.provenance("binarize", json!({ "args": a, "annotator": annotator }))?;
    match ctx.cli.format {
        Format::Json => print_json(&summary),
        Format::Csv => print_csv(
            &["language", "positives", "negatives", "positive_ratio"],
            set.balance.iter().map(|(l, b)| {
                vec![
                    l.clone(),
                    b.positives.to_string(),
                    b.negatives.to_string(),
                    format!("{:.6}", b.positive_ratio),
                ]
            }),
        ),
    }
}

fn agree(ctx: &Ctx, a: &AgreeArgs) -> CmdResult {
    let ds_a = read_dataset(&a.input)?;
    let ds_b = match &a.other {
        Some(p) => read_dataset(p)?,
        None => ds_a.clone(),
    };
    let of = |ds: &Dataset, who: &str| -> Vec<_> {
        ds.instances.iter().filter(|i| i.annotator_id == who).cloned().collect()
    };
    let (ia, ib) = (of(&ds_a, &a.a), of(&ds_b, &a.b));
    let mut langs: Vec<String> = ds_a.languages().iter().map(|l| l.code().to_string()).collect();
    langs.insert(0, "all".into());

    let labels = |who: &str| -> Vec<String> { (0..4).map(|s| format!("{who}={s}")).collect() };
    let mut rows = Vec::new();
    for lang in &langs {
        let keep = |v: &[gradrel::model::GradedInstance]| -> Vec<_> {
            v.iter().filter(|i| lang == "all" || i.language.code() == lang).cloned().collect()
        };
        let pairing = match pair_annotations(&keep(&ia), &keep(&ib)) {
            Ok(p) => p,
            Err(gradrel::Error::NoOverlap) if lang != "all" => continue,
            Err(e) => return Err(e.into()),
        };
        let norm = row_normalize::<f64>(&pairing.matrix);
        let kappa = quadratic_weighted_kappa::<f64>(&pairing.matrix).ok();
        let stem = format!("agreement_{lang}");
        fs::write(ctx.path(&format!("{stem}.csv")), norm.to_csv()).context("writing agreement csv")?;
        let values: Vec<Vec<Option<f64>>> = norm
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .map(|&v| (!norm.empty_rows[i]).then_some(v))
                    .collect()
            })
            .collect();
        let title = format!("{} vs {} ({lang}), kappa {}", a.b, a.a, kappa.map_or("n/a".into(), |k| format!("{k:.3}")));
        let chart = svg::heatmap(&title, &labels(&a.a), &labels(&a.b), &values, |v| format!("{v:.2}"));
        fs::write(ctx.path(&format!("{stem}.svg")), chart).context("writing agreement svg")?;
        rows.push(json!({
            "language": lang,
            "pairs": pairing.matrix.n,
            "kappa": kappa,
            "only_in_a": pairing.only_in_a.len(),
            "only_in_b": pairing.only_in_b.len(),
            "counts": pairing.matrix.counts,
        }));
    }
    let summary = json!({ "a": a.a, "b": a.b, "weights": "quadratic", "languages": rows });
    write_json(&ctx.path("agreement.json"), &summary)?;
    ctx.provenance("agree", json!({ "args": a }))?;
    match ctx.cli.format {
        Format::Json => print_json(&summary),
        Format::Csv => print_csv(
            &["language", "pairs", "kappa"],
            rows.iter().map(|r| {
                vec![
                    r["language"].as_str().unwrap_or_default().to_string(),
                    r["pairs"].to_string(),
                    r["kappa"].as_f64().map_or(String::new(), |k| format!("{k}")),
                ]
            }),
        ),
    }
}

/// Written next to a checkpoint so `eval` can label its cell.
#[derive(Debug, Serialize, Deserialize)]
struct TrainingSummary {
    tau: u8,
    annotator: String,
    positives: usize,
    negatives: usize,
    steps: usize,
    epoch_mean_loss: Vec<f64>,
}

fn training_summary_path(model: &Path) -> PathBuf {
    model.with_extension("training.json")
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> CmdResult {
    let ds = read_dataset(&a.data)?;
    let set: ContrastiveSet = match &a.pairs {
        Some(p) => read_json(p)?,
        None => binarize_per_language(&ds.instances, Threshold::new(a.tau)?, &BTreeMap::new(), &a.annotator),
    };
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = ctx.seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = a.dim {
        cfg.dim = v;
    }
    let init: Encoder = cfg.init_params()?;
    let outcome = train(&init, &set, &Texts::from_dataset(&ds), &cfg)?;
    let model = ctx.path(&a.model);
    checkpoint::save(&model, &outcome.params, Some(&cfg))?;
    let mut trace = String::from("step,loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{l}\n"));
    }
    fs::write(ctx.path("loss_trace.csv"), trace).context("writing loss trace")?;
    let summary = TrainingSummary {
        tau: set.tau.value(),
        annotator: set.annotator_id.clone(),
        positives: set.positives.len(),
        negatives: set.negatives.len(),
        steps: outcome.steps,
        epoch_mean_loss: outcome.epoch_mean_loss.clone(),
    };
    write_json(&training_summary_path(&model), &summary)?;
    ctx.provenance("train", json!({ "args": a, "train": cfg, "tau": summary.tau }))?;
    log::info!(
        "trained {} steps; epoch mean loss {:?}",
        outcome.steps,
        outcome.epoch_mean_loss
    );
    Ok(())
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> CmdResult {
    if a.k == 0 {
        return Err(invalid("--k must be at least 1"));
    }
    let params: Encoder = checkpoint::load(&a.model)?;
    let ds = read_dataset(&a.corpus)?;
    let qrels = Qrels::read(&a.qrels)?;
    let in_lang = |l: &LanguageTag| a.language.as_deref().is_none_or(|c| l.code() == c);
    let queries: Vec<_> = ds.queries.iter().filter(|q| in_lang(&q.language)).cloned().collect();
    let passages: Vec<_> = ds.passages.iter().filter(|p| in_lang(&p.language)).cloned().collect();
    if queries.is_empty() {
        return Err(invalid(format!("no queries to evaluate in {}", a.corpus.display())));
    }
    let gain = match a.gain {
        GainArg::Exponential => Gain::Exponential,
        GainArg::Linear => Gain::Linear,
    };
    let index = Index::build(&params, &passages)?;
    let run = index.retrieve(&params, &queries, a.k)?;
    run.write(&ctx.path("run.tsv"))?;
    let report = ndcg_at_k(&run, &qrels, a.k, gain);
    let metric = format!("ndcg@{}", a.k);

    let summary: Option<TrainingSummary> = read_json(&training_summary_path(&a.model)).ok();
    let train_cfg: TrainConfig = read_json(&checkpoint::sidecar_path(&a.model)).unwrap_or_default();
    let languages = match &a.language {
        Some(l) => l.clone(),
        None => {
            let codes: Vec<String> = ds.languages().iter().map(|l| l.code().to_string()).collect();
            codes.join("+")
        }
    };
    let key = CellKey {
        use_case: UseCase::Monolingual,
        languages,
        tau: summary.as_ref().map(|s| s.tau),
        size: None,
        annotator: summary.as_ref().map_or("-".into(), |s| s.annotator.clone()),
    };
    let cell = CellResult {
        key: key.clone(),
        metric: metric.clone(),
        value: Some(report.mean),
        status: "ok".into(),
        queries: report.per_query.len(),
        zero_idcg: report.flagged.len(),
        positives: summary.as_ref().map(|s| s.positives),
    };
    let cfg = SweepConfig {
        seed: train_cfg.seed,
        k: a.k,
        gain,
        train: train_cfg.clone(),
        ..SweepConfig::default()
    };
    let bundle = SweepReport {
        deltas: compute_deltas(UseCase::Monolingual, std::slice::from_ref(&cell)),
        provenance: Provenance {
            software: "gradrel".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: train_cfg.seed,
            init_seed: train_cfg.seed,
            cell_seeds: [(key.label(), train_cfg.seed)].into_iter().collect(),
            metric: metric.clone(),
            gain,
            baseline: Default::default(),
            train: train_cfg,
        },
        config: cfg,
        cells: vec![cell],
    };
    write_bundle(&bundle, &ctx.path("bundle"))?;
    ctx.provenance("eval", json!({ "args": a }))?;

    match ctx.cli.format {
        Format::Json => {
            emit(&format!("{metric}\t{:.6}\n", report.mean))?;
            eprintln!(
                "{} queries, {} with no relevant passage (scored 0)",
                report.per_query.len(),
                report.flagged.len()
            );
            Ok(())
        }
        Format::Csv => print_csv(
            &["query_id", &metric],
            report.per_query.iter().map(|(q, v)| vec![q.clone(), format!("{v}")]),
        ),
    }
}

/// Experiment file: a sweep config plus optional input paths, resolved
/// relative to the file.
#[derive(Debug, Deserialize)]
struct Experiment {
    #[serde(default)]
    data: DataPaths,
    #[serde(flatten)]
    sweep: SweepConfig,
}

#[derive(Debug, Default, Deserialize)]
struct DataPaths {
    train: Option<PathBuf>,
    eval: Option<PathBuf>,
    qrels: Option<PathBuf>,
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> CmdResult {
    let exp: Experiment = read_json(&a.experiment)?;
    let base = a.experiment.parent().unwrap_or(Path::new("."));
    let resolve = |flag: &Option<PathBuf>, file: &Option<PathBuf>, name: &str| -> CmdResult<PathBuf> {
        flag.clone()
            .or_else(|| file.as_ref().map(|p| base.join(p)))
            .ok_or_else(|| invalid(format!("no {name} dataset: pass --{name} or set data.{name}")))
    };
    let train_path = resolve(&a.train, &exp.data.train, "train")?;
    let eval_path = resolve(&a.eval, &exp.data.eval, "eval")?;
    let qrels_path = resolve(&a.qrels, &exp.data.qrels, "qrels")?;

    let mut cfg = exp.sweep;
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = ctx.cli.threads {
        cfg.parallelism = t;
    }
    let eval_ds = read_dataset(&eval_path)?;
    let data = SweepData {
        train: read_dataset(&train_path)?,
        eval_queries: eval_ds.queries,
        passages: eval_ds.passages,
        qrels: Qrels::read(&qrels_path)?,
    };
    let report = run_sweep(&cfg, &data)?;
    let dir = ctx.path("bundle");
    write_bundle(&report, &dir)?;
    write_json(&ctx.path("experiment.json"), &cfg)?;
    ctx.provenance(
        "sweep",
        json!({ "experiment": cfg, "train": train_path, "eval": eval_path, "qrels": qrels_path }),
    )?;
    let failed = report.cells.iter().filter(|c| c.status != "ok").count();
    eprintln!(
        "{} cells ({} failed) written to {}",
        report.cells.len(),
        failed,
        dir.display()
    );
    Ok(())
}

fn report(ctx: &Ctx, a: &ReportArgs) -> CmdResult {
    let report = rerender_bundle(&a.bundle)?;
    let same_dir = fs::canonicalize(&a.bundle).ok() == fs::canonicalize(ctx.out).ok();
    if !same_dir {
        ctx.provenance("report", json!({ "bundle": a.bundle }))?;
    }
    match ctx.cli.format {
        Format::Json => print_json(&json!({ "cells": report.cells, "deltas": report.deltas })),
        Format::Csv => {
            emit(&gradrel::sweep::cells_csv(&report.cells)?)?;
            Ok(())
        }
    }
}

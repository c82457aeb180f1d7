//! Experiment grids over thresholds, training sizes, language mixtures and
//! cross-lingual pairs, with derived delta tables and a report bundle.
//!
//! Every cell is a pure function of the sweep config, its key and the input
//! data: the training seed is hashed from the key, all models start from one
//! shared initialization, and results are merged in key order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::binarize_per_language;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::metrics::{ndcg_at_k, Gain, Qrels};
use crate::model::{Dataset, GradedInstance, LanguageTag, Passage, Query, Threshold};
use crate::retrieval::PassageIndex;
use crate::sampling::{build_mixture, size_ladder, MixtureSpec};
use crate::seed;
use crate::svg;
use crate::train::{train, Texts, TrainConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    #[default]
    Monolingual,
    Mixture,
    Crosslingual,
}

impl UseCase {
    pub fn name(self) -> &'static str {
        match self {
            UseCase::Monolingual => "monolingual",
            UseCase::Mixture => "mixture",
            UseCase::Crosslingual => "crosslingual",
        }
    }
}

/// Reference model evaluated alongside the trained cells. Both kinds are
/// the shared initial parameters; the label is kept for reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    #[default]
    Untrained,
    FrozenInitial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureCell {
    pub target: String,
    #[serde(default)]
    pub additional: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub use_case: UseCase,
    pub thresholds: Vec<Threshold>,
    /// Monolingual training-set sizes in graded instances; empty means all.
    pub sizes: Vec<usize>,
    pub nested_sizes: bool,
    /// Training languages (query languages for cross-lingual runs).
    pub languages: Vec<String>,
    /// Cross-lingual corpus languages; empty means `languages`.
    pub corpus_languages: Vec<String>,
    pub mixtures: Vec<MixtureCell>,
    pub target_count: usize,
    pub additional_count: usize,
    /// Experimental per-language threshold overrides.
    pub tau_by_language: BTreeMap<String, Threshold>,
    pub annotator_id: String,
    pub baseline: BaselineKind,
    pub seed: u64,
    /// Maximum concurrently running cells.
    pub parallelism: usize,
    pub k: usize,
    pub gain: Gain,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            use_case: UseCase::Monolingual,
            thresholds: Threshold::ALL.to_vec(),
            sizes: Vec::new(),
            nested_sizes: true,
            languages: Vec::new(),
            corpus_languages: Vec::new(),
            mixtures: Vec::new(),
            target_count: 500,
            additional_count: 500,
            tau_by_language: BTreeMap::new(),
            annotator_id: "synth".into(),
            baseline: BaselineKind::Untrained,
            seed: 0,
            parallelism: 1,
            k: 10,
            gain: Gain::Exponential,
            train: TrainConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.thresholds.is_empty() {
            return bad("no thresholds");
        }
        if self.parallelism == 0 || self.k == 0 {
            return bad("parallelism and k must be positive");
        }
        match self.use_case {
            UseCase::Monolingual | UseCase::Crosslingual if self.languages.is_empty() => bad("no languages"),
            UseCase::Mixture if self.mixtures.is_empty() => bad("no mixtures"),
            UseCase::Mixture
                if self
                    .mixtures
                    .iter()
                    .any(|m| m.additional.as_deref() == Some(m.target.as_str())) =>
            {
                bad("mixture additional language equals its target")
            }
            _ => self.train.validate(),
        }
    }

    fn thresholds(&self) -> Vec<Threshold> {
        let set: BTreeSet<Threshold> = self.thresholds.iter().copied().collect();
        set.into_iter().collect()
    }

    fn corpus_languages(&self) -> &[String] {
        if self.corpus_languages.is_empty() {
            &self.languages
        } else {
            &self.corpus_languages
        }
    }
}

/// Canonical cell identity; the derived ordering is the report order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub use_case: UseCase,
    /// `fi`, `fi+ru` (mixture), or `fi>ru` (query > corpus).
    pub languages: String,
    /// `None` for the baseline.
    pub tau: Option<u8>,
    pub size: Option<usize>,
    pub annotator: String,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!(
            "{}/{}/tau={}/size={}/{}",
            self.use_case.name(),
            self.languages,
            self.tau.map_or("baseline".into(), |t| t.to_string()),
            self.size.map_or("-".into(), |s| s.to_string()),
            self.annotator
        )
    }

    pub fn seed(&self, master: u64) -> u64 {
        seed::derive(master, &self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub metric: String,
    pub value: Option<f64>,
    /// `ok` or `failed: <reason>`.
    pub status: String,
    pub queries: usize,
    /// Queries scored 0 by convention (no judged-relevant passage).
    pub zero_idcg: usize,
    pub positives: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub table: String,
    pub row: String,
    pub column: String,
    pub base: Option<f64>,
    pub compare: Option<f64>,
    pub abs_change: Option<f64>,
    pub rel_change_pct: Option<f64>,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub version: String,
    pub master_seed: u64,
    pub init_seed: u64,
    pub cell_seeds: BTreeMap<String, u64>,
    pub metric: String,
    pub gain: Gain,
    pub baseline: BaselineKind,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub deltas: Vec<DeltaRow>,
    pub provenance: Provenance,
}

/// Inputs shared read-only by every cell.
#[derive(Debug, Clone)]
pub struct SweepData {
    /// Training queries and passages plus graded instances.
    pub train: Dataset,
    pub eval_queries: Vec<Query>,
    pub passages: Vec<Passage>,
    pub qrels: Qrels,
}

struct Job {
    train: Option<TrainSpec>,
    /// `(key, query language, corpus language)`
    evals: Vec<(CellKey, String, String)>,
}

struct TrainSpec {
    instances: std::result::Result<Vec<GradedInstance>, String>,
    tau: Threshold,
    seed: u64,
}

fn metric_name(k: usize) -> String {
    format!("ndcg@{k}")
}

fn key(cfg: &SweepConfig, languages: String, tau: Option<Threshold>, size: Option<usize>) -> CellKey {
    CellKey {
        use_case: cfg.use_case,
        languages,
        tau: tau.map(Threshold::value),
        size,
        annotator: cfg.annotator_id.clone(),
    }
}

fn by_annotator_language(data: &SweepData, cfg: &SweepConfig, lang: &str) -> Vec<GradedInstance> {
    data.train
        .instances
        .iter()
        .filter(|i| i.annotator_id == cfg.annotator_id && i.language.code() == lang)
        .cloned()
        .collect()
}

/// Nested (or independent) size subsets for one language; sizes beyond the
/// available data come back as errors for their cells only.
fn ladder(
    data: &SweepData,
    cfg: &SweepConfig,
    lang: &str,
) -> Vec<(usize, std::result::Result<Vec<GradedInstance>, String>)> {
    let pool = by_annotator_language(data, cfg, lang);
    if cfg.sizes.is_empty() {
        return vec![(pool.len(), Ok(pool))];
    }
    let mut sizes: Vec<usize> = cfg.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let fits: Vec<usize> = sizes.iter().copied().filter(|&s| s <= pool.len() && s > 0).collect();
    let subsets = size_ladder(&pool, &fits, seed::derive(cfg.seed, &format!("ladder/{lang}")), cfg.nested_sizes);
    let mut built: BTreeMap<usize, std::result::Result<Vec<GradedInstance>, String>> = BTreeMap::new();
    match subsets {
        Ok(sets) => {
            for (s, set) in fits.iter().zip(sets) {
                built.insert(*s, Ok(set));
            }
        }
        Err(e) => {
            for s in &fits {
                built.insert(*s, Err(e.to_string()));
            }
        }
    }
    sizes
        .into_iter()
        .map(|s| {
            let r = built.remove(&s).unwrap_or_else(|| {
                Err(format!(
                    "language {lang}: size {s} not available ({} instances from annotator {})",
                    pool.len(),
                    cfg.annotator_id
                ))
            });
            (s, r)
        })
        .collect()
}

fn jobs(cfg: &SweepConfig, data: &SweepData) -> Vec<Job> {
    let taus = cfg.thresholds();
    let mut out = Vec::new();
    match cfg.use_case {
        UseCase::Monolingual => {
            for lang in &cfg.languages {
                out.push(Job {
                    train: None,
                    evals: vec![(key(cfg, lang.clone(), None, None), lang.clone(), lang.clone())],
                });
                for (size, subset) in ladder(data, cfg, lang) {
                    for &tau in &taus {
                        let k = key(cfg, lang.clone(), Some(tau), Some(size));
                        out.push(Job {
                            train: Some(TrainSpec {
                                instances: subset.clone(),
                                tau,
                                seed: k.seed(cfg.seed),
                            }),
                            evals: vec![(k, lang.clone(), lang.clone())],
                        });
                    }
                }
            }
        }
        UseCase::Crosslingual => {
            for q in &cfg.languages {
                for c in cfg.corpus_languages() {
                    out.push(Job {
                        train: None,
                        evals: vec![(key(cfg, format!("{q}>{c}"), None, None), q.clone(), c.clone())],
                    });
                }
                // same subset and seed as the monolingual cell of the largest size
                let (size, subset) = ladder(data, cfg, q).pop().expect("ladder is never empty");
                for &tau in &taus {
                    let mono = CellKey {
                        use_case: UseCase::Monolingual,
                        ..key(cfg, q.clone(), Some(tau), Some(size))
                    };
                    out.push(Job {
                        train: Some(TrainSpec {
                            instances: subset.clone(),
                            tau,
                            seed: mono.seed(cfg.seed),
                        }),
                        evals: cfg
                            .corpus_languages()
                            .iter()
                            .map(|c| (key(cfg, format!("{q}>{c}"), Some(tau), Some(size)), q.clone(), c.clone()))
                            .collect(),
                    });
                }
            }
        }
        UseCase::Mixture => {
            let mut cells: BTreeSet<(String, Option<String>)> = BTreeSet::new();
            for m in &cfg.mixtures {
                cells.insert((m.target.clone(), None));
                if let Some(a) = &m.additional {
                    cells.insert((m.target.clone(), Some(a.clone())));
                }
            }
            let targets: BTreeSet<&String> = cells.iter().map(|c| &c.0).collect();
            for t in targets {
                out.push(Job {
                    train: None,
                    evals: vec![(key(cfg, t.clone(), None, None), t.clone(), t.clone())],
                });
            }
            let pool: Vec<GradedInstance> = data
                .train
                .instances
                .iter()
                .filter(|i| i.annotator_id == cfg.annotator_id)
                .cloned()
                .collect();
            for (target, additional) in &cells {
                let langs = match additional {
                    Some(a) => format!("{target}+{a}"),
                    None => target.clone(),
                };
                let mixed = (|| -> Result<Vec<GradedInstance>> {
                    let spec = MixtureSpec {
                        target_language: LanguageTag::from_code(target)?,
                        target_count: cfg.target_count,
                        additional_language: additional.as_deref().map(LanguageTag::from_code).transpose()?,
                        additional_count: if additional.is_some() { cfg.additional_count } else { 0 },
                        seed: seed::derive(cfg.seed, &format!("mixture/{langs}")),
                    };
                    build_mixture(&pool, &spec)
                })()
                .map_err(|e| e.to_string());
                let size = cfg.target_count + if additional.is_some() { cfg.additional_count } else { 0 };
                for &tau in &taus {
                    let k = key(cfg, langs.clone(), Some(tau), Some(size));
                    out.push(Job {
                        train: Some(TrainSpec {
                            instances: mixed.clone(),
                            tau,
                            seed: k.seed(cfg.seed),
                        }),
                        evals: vec![(k, target.clone(), target.clone())],
                    });
                }
            }
        }
    }
    out
}

fn evaluate(
    params: &EncoderParams<f64>,
    data: &SweepData,
    query_lang: &str,
    corpus_lang: &str,
    cfg: &SweepConfig,
) -> Result<(f64, usize, usize)> {
    let queries: Vec<Query> = data
        .eval_queries
        .iter()
        .filter(|q| q.language.code() == query_lang)
        .cloned()
        .collect();
    if queries.is_empty() {
        return Err(Error::InsufficientData(format!("no evaluation queries in {query_lang}")));
    }
    let passages: Vec<Passage> = data
        .passages
        .iter()
        .filter(|p| p.language.code() == corpus_lang)
        .cloned()
        .collect();
    let index = PassageIndex::build(params, &passages)?;
    let run = index.retrieve(params, &queries, cfg.k)?;
    let ids: HashSet<&str> = passages.iter().map(|p| p.id.as_str()).collect();
    let qrels = data.qrels.restrict(|p| ids.contains(p));
    let report = ndcg_at_k(&run, &qrels, cfg.k, cfg.gain);
    Ok((report.mean, report.per_query.len(), report.flagged.len()))
}

fn run_job(job: &Job, init: &EncoderParams<f64>, data: &SweepData, texts: &Texts, cfg: &SweepConfig) -> Vec<CellResult> {
    let fail = |msg: String| -> Vec<CellResult> {
        job.evals
            .iter()
            .map(|(k, _, _)| CellResult {
                key: k.clone(),
                metric: metric_name(cfg.k),
                value: None,
                status: format!("failed: {msg}"),
                queries: 0,
                zero_idcg: 0,
                positives: None,
            })
            .collect()
    };
    let (params, positives) = match &job.train {
        None => (init.clone(), None),
        Some(spec) => {
            let instances = match &spec.instances {
                Ok(i) => i,
                Err(e) => return fail(e.clone()),
            };
            let set = binarize_per_language(instances, spec.tau, &cfg.tau_by_language, &cfg.annotator_id);
            let tcfg = TrainConfig {
                seed: spec.seed,
                ..cfg.train.clone()
            };
            match train(init, &set, texts, &tcfg) {
                Ok(o) => (o.params, Some(set.positives.len())),
                Err(e) => return fail(e.to_string()),
            }
        }
    };
    job.evals
        .iter()
        .map(|(k, ql, cl)| match evaluate(&params, data, ql, cl, cfg) {
            Ok((value, queries, zero_idcg)) => CellResult {
                key: k.clone(),
                metric: metric_name(cfg.k),
                value: Some(value),
                status: "ok".into(),
                queries,
                zero_idcg,
                positives,
            },
            Err(e) => {
                let mut r = fail(e.to_string()).remove(0);
                r.key = k.clone();
                r
            }
        })
        .collect()
}

/// Run every cell of the grid on a bounded worker pool.
pub fn run_sweep(cfg: &SweepConfig, data: &SweepData) -> Result<SweepReport> {
    cfg.validate()?;
    let init_seed = seed::derive(cfg.seed, "init");
    let init = TrainConfig {
        seed: init_seed,
        ..cfg.train.clone()
    }
    .init_params::<f64>()?;
    let texts = Texts::from_dataset(&data.train);
    let jobs = jobs(cfg, data);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut cells: Vec<CellResult> = pool.install(|| {
        jobs.par_iter()
            .map(|j| run_job(j, &init, data, &texts, cfg))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    cells.sort_by(|a, b| a.key.cmp(&b.key));
    for c in cells.iter().filter(|c| c.status != "ok") {
        log::warn!("cell {} {}", c.key.label(), c.status);
    }

    let mut cell_seeds = BTreeMap::new();
    for job in &jobs {
        if let Some(t) = &job.train {
            for (k, _, _) in &job.evals {
                cell_seeds.insert(k.label(), t.seed);
            }
        }
    }
    Ok(SweepReport {
        deltas: compute_deltas(cfg.use_case, &cells),
        provenance: Provenance {
            software: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: cfg.seed,
            init_seed,
            cell_seeds,
            metric: metric_name(cfg.k),
            gain: cfg.gain,
            baseline: cfg.baseline,
            train: cfg.train.clone(),
        },
        config: cfg.clone(),
        cells,
    })
}

/// Change and relative change; the relative part is undefined when the
/// base is within 1e-9 of zero.
pub fn relative_change(base: f64, compare: f64) -> (f64, Option<f64>) {
    let abs = compare - base;
    let rel = if base.abs() < 1e-9 { None } else { Some(100.0 * abs / base) };
    (abs, rel)
}

fn delta_row(table: &str, row: String, column: String, base: Option<f64>, compare: Option<f64>, xl: bool) -> DeltaRow {
    let (abs_change, rel_change_pct, display) = match (base, compare) {
        (Some(b), Some(c)) => {
            let (abs, rel) = relative_change(b, c);
            let display = match (rel, xl) {
                (None, _) => format!("{abs:+.3} (undefined)"),
                (Some(r), false) => format!("{abs:+.3} ({r:+.1}%)"),
                (Some(r), true) => {
                    let side = if r < 0.0 {
                        "favors tau=1"
                    } else if r > 0.0 {
                        "favors tau=3"
                    } else {
                        "no change"
                    };
                    format!("{r:+.1}% ({side})")
                }
            };
            (Some(abs), rel, display)
        }
        _ => (None, None, "n/a".to_string()),
    };
    DeltaRow {
        table: table.into(),
        row,
        column,
        base,
        compare,
        abs_change,
        rel_change_pct,
        display,
    }
}

/// Derived tables: mixture vs target-only at each tau, and cross-lingual
/// tau=1 → tau=3 relative change.
pub fn compute_deltas(use_case: UseCase, cells: &[CellResult]) -> Vec<DeltaRow> {
    let value = |langs: &str, tau: u8| {
        cells
            .iter()
            .find(|c| c.key.languages == langs && c.key.tau == Some(tau))
            .and_then(|c| c.value)
    };
    let mut out = Vec::new();
    match use_case {
        UseCase::Monolingual => {}
        UseCase::Mixture => {
            for c in cells {
                let (Some(tau), Some((target, add))) = (c.key.tau, c.key.languages.split_once('+')) else {
                    continue;
                };
                out.push(delta_row(
                    "mixture",
                    target.to_string(),
                    format!("+{add} tau={tau}"),
                    value(target, tau),
                    c.value,
                    false,
                ));
            }
        }
        UseCase::Crosslingual => {
            let pairs: BTreeSet<&str> = cells
                .iter()
                .filter(|c| c.key.tau.is_some())
                .map(|c| c.key.languages.as_str())
                .collect();
            for pair in pairs {
                let Some((q, c)) = pair.split_once('>') else { continue };
                if cells.iter().any(|x| x.key.languages == pair && x.key.tau == Some(1))
                    && cells.iter().any(|x| x.key.languages == pair && x.key.tau == Some(3))
                {
                    out.push(delta_row("crosslingual", q.into(), c.into(), value(pair, 1), value(pair, 3), true));
                }
            }
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn cells_csv(cells: &[CellResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(["use_case", "languages", "tau", "size", "annotator", "metric", "value", "status"])
        .map_err(csv_err)?;
    for c in cells {
        w.write_record([
            c.key.use_case.name().to_string(),
            c.key.languages.clone(),
            c.key.tau.map_or("baseline".into(), |t| t.to_string()),
            c.key.size.map_or(String::new(), |s| s.to_string()),
            c.key.annotator.clone(),
            c.metric.clone(),
            fmt_opt(c.value),
            c.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn deltas_csv(deltas: &[DeltaRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(["table", "row", "column", "base", "compare", "abs_change", "rel_change_pct", "display"])
        .map_err(csv_err)?;
    for d in deltas {
        w.write_record([
            d.table.clone(),
            d.row.clone(),
            d.column.clone(),
            fmt_opt(d.base),
            fmt_opt(d.compare),
            fmt_opt(d.abs_change),
            fmt_opt(d.rel_change_pct),
            d.display.clone(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// SVG files for the report, by file name.
pub fn render_svgs(report: &SweepReport) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let cells = &report.cells;
    match report.config.use_case {
        UseCase::Monolingual => {
            let langs: BTreeSet<&str> = cells.iter().map(|c| c.key.languages.as_str()).collect();
            let panels: Vec<svg::Panel> = langs
                .into_iter()
                .map(|lang| {
                    let of_lang = cells.iter().filter(|c| c.key.languages == lang);
                    let mut by_tau: BTreeMap<u8, Vec<(f64, f64)>> = BTreeMap::new();
                    let mut reference = None;
                    for c in of_lang {
                        match (c.key.tau, c.value) {
                            (None, Some(v)) => reference = Some(("baseline".to_string(), v)),
                            (Some(t), Some(v)) => by_tau
                                .entry(t)
                                .or_default()
                                .push((c.key.size.unwrap_or(0) as f64, v)),
                            _ => {}
                        }
                    }
                    svg::Panel {
                        title: lang.to_string(),
                        series: by_tau
                            .into_iter()
                            .map(|(t, points)| svg::Series {
                                label: format!("tau={t}"),
                                points,
                            })
                            .collect(),
                        reference,
                    }
                })
                .collect();
            out.insert(
                "size_curves.svg".into(),
                svg::line_panels(
                    &format!("{} by training size", report.provenance.metric),
                    "training instances",
                    &report.provenance.metric,
                    &panels,
                ),
            );
        }
        UseCase::Mixture | UseCase::Crosslingual => {
            let rows: BTreeSet<&str> = report.deltas.iter().map(|d| d.row.as_str()).collect();
            let cols: BTreeSet<&str> = report.deltas.iter().map(|d| d.column.as_str()).collect();
            let rows: Vec<String> = rows.into_iter().map(String::from).collect();
            let cols: Vec<String> = cols.into_iter().map(String::from).collect();
            let values: Vec<Vec<Option<f64>>> = rows
                .iter()
                .map(|r| {
                    cols.iter()
                        .map(|c| {
                            report
                                .deltas
                                .iter()
                                .find(|d| &d.row == r && &d.column == c)
                                .and_then(|d| d.rel_change_pct)
                        })
                        .collect()
                })
                .collect();
            let (name, title) = if report.config.use_case == UseCase::Mixture {
                ("mixture_deltas.svg", "relative change vs target-only training (%)")
            } else {
                ("crosslingual_delta.svg", "relative change tau=1 -> tau=3 (%), rows: query, columns: corpus")
            };
            out.insert(name.into(), svg::heatmap(title, &rows, &cols, &values, |v| format!("{v:+.1}%")));
        }
    }
    out
}

/// Write cells.csv, deltas.csv, provenance.json, report.json and SVGs.
pub fn write_bundle(report: &SweepReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("cells.csv"), &cells_csv(&report.cells)?)?;
    write_text(&dir.join("deltas.csv"), &deltas_csv(&report.deltas)?)?;
    write_json(&dir.join("provenance.json"), &report.provenance)?;
    write_json(&dir.join("report.json"), report)?;
    for (name, body) in render_svgs(report) {
        write_text(&dir.join(name), &body)?;
    }
    Ok(())
}

/// Re-render a bundle from its report.json without recomputing any cell.
pub fn rerender_bundle(dir: &Path) -> Result<SweepReport> {
    let report: SweepReport = read_json(&dir.join("report.json"))?;
    write_bundle(&report, dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(langs: &str, tau: Option<u8>, value: Option<f64>) -> CellResult {
        CellResult {
            key: CellKey {
                use_case: UseCase::Mixture,
                languages: langs.into(),
                tau,
                size: Some(10),
                annotator: "a".into(),
            },
            metric: "ndcg@10".into(),
            value,
            status: "ok".into(),
            queries: 1,
            zero_idcg: 0,
            positives: None,
        }
    }

    #[test]
    fn mixture_delta_format_and_recomputation() {
        let cells = vec![cell("fi", Some(1), Some(0.75)), cell("fi+ru", Some(1), Some(0.806))];
        let d = compute_deltas(UseCase::Mixture, &cells);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].display, "+0.056 (+7.5%)");
        let pct = 100.0 * (0.806 - 0.75) / 0.75;
        assert!((d[0].rel_change_pct.unwrap() - pct).abs() < 1e-9);
    }

    #[test]
    fn self_delta_is_zero_and_tiny_base_undefined() {
        let (abs, rel) = relative_change(0.5, 0.5);
        assert_eq!((abs, rel), (0.0, Some(0.0)));
        assert_eq!(relative_change(1e-12, 0.3).1, None);
        let cells = vec![cell("fi", Some(2), Some(0.0)), cell("fi+ru", Some(2), Some(0.2))];
        assert_eq!(compute_deltas(UseCase::Mixture, &cells)[0].display, "+0.200 (undefined)");
    }

    #[test]
    fn crosslingual_sign_classification() {
        let mut cells = vec![
            cell("fi>ru", Some(1), Some(0.5)),
            cell("fi>ru", Some(3), Some(0.4)),
            cell("fi>fi", Some(1), Some(0.5)),
            cell("fi>fi", Some(3), Some(0.5)),
        ];
        for c in &mut cells {
            c.key.use_case = UseCase::Crosslingual;
        }
        let d = compute_deltas(UseCase::Crosslingual, &cells);
        assert_eq!(d.len(), 2);
        let ru = d.iter().find(|r| r.column == "ru").unwrap();
        assert!((ru.rel_change_pct.unwrap() + 20.0).abs() < 1e-9);
        assert!(ru.display.contains("favors tau=1"));
        let fi = d.iter().find(|r| r.column == "fi").unwrap();
        assert_eq!(fi.rel_change_pct, Some(0.0));
    }

    #[test]
    fn keys_order_baseline_first() {
        let mut cells = [cell("fi", Some(1), None), cell("fi", None, None)];
        cells.sort_by(|a, b| a.key.cmp(&b.key));
        assert_eq!(cells[0].key.tau, None);
        assert_ne!(cells[0].key.seed(1), cells[1].key.seed(1));
    }

    #[test]
    fn csv_quotes_status() {
        let mut c = cell("fi", Some(1), None);
        c.status = "failed: a, b".into();
        let s = cells_csv(&[c]).unwrap();
        assert!(s.contains("\"failed: a, b\""));
        assert!(s.starts_with("use_case,languages,tau,size,annotator,metric,value,status\n"));
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_err());
        let ok = SweepConfig {
            languages: vec!["fi".into()],
            ..SweepConfig::default()
        };
        ok.validate().unwrap();
        let mix = SweepConfig {
            use_case: UseCase::Mixture,
            mixtures: vec![MixtureCell {
                target: "fi".into(),
                additional: Some("fi".into()),
            }],
            ..SweepConfig::default()
        };
        assert!(mix.validate().is_err());
    }
}

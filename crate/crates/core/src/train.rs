//! Mini-batch training of the dual encoder on a contrastive set.

use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::binarize::ContrastiveSet;
use crate::encoder::{info_nce_loss, Batch, EncoderParams, FeatureHasher, SparseVec, TrainingPair};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// linear warm-up, then linear decay to zero
    LinearDecay,
    /// linear warm-up, then constant
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub schedule: LrSchedule,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub temperature: f64,
    pub dim: usize,
    pub hasher: FeatureHasher,
    /// Labeled negatives appended to each query's candidate row; 0 leaves
    /// only in-batch negatives.
    pub labeled_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 2,
            batch_size: 32,
            learning_rate: 2.0,
            warmup_ratio: 0.05,
            schedule: LrSchedule::LinearDecay,
            optimizer: Optimizer::Sgd,
            momentum: 0.9,
            temperature: 0.05,
            dim: 64,
            hasher: FeatureHasher::default(),
            labeled_negatives: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must lie in [0, 1], got {}", self.warmup_ratio));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        self.hasher.validate()
    }

    /// Freshly initialized parameters for this configuration.
    pub fn init_params<F: Scalar>(&self) -> Result<EncoderParams<F>> {
        EncoderParams::init(self.hasher.clone(), self.dim, F::of(self.temperature), self.seed)
    }

    /// Learning rate at `step` of `total` steps.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        let warmup = (self.warmup_ratio * total as f64).ceil() as usize;
        if step < warmup {
            return self.learning_rate * (step + 1) as f64 / warmup as f64;
        }
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::LinearDecay => {
                self.learning_rate * (total - step) as f64 / (total - warmup) as f64
            }
        }
    }
}

/// Query and passage texts by id.
#[derive(Debug, Clone, Default)]
pub struct Texts {
    pub queries: HashMap<String, String>,
    pub passages: HashMap<String, String>,
}

impl Texts {
    pub fn from_dataset(d: &Dataset) -> Self {
        Texts {
            queries: d.queries.iter().map(|q| (q.id.clone(), q.text.clone())).collect(),
            passages: d.passages.iter().map(|p| (p.id.clone(), p.text.clone())).collect(),
        }
    }

    fn query(&self, id: &str) -> Result<&str> {
        self.queries
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidConfig(format!("no text for query {id}")))
    }

    fn passage(&self, id: &str) -> Result<&str> {
        self.passages
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidConfig(format!("no text for passage {id}")))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub params: EncoderParams<F>,
    /// Mean batch loss at every step.
    pub loss_trace: Vec<f64>,
    pub epoch_mean_loss: Vec<f64>,
    pub steps: usize,
}

/// Train from `params` over the positive pairs of `set`.
///
/// Each epoch shuffles the positives with a seeded permutation and walks
/// them in batches; a trailing batch of one pair is dropped. Within a batch
/// a positive is masked out of another row when both rows share the query
/// or the passage, since it would not be a true negative there.
pub fn train<F: Scalar>(
    params: &EncoderParams<F>,
    set: &ContrastiveSet,
    texts: &Texts,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let n = set.positives.len();
    if n < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "{n} positive pairs at tau={} cannot fill one batch of {}; \
             use a smaller batch size or a lower tau",
            set.tau.value(),
            cfg.batch_size
        )));
    }

    let hasher = params.hasher();
    let mut q_feat: HashMap<&str, SparseVec> = HashMap::new();
    let mut p_feat: HashMap<&str, SparseVec> = HashMap::new();
    for pair in &set.positives {
        if !q_feat.contains_key(pair.query_id.as_str()) {
            q_feat.insert(&pair.query_id, hasher.featurize(texts.query(&pair.query_id)?));
        }
        if !p_feat.contains_key(pair.passage_id.as_str()) {
            p_feat.insert(&pair.passage_id, hasher.featurize(texts.passage(&pair.passage_id)?));
        }
    }
    let negatives: BTreeMap<&str, Vec<&str>> = if cfg.labeled_negatives > 0 {
        set.negatives_by_query()
    } else {
        BTreeMap::new()
    };
    for pid in negatives.values().flatten() {
        if !p_feat.contains_key(pid) {
            p_feat.insert(pid, hasher.featurize(texts.passage(pid)?));
        }
    }

    let per_epoch = n / cfg.batch_size + usize::from(n % cfg.batch_size >= 2);
    let total = per_epoch * cfg.epochs;
    let mut out = params.clone();
    let mut velocity: Vec<F> = match cfg.optimizer {
        Optimizer::Momentum => vec![F::zero(); out.dim() * out.num_buckets()],
        Optimizer::Sgd => Vec::new(),
    };
    let mut loss_trace = Vec::with_capacity(total);
    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(cfg.seed, &format!("train/epoch/{epoch}")));
        let mut neg_rng = seed::rng(cfg.seed, &format!("train/negatives/{epoch}"));
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let members: Vec<_> = chunk.iter().map(|&i| &set.positives[i]).collect();
            let pairs = members
                .iter()
                .map(|m| TrainingPair {
                    query: q_feat[m.query_id.as_str()].clone(),
                    positive: p_feat[m.passage_id.as_str()].clone(),
                    negatives: negatives
                        .get(m.query_id.as_str())
                        .map(|pool| {
                            pool.choose_multiple(&mut neg_rng, cfg.labeled_negatives)
                                .map(|pid| p_feat[pid].clone())
                                .collect()
                        })
                        .unwrap_or_default(),
                })
                .collect();
            let mut masked = Vec::new();
            for (i, a) in members.iter().enumerate() {
                for (j, b) in members.iter().enumerate() {
                    if i != j && (a.query_id == b.query_id || a.passage_id == b.passage_id) {
                        masked.push((i, j));
                    }
                }
            }
            let batch = Batch::with_mask(pairs, masked)?;
            let (loss, grad) = info_nce_loss(&out, &batch)?;
            let lr = F::of(cfg.learning_rate_at(step, total));
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (col, g) in grad.columns() {
                        for (w, &gv) in out.column_mut(col).iter_mut().zip(g) {
                            *w -= lr * gv;
                        }
                    }
                }
                Optimizer::Momentum => {
                    let beta = F::of(cfg.momentum);
                    for v in velocity.iter_mut() {
                        *v *= beta;
                    }
                    let dim = out.dim();
                    for (col, g) in grad.columns() {
                        for (v, &gv) in velocity[col * dim..(col + 1) * dim].iter_mut().zip(g) {
                            *v += gv;
                        }
                    }
                    for (w, &v) in out.raw_mut().iter_mut().zip(&velocity) {
                        *w -= lr * v;
                    }
                }
            }
            let loss = loss.as_f64();
            loss_trace.push(loss);
            epoch_loss += loss;
            epoch_steps += 1;
            step += 1;
        }
        epoch_mean_loss.push(epoch_loss / epoch_steps.max(1) as f64);
        log::debug!("epoch {epoch}: mean loss {:.4}", epoch_mean_loss[epoch]);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite { row: 0 });
    }
    Ok(TrainOutcome {
        params: out,
        loss_trace,
        epoch_mean_loss,
        steps: step,
    })
}

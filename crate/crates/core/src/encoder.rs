//! Hashed character n-gram features, a linear projection to unit-norm
//! embeddings, and the InfoNCE objective with its analytic gradient.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    /// Build from unordered `(index, value)` pairs; duplicates are summed.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<u32> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|&(_, v)| v != 0.0).unzip();
        SparseVec { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn scaled(&self, c: f64) -> SparseVec {
        SparseVec {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&i| i as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureHasher {
    pub n_gram_sizes: Vec<usize>,
    /// Number of hash buckets; a power of two.
    pub num_buckets: usize,
    pub hash_seed: u64,
    /// Multiply each feature by a hashed ±1 sign.
    pub signed: bool,
}

impl Default for FeatureHasher {
    fn default() -> Self {
        FeatureHasher {
            n_gram_sizes: vec![2, 3, 4],
            num_buckets: 1 << 15,
            hash_seed: 0,
            signed: true,
        }
    }
}

impl FeatureHasher {
    pub fn validate(&self) -> Result<()> {
        if self.n_gram_sizes.is_empty() || self.n_gram_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "n-gram sizes must be non-empty and positive, got {:?}",
                self.n_gram_sizes
            )));
        }
        if !self.num_buckets.is_power_of_two() || self.num_buckets < 2 || self.num_buckets > 1 << 31 {
            return Err(Error::InvalidConfig(format!(
                "num_buckets must be a power of two in 2..=2^31, got {}",
                self.num_buckets
            )));
        }
        Ok(())
    }

    /// Count every character n-gram of the configured sizes into its bucket.
    pub fn featurize(&self, text: &str) -> SparseVec {
        let chars: Vec<char> = text.chars().collect();
        let mask = (self.num_buckets - 1) as u64;
        let mut pairs = Vec::with_capacity(chars.len() * self.n_gram_sizes.len());
        let mut buf = [0u8; 4];
        for &n in &self.n_gram_sizes {
            let start = seed::mix64(self.hash_seed ^ n as u64);
            for window in chars.windows(n) {
                let h = seed::mix64(window.iter().fold(start, |h, c| {
                    seed::fnv1a(h, c.encode_utf8(&mut buf).as_bytes())
                }));
                let sign = if self.signed && h >> 63 == 1 { -1.0 } else { 1.0 };
                pairs.push(((h & mask) as u32, sign));
            }
        }
        SparseVec::from_pairs(pairs)
    }
}

/// Linear dual encoder: one projection `W` (d × D) shared by queries and
/// passages, followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<F> {
    hasher: FeatureHasher,
    dim: usize,
    temperature: F,
    /// column-major: bucket `k` occupies `w[k*dim .. (k+1)*dim]`
    w: Vec<F>,
}

impl<F: Scalar> EncoderParams<F> {
    fn check(hasher: &FeatureHasher, dim: usize, temperature: F) -> Result<()> {
        hasher.validate()?;
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        if !(temperature > F::zero()) || !temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive and finite, got {temperature}"
            )));
        }
        Ok(())
    }

    /// Gaussian initialization with standard deviation `1/sqrt(dim)`.
    pub fn init(hasher: FeatureHasher, dim: usize, temperature: F, seed: u64) -> Result<Self> {
        Self::check(&hasher, dim, temperature)?;
        let mut rng = seed::rng(seed, "encoder/init");
        let scale = 1.0 / (dim as f64).sqrt();
        let w = (0..dim * hasher.num_buckets)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                F::of(z * scale)
            })
            .collect();
        Ok(EncoderParams {
            hasher,
            dim,
            temperature,
            w,
        })
    }

    /// Build from a row-major `dim × num_buckets` weight matrix.
    pub fn from_row_major(hasher: FeatureHasher, dim: usize, temperature: F, weights: &[F]) -> Result<Self> {
        Self::check(&hasher, dim, temperature)?;
        let d_in = hasher.num_buckets;
        if weights.len() != dim * d_in {
            return Err(Error::InvalidConfig(format!(
                "expected {} weights for a {dim}x{d_in} matrix, got {}",
                dim * d_in,
                weights.len()
            )));
        }
        if let Some(pos) = weights.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight ({}, {}) is not finite",
                pos / d_in,
                pos % d_in
            )));
        }
        let mut w = vec![F::zero(); weights.len()];
        for r in 0..dim {
            for c in 0..d_in {
                w[c * dim + r] = weights[r * d_in + c];
            }
        }
        Ok(EncoderParams {
            hasher,
            dim,
            temperature,
            w,
        })
    }

    pub fn to_row_major(&self) -> Vec<F> {
        let d_in = self.num_buckets();
        let mut out = vec![F::zero(); self.w.len()];
        for c in 0..d_in {
            for r in 0..self.dim {
                out[r * d_in + c] = self.w[c * self.dim + r];
            }
        }
        out
    }

    pub fn hasher(&self) -> &FeatureHasher {
        &self.hasher
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_buckets(&self) -> usize {
        self.hasher.num_buckets
    }

    pub fn temperature(&self) -> F {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: F) -> Result<Self> {
        Self::check(&self.hasher, self.dim, temperature)?;
        self.temperature = temperature;
        Ok(self)
    }

    pub fn weight(&self, row: usize, col: usize) -> F {
        self.w[col * self.dim + row]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: F) {
        self.w[col * self.dim + row] = value;
    }

    pub fn column(&self, col: usize) -> &[F] {
        &self.w[col * self.dim..(col + 1) * self.dim]
    }

    pub(crate) fn column_mut(&mut self, col: usize) -> &mut [F] {
        &mut self.w[col * self.dim..(col + 1) * self.dim]
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [F] {
        &mut self.w
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    /// `W·x`, not normalized.
    pub fn project(&self, x: &SparseVec) -> Vec<F> {
        let mut u = vec![F::zero(); self.dim];
        for (k, v) in x.iter() {
            let v = F::of(v);
            for (acc, &w) in u.iter_mut().zip(self.column(k)) {
                *acc += w * v;
            }
        }
        u
    }

    /// Unit-norm embedding and the norm of the raw projection.
    pub fn embed_with_norm(&self, x: &SparseVec) -> Result<(Vec<F>, F)> {
        if let Some(max) = x.max_index() {
            if max >= self.num_buckets() {
                return Err(Error::InvalidConfig(format!(
                    "feature index {max} outside {} buckets",
                    self.num_buckets()
                )));
            }
        }
        let mut u = self.project(x);
        let norm = dot(&u, &u).sqrt();
        if !(norm.as_f64() >= 1e-12) {
            return Err(Error::DegenerateProjection(norm.as_f64()));
        }
        for v in &mut u {
            *v /= norm;
        }
        Ok((u, norm))
    }

    pub fn embed(&self, x: &SparseVec) -> Result<Vec<F>> {
        self.embed_with_norm(x).map(|(e, _)| e)
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<F>> {
        self.embed(&self.hasher.featurize(text))
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Gradient with respect to `W`, stored only for the touched columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<F> {
    dim: usize,
    num_buckets: usize,
    slot: HashMap<u32, usize>,
    cols: Vec<u32>,
    data: Vec<F>,
}

impl<F: Scalar> Gradient<F> {
    fn new(dim: usize, num_buckets: usize) -> Self {
        Gradient {
            dim,
            num_buckets,
            slot: HashMap::new(),
            cols: Vec::new(),
            data: Vec::new(),
        }
    }

    fn column_mut(&mut self, col: usize) -> &mut [F] {
        let dim = self.dim;
        let s = *self.slot.entry(col as u32).or_insert_with(|| {
            self.cols.push(col as u32);
            self.data.extend(std::iter::repeat_n(F::zero(), dim));
            self.cols.len() - 1
        });
        &mut self.data[s * dim..(s + 1) * dim]
    }

    /// `W`-gradient contribution of one embedded vector: `dL/du ⊗ x`.
    fn accumulate(&mut self, du: &[F], x: &SparseVec) {
        for (k, v) in x.iter() {
            let v = F::of(v);
            for (g, &d) in self.column_mut(k).iter_mut().zip(du) {
                *g += d * v;
            }
        }
    }

    /// Touched columns in ascending order with their `dim` entries.
    pub fn columns(&self) -> Vec<(usize, &[F])> {
        let mut out: Vec<(usize, &[F])> = self
            .cols
            .iter()
            .enumerate()
            .map(|(s, &c)| (c as usize, &self.data[s * self.dim..(s + 1) * self.dim]))
            .collect();
        out.sort_by_key(|c| c.0);
        out
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        match self.slot.get(&(col as u32)) {
            Some(&s) => self.data[s * self.dim + row],
            None => F::zero(),
        }
    }

    /// Row-major `dim × num_buckets` dense copy.
    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim * self.num_buckets];
        for (c, col) in self.columns() {
            for (r, &g) in col.iter().enumerate() {
                out[r * self.num_buckets + c] = g;
            }
        }
        out
    }

    pub fn norm(&self) -> F {
        self.data.iter().map(|&g| g * g).sum::<F>().sqrt()
    }
}

/// One query with its positive passage and optional labeled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub query: SparseVec,
    pub positive: SparseVec,
    pub negatives: Vec<SparseVec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub pairs: Vec<TrainingPair>,
    /// `(i, j)` with `i != j`: positive `j` is left out of row `i`, used when
    /// it is not a true negative for query `i` (same query or same passage).
    pub masked: Vec<(usize, usize)>,
}

impl Batch {
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self> {
        Self::with_mask(pairs, Vec::new())
    }

    pub fn with_mask(pairs: Vec<TrainingPair>, masked: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a batch needs at least 2 pairs for in-batch negatives, got {}",
                pairs.len()
            )));
        }
        let b = pairs.len();
        if let Some(&(i, j)) = masked.iter().find(|&&(i, j)| i == j || i >= b || j >= b) {
            return Err(Error::InvalidConfig(format!("invalid mask entry ({i}, {j})")));
        }
        Ok(Batch { pairs, masked })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

struct Embedded<'a, F> {
    x: &'a SparseVec,
    e: Vec<F>,
    norm: F,
    grad: Vec<F>,
}

impl<'a, F: Scalar> Embedded<'a, F> {
    fn new(params: &EncoderParams<F>, x: &'a SparseVec) -> Result<Self> {
        let (e, norm) = params.embed_with_norm(x)?;
        Ok(Embedded {
            x,
            grad: vec![F::zero(); e.len()],
            e,
            norm,
        })
    }

    /// Back-propagate `dL/de` through `e = u/‖u‖` and `u = W·x`.
    fn backward(&self, out: &mut Gradient<F>) {
        let ge = dot(&self.grad, &self.e);
        let du: Vec<F> = self
            .grad
            .iter()
            .zip(&self.e)
            .map(|(&g, &e)| (g - ge * e) / self.norm)
            .collect();
        out.accumulate(&du, self.x);
    }
}

/// InfoNCE over cosine similarities scaled by `1/T`.
///
/// Row `i` scores query `i` against every in-batch positive (minus masked
/// ones) and its own labeled negatives; the target is positive `i`.
pub fn info_nce_loss<F: Scalar>(params: &EncoderParams<F>, batch: &Batch) -> Result<(F, Gradient<F>)> {
    if batch.len() < 2 {
        return Err(Error::InvalidConfig("batch needs at least 2 pairs".into()));
    }
    let b = batch.len();
    let inv_t = F::one() / params.temperature();
    let inv_b = F::one() / F::of(b as f64);
    let mut queries = Vec::with_capacity(b);
    let mut positives = Vec::with_capacity(b);
    let mut negatives = Vec::with_capacity(b);
    for p in &batch.pairs {
        queries.push(Embedded::new(params, &p.query)?);
        positives.push(Embedded::new(params, &p.positive)?);
        negatives.push(
            p.negatives
                .iter()
                .map(|n| Embedded::new(params, n))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut masked = vec![false; b * b];
    for &(i, j) in &batch.masked {
        masked[i * b + j] = true;
    }

    let mut loss = F::zero();
    // per row: (candidate, dL/ds · 1/T); candidate c < b is positive c,
    // otherwise negative c - b of that row
    let mut coeffs: Vec<Vec<(usize, F)>> = Vec::with_capacity(b);
    for i in 0..b {
        let cands: Vec<usize> = (0..b)
            .filter(|&j| !masked[i * b + j])
            .chain(b..b + negatives[i].len())
            .collect();
        let q = &queries[i].e;
        let logits: Vec<F> = cands
            .iter()
            .map(|&c| {
                let e = if c < b { &positives[c].e } else { &negatives[i][c - b].e };
                dot(q, e) * inv_t
            })
            .collect();
        let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = logits.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        let target = cands.iter().position(|&c| c == i).expect("diagonal is never masked");
        let row_loss = lse - logits[target];
        if !row_loss.is_finite() {
            return Err(Error::NonFinite { row: i });
        }
        loss += row_loss;
        coeffs.push(
            cands
                .iter()
                .zip(&logits)
                .enumerate()
                .map(|(k, (&c, &l))| {
                    let p = (l - lse).exp();
                    let d = if k == target { p - F::one() } else { p };
                    (c, d * inv_b * inv_t)
                })
                .collect(),
        );
    }

    for (i, row) in coeffs.iter().enumerate() {
        for &(c, a) in row {
            let e = if c < b { &positives[c].e } else { &negatives[i][c - b].e };
            for (g, &v) in queries[i].grad.iter_mut().zip(e) {
                *g += a * v;
            }
        }
    }
    for (i, row) in coeffs.iter().enumerate() {
        let q = &queries[i].e;
        for &(c, a) in row {
            let target = if c < b { &mut positives[c] } else { &mut negatives[i][c - b] };
            for (g, &v) in target.grad.iter_mut().zip(q) {
                *g += a * v;
            }
        }
    }

    let mut grad = Gradient::new(params.dim(), params.num_buckets());
    for v in queries.iter().chain(&positives).chain(negatives.iter().flatten()) {
        v.backward(&mut grad);
    }
    Ok((loss * inv_b, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hasher() -> FeatureHasher {
        FeatureHasher {
            num_buckets: 64,
            ..FeatureHasher::default()
        }
    }

    #[test]
    fn featurize_is_deterministic_and_bounded() {
        let h = FeatureHasher::default();
        for text in ["", "a", "ab", "hello world", "Тестовый текст", "かきくけこ"] {
            let x = h.featurize(text);
            assert_eq!(x, h.featurize(text));
            assert!(x.nnz() <= text.chars().count() * 3);
            assert!(x.iter().all(|(k, _)| k < h.num_buckets));
        }
        assert!(h.featurize("a").is_empty());
        assert_ne!(
            h.featurize("abc"),
            FeatureHasher {
                hash_seed: 9,
                ..h.clone()
            }
            .featurize("abc")
        );
    }

    #[test]
    fn unsigned_counts_ngrams() {
        let h = FeatureHasher {
            n_gram_sizes: vec![2],
            signed: false,
            ..FeatureHasher::default()
        };
        let x = h.featurize("abab");
        // "ab" twice, "ba" once
        let total: f64 = x.iter().map(|(_, v)| v).sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn sparse_merges_and_drops_zeros() {
        let x = SparseVec::from_pairs(vec![(5, 1.0), (2, 1.0), (5, -1.0), (2, 2.0)]);
        assert_eq!(x.iter().collect::<Vec<_>>(), vec![(2, 3.0)]);
    }

    #[test]
    fn rejects_bad_hasher_and_params() {
        let bad = FeatureHasher {
            num_buckets: 100,
            ..FeatureHasher::default()
        };
        assert!(bad.validate().is_err());
        assert!(EncoderParams::<f64>::init(small_hasher(), 0, 0.05, 1).is_err());
        assert!(EncoderParams::<f64>::init(small_hasher(), 4, 0.0, 1).is_err());
    }

    #[test]
    fn embed_contract() {
        let p = EncoderParams::<f64>::init(small_hasher(), 8, 0.05, 3).unwrap();
        let x = p.hasher().featurize("some passage text");
        let e = p.embed(&x).unwrap();
        assert!((dot(&e, &e).sqrt() - 1.0).abs() < 1e-9);
        assert_eq!(e, p.embed_text("some passage text").unwrap());
        let scaled = p.embed(&x.scaled(7.5)).unwrap();
        for (a, b) in e.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_projection_errors() {
        let zero = EncoderParams::<f64>::from_row_major(small_hasher(), 2, 0.05, &[0.0; 128]).unwrap();
        let x = zero.hasher().featurize("abc");
        assert!(matches!(zero.embed(&x), Err(Error::DegenerateProjection(_))));
        assert!(matches!(zero.embed(&SparseVec::default()), Err(Error::DegenerateProjection(_))));
    }

    #[test]
    fn row_major_round_trip() {
        let p = EncoderParams::<f64>::init(small_hasher(), 3, 0.05, 1).unwrap();
        let q = EncoderParams::from_row_major(small_hasher(), 3, 0.05, &p.to_row_major()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.to_row_major()[64 + 5], p.weight(1, 5));
    }

    #[test]
    fn uniform_two_way_softmax_gives_ln2() {
        // embeddings are one-hot on the first two dims; each query sits
        // halfway between both positives
        let h = small_hasher();
        let mut w = vec![0.0; 2 * 64];
        w[0] = 1.0; // row 0, col 0
        w[64 + 1] = 1.0; // row 1, col 1
        let p = EncoderParams::<f64>::from_row_major(h, 2, 0.05, &w).unwrap();
        let v = |pairs: Vec<(u32, f64)>| SparseVec::from_pairs(pairs);
        let pair = |q| TrainingPair {
            query: q,
            positive: v(vec![]),
            negatives: vec![],
        };
        let mut a = pair(v(vec![(0, 1.0), (1, 1.0)]));
        a.positive = v(vec![(0, 1.0)]);
        let mut b = pair(v(vec![(0, 1.0), (1, 1.0)]));
        b.positive = v(vec![(1, 1.0)]);
        let (loss, _) = info_nce_loss(&p, &Batch::new(vec![a, b]).unwrap()).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn batch_needs_two_pairs() {
        let x = SparseVec::from_pairs(vec![(1, 1.0)]);
        let one = TrainingPair {
            query: x.clone(),
            positive: x,
            negatives: vec![],
        };
        assert!(Batch::new(vec![one.clone()]).is_err());
        assert!(Batch::with_mask(vec![one.clone(), one], vec![(0, 0)]).is_err());
    }
}

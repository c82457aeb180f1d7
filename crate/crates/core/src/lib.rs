//! Graded relevance to contrastive training data: synthetic corpora,
//! sampling, threshold binarization, annotator agreement, a hashed n-gram
//! dual encoder, exact retrieval, nDCG and experiment sweeps.

// `!(x > 0)` is how NaN-rejecting guards are written here on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod annotator;
pub mod binarize;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod retrieval;
pub mod sampling;
pub mod scalar;
pub mod seed;
pub mod svg;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Numeric code is generic over `f32`/`f64`; these fix the default precision.
pub type Encoder = encoder::EncoderParams<f64>;
pub type Encoder32 = encoder::EncoderParams<f32>;
pub type Index = retrieval::PassageIndex<f64>;
pub type Run = metrics::RunResult<f64>;
pub type Metric = metrics::MetricReport<f64>;
pub type TrainResult = train::TrainOutcome<f64>;

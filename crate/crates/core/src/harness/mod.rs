//! End-to-end pipeline, evaluation, significance testing and latency
//! measurement.

mod bench;
mod metrics;
mod pipeline;
mod wilcoxon;

use thiserror::Error;

use crate::encoders::EncoderError;
use crate::features::FeatureError;
use crate::fusion::FusionError;
use crate::gate::GateError;
use crate::retrieval::StoreError;

pub use bench::{bench_latency, percentile, BenchContext, BenchReport};
pub use metrics::{evaluate, spearman, EvalReport};
pub use pipeline::{
    build_gate_samples, fit_gate_normalizer, predict, run_pipeline, train_gate, Components, Prediction, RunConfig,
};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("query {0} has no label")]
    UnlabeledQuery(usize),
    #[error("need at least 5 non-zero differences, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences are zero")]
    AllZeroDifferences,
    #[error("no queries to benchmark")]
    NoQueries,
    #[error("catalog mismatch between database and queries")]
    CatalogMismatch,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

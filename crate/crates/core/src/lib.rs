//! Retrieval-augmented activity recognition over multichannel inertial windows.
//!
//! The crate covers the whole offline/online loop:
//!
//! - [`signal`]: windows, datasets, CSV ingest, resampling, few-shot subsets and
//!   synthetic data.
//! - [`features`]: the physics-informed feature vector consumed by the gate.
//! - [`encoders`]: signal and label embeddings, PCA projection.
//! - [`retrieval`]: the frozen key-value knowledge base, exact and IVF top-k
//!   search, raw-series similarity baselines and the binary file format.
//! - [`fusion`]: retrieval distributions, base models and static fusion.
//! - [`gate`]: the uncertainty-adaptive gating network and its trainer.
//! - [`harness`]: end-to-end pipeline, metrics, significance testing and
//!   latency measurement.
//!
//! Batch work (database encoding, k-means assignment, query batches) runs on
//! rayon when the `parallel` feature is enabled and falls back to plain
//! iterators otherwise. Both paths return identical results.

pub mod encoders;
pub mod error;
pub mod features;
pub mod fusion;
pub mod gate;
pub mod harness;
pub mod par;
pub mod retrieval;
pub mod signal;

pub use error::{Error, Result};

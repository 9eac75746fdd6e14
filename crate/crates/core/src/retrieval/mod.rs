//! The frozen key-value knowledge base and top-k retrieval over it.

mod ivf;
pub(crate) mod persist;
mod series;

use std::sync::atomic::{AtomicBool, Ordering};

use thiserror::Error;

use crate::encoders::{Embedding, EncoderError, SignalEncoder};
use crate::par::{self, ExecMode};
use crate::signal::{ClassCatalog, LabeledDataset};

pub use ivf::{knn_ivf, IvfIndex, IvfParams, KMEANS_MAX_ITERS};
pub use persist::{decode_database, encode_database, load_database, persist_database, DB_MAGIC, DB_VERSION};
pub use series::{ccf_best_lag, ccf_similarity, dtw_distance, dtw_multichannel, pearson_similarity, raw_series_knn, SeriesMetric};

/// Tolerance on stored embedding norms.
pub const UNIT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("window {0} has no label")]
    UnlabeledWindow(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("record {0} is not unit-norm")]
    NotUnitNorm(usize),
    #[error("label id {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("database has no IVF index")]
    IndexMissing,
    #[error("nprobe {nprobe} outside 1..={nlist}")]
    BadNprobe { nprobe: usize, nlist: usize },
    #[error("nlist must be at least 1")]
    BadNlist,
    #[error("empty series")]
    EmptySeries,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("max_lag {max_lag} must be below series length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("corrupt database: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One retrieved record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub record_id: usize,
    pub label_id: usize,
    pub similarity: f64,
}

/// Ordered: higher similarity first, then lower record id.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.record_id.cmp(&b.record_id))
}

/// Keeps the best `k` of a stream of candidates visited in ascending id order.
pub(crate) struct TopK {
    k: usize,
    items: Vec<(f32, u32)>,
}

impl TopK {
    pub(crate) fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    /// Ids must arrive in ascending order, so an equal score never displaces a
    /// kept item.
    #[inline]
    pub(crate) fn push(&mut self, sim: f32, id: u32) {
        if self.items.len() == self.k {
            if sim <= self.items[self.k - 1].0 {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&(s, _)| s >= sim);
        self.items.insert(pos, (sim, id));
    }

    pub(crate) fn into_vec(self) -> Vec<(f32, u32)> {
        self.items
    }
}

/// Inner product in f32 with eight accumulators. Every search path uses this
/// one routine, so exact and IVF scores agree bit for bit.
#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

pub(crate) fn warn_clamp(k: usize, m: usize) {
    if k > m && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("k = {k} exceeds database size {m}; clamping");
    }
}

/// Key-value store of unit embeddings and label ids, frozen after build.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    dim: usize,
    /// Row-major `len() x dim`.
    keys: Vec<f32>,
    labels: Vec<u32>,
    catalog: ClassCatalog,
    index: Option<IvfIndex>,
}

impl KnowledgeBase {
    /// Validates and wraps records. Embeddings must be unit-norm.
    pub fn from_records(records: Vec<(Embedding, usize)>, catalog: ClassCatalog) -> Result<Self, StoreError> {
        let dim = records.first().ok_or(StoreError::EmptyDataset)?.0.dim();
        let mut keys = Vec::with_capacity(records.len() * dim);
        let mut labels = Vec::with_capacity(records.len());
        for (i, (e, l)) in records.into_iter().enumerate() {
            if e.dim() != dim {
                return Err(StoreError::DimMismatch { expected: dim, got: e.dim() });
            }
            if (e.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(StoreError::NotUnitNorm(i));
            }
            if l >= catalog.len() {
                return Err(StoreError::LabelOutOfRange { label: l, classes: catalog.len() });
            }
            keys.extend_from_slice(e.as_slice());
            labels.push(l as u32);
        }
        Ok(Self { dim, keys, labels, catalog, index: None })
    }

    pub(crate) fn from_raw_parts(
        dim: usize,
        keys: Vec<f32>,
        labels: Vec<u32>,
        catalog: ClassCatalog,
        index: Option<IvfIndex>,
    ) -> Self {
        Self { dim, keys, labels, catalog, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn key(&self, id: usize) -> &[f32] {
        &self.keys[id * self.dim..(id + 1) * self.dim]
    }

    pub fn label(&self, id: usize) -> usize {
        self.labels[id] as usize
    }

    pub fn keys(&self) -> &[f32] {
        &self.keys
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn index(&self) -> Option<&IvfIndex> {
        self.index.as_ref()
    }

    /// Trains and attaches an IVF index (seeded spherical k-means).
    pub fn build_ivf(&mut self, params: IvfParams, mode: ExecMode) -> Result<(), StoreError> {
        self.index = Some(IvfIndex::build(self, params, mode)?);
        Ok(())
    }

    pub fn with_ivf(mut self, params: IvfParams, mode: ExecMode) -> Result<Self, StoreError> {
        self.build_ivf(params, mode)?;
        Ok(self)
    }

    pub(crate) fn check_query(&self, query: &[f32], k: usize) -> Result<(), StoreError> {
        if query.len() != self.dim {
            return Err(StoreError::DimMismatch { expected: self.dim, got: query.len() });
        }
        if k == 0 {
            return Err(StoreError::ZeroK);
        }
        warn_clamp(k, self.len());
        Ok(())
    }

    pub(crate) fn neighbors(&self, top: TopK) -> Vec<Neighbor> {
        top.into_vec()
            .into_iter()
            .map(|(s, id)| Neighbor { record_id: id as usize, label_id: self.labels[id as usize] as usize, similarity: s as f64 })
            .collect()
    }
}

/// One record per window, in dataset order. Encoding runs on `mode`.
pub fn build_database(
    dataset: &LabeledDataset,
    encoder: &SignalEncoder,
    mode: ExecMode,
) -> Result<KnowledgeBase, StoreError> {
    if dataset.is_empty() {
        return Err(StoreError::EmptyDataset);
    }
    if let Some(i) = dataset.windows().iter().position(|w| w.label_id().is_none()) {
        return Err(StoreError::UnlabeledWindow(i));
    }
    let records = par::try_map(mode, dataset.windows(), |i, w| {
        encoder.encode(i, w).map(|e| (e, w.label_id().unwrap_or_default()))
    })?;
    KnowledgeBase::from_records(records, dataset.catalog().clone())
}

/// Brute-force top-k by cosine similarity.
pub fn knn_exact(kb: &KnowledgeBase, query: &[f32], k: usize) -> Result<Vec<Neighbor>, StoreError> {
    kb.check_query(query, k)?;
    let mut top = TopK::new(k.min(kb.len()));
    for (id, key) in kb.keys.chunks_exact(kb.dim).enumerate() {
        top.push(dot_f32(key, query), id as u32);
    }
    Ok(kb.neighbors(top))
}

/// Retrieval engine selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchKind {
    Exact,
    Ivf { nprobe: usize },
}

impl SearchKind {
    pub fn name(&self) -> &'static str {
        match self {
            SearchKind::Exact => "exact",
            SearchKind::Ivf { .. } => "ivf",
        }
    }
}

/// Top-k with the chosen index.
pub fn search(kb: &KnowledgeBase, query: &[f32], k: usize, kind: SearchKind) -> Result<Vec<Neighbor>, StoreError> {
    match kind {
        SearchKind::Exact => knn_exact(kb, query, k),
        SearchKind::Ivf { nprobe } => knn_ivf(kb, query, k, nprobe),
    }
}

/// Runs many queries; results are in query order.
pub fn search_batch(
    kb: &KnowledgeBase,
    queries: &[Embedding],
    k: usize,
    kind: SearchKind,
    mode: ExecMode,
) -> Result<Vec<Vec<Neighbor>>, StoreError> {
    par::try_map(mode, queries, |_, q| search(kb, q.as_slice(), k, kind))
}

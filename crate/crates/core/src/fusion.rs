//! Label-space distributions: retrieval-derived, base-model, and fused.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::encoders::{embed_label, encode_statistical, Embedding, EncoderError, LabelEmbeddingTable};
use crate::retrieval::{KnowledgeBase, Neighbor};
use crate::signal::{ClassCatalog, LabeledDataset, SensorWindow};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no neighbors retrieved")]
    NoNeighbors,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("invalid probability vector: {0}")]
    InvalidDist(String),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error("probability row {0} missing or unusable")]
    RowMissing(usize),
    #[error("base model not fitted")]
    NotFitted,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Probability vector over the class catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Result<Self, FusionError> {
        if probs.is_empty() {
            return Err(FusionError::InvalidDist("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(FusionError::InvalidDist("negative or non-finite entry".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(FusionError::InvalidDist(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Rescales non-negative weights to sum to one; `None` when they sum to 0.
    pub fn normalized(weights: &[f64]) -> Option<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let sum: f64 = weights.iter().sum();
        (sum > 0.0).then(|| Self(weights.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, hot: usize) -> Self {
        let mut v = vec![0.0; classes];
        v[hot] = 1.0;
        Self(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> ProbDist {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
    let sum: f64 = exps.iter().sum();
    ProbDist(exps.into_iter().map(|e| e / sum).collect())
}

/// Natural-log entropy, with `0 log 0 = 0`.
pub fn entropy(dist: &ProbDist) -> f64 {
    -dist.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// How retrieved labels become one text distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Join all labels into one text and embed once.
    #[default]
    Combine,
    /// Embed each label, average the per-label distributions.
    Independent,
    /// As `Independent`, weighting rank `r` by `decay^r`.
    Weighted,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "combine" => Ok(Strategy::Combine),
            "independent" => Ok(Strategy::Independent),
            "weighted" => Ok(Strategy::Weighted),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Combine => "combine",
            Strategy::Independent => "independent",
            Strategy::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Weight on the base-model distribution.
    pub alpha: f64,
    pub k: usize,
    pub tau: f64,
    pub strategy: Strategy,
    pub decay: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.5, k: 5, tau: 20.0, strategy: Strategy::Combine, decay: 0.9 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FusionError::AlphaOutOfRange(self.alpha));
        }
        if self.k == 0 {
            return Err(FusionError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(FusionError::InvalidConfig(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(FusionError::InvalidConfig(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }
}

/// Class text embeddings, one unit row per catalog entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMatrix {
    rows: Vec<Embedding>,
}

impl TextMatrix {
    pub fn rows(&self) -> &[Embedding] {
        &self.rows
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    /// `tau * (t . T^T)` passed through softmax.
    pub fn distribution(&self, text: &Embedding, tau: f64) -> ProbDist {
        let logits: Vec<f64> = self.rows.iter().map(|r| tau * r.dot(text)).collect();
        softmax(&logits)
    }
}

pub fn class_text_matrix(catalog: &ClassCatalog, table: &LabelEmbeddingTable) -> Result<TextMatrix, FusionError> {
    let rows = catalog.names().iter().map(|n| embed_label(table, n)).collect::<Result<_, _>>()?;
    Ok(TextMatrix { rows })
}

/// Normalized rank weights `decay^r`, `r = 0..n`.
pub fn rank_weights(n: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|r| decay.powi(r as i32)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Turns retrieved labels into a distribution over the catalog. Only labels
/// and ranks matter; neighbor similarities are ignored.
pub fn rag_distribution(
    neighbors: &[Neighbor],
    catalog: &ClassCatalog,
    table: &LabelEmbeddingTable,
    matrix: &TextMatrix,
    config: &FusionConfig,
) -> Result<ProbDist, FusionError> {
    if neighbors.is_empty() {
        return Err(FusionError::NoNeighbors);
    }
    let name = |n: &Neighbor| {
        catalog.name(n.label_id).ok_or(FusionError::InvalidConfig(format!("label id {} not in catalog", n.label_id)))
    };
    match config.strategy {
        Strategy::Combine => {
            let joined = neighbors.iter().map(name).collect::<Result<Vec<_>, _>>()?.join(", ");
            Ok(matrix.distribution(&table.embed_text(&joined)?, config.tau))
        }
        Strategy::Independent | Strategy::Weighted => {
            let weights = match config.strategy {
                Strategy::Weighted => rank_weights(neighbors.len(), config.decay),
                _ => vec![1.0 / neighbors.len() as f64; neighbors.len()],
            };
            let mut acc = vec![0.0; matrix.classes()];
            for (n, w) in neighbors.iter().zip(weights) {
                let d = matrix.distribution(&embed_label(table, name(n)?)?, config.tau);
                for (a, p) in acc.iter_mut().zip(d.probs()) {
                    *a += w * p;
                }
            }
            let sum: f64 = acc.iter().sum();
            Ok(ProbDist(acc.into_iter().map(|a| a / sum).collect()))
        }
    }
}

/// Nearest-centroid classifier over statistical embeddings.
///
/// Class scores are `softmax(-scale * ||z - mu_c||)`; classes without
/// training members get probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    centroids: Vec<Option<Vec<f64>>>,
    scale: f64,
}

impl CentroidModel {
    pub const DEFAULT_SCALE: f64 = 1.0;

    pub fn fit_embeddings<'a>(
        items: impl IntoIterator<Item = (&'a [f32], usize)>,
        classes: usize,
    ) -> Result<Self, FusionError> {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; classes];
        for (v, label) in items {
            let slot = sums.get_mut(label).ok_or(FusionError::InvalidConfig(format!("label {label} out of range")))?;
            let (sum, count) = slot.get_or_insert_with(|| (vec![0.0; v.len()], 0));
            if sum.len() != v.len() {
                return Err(FusionError::LengthMismatch(sum.len(), v.len()));
            }
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
            *count += 1;
        }
        if sums.iter().all(Option::is_none) {
            return Err(FusionError::NotFitted);
        }
        let centroids = sums
            .into_iter()
            .map(|s| s.map(|(sum, n)| sum.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        Ok(Self { centroids, scale: Self::DEFAULT_SCALE })
    }

    /// Fits on the statistical embeddings of every labeled window.
    pub fn fit(dataset: &LabeledDataset) -> Result<Self, FusionError> {
        let embedded: Vec<(Embedding, usize)> = dataset
            .windows()
            .iter()
            .filter_map(|w| w.label_id().map(|l| (encode_statistical(w), l)))
            .collect();
        Self::fit_embeddings(embedded.iter().map(|(e, l)| (e.as_slice(), *l)), dataset.catalog().len())
    }

    /// Fits on database records, valid when the database was built with the
    /// statistical encoder.
    pub fn fit_knowledge_base(kb: &KnowledgeBase) -> Result<Self, FusionError> {
        Self::fit_embeddings((0..kb.len()).map(|i| (kb.key(i), kb.label(i))), kb.catalog().len())
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn centroids(&self) -> &[Option<Vec<f64>>] {
        &self.centroids
    }

    pub fn predict_embedding(&self, z: &[f32]) -> Result<ProbDist, FusionError> {
        let logits = self
            .centroids
            .iter()
            .map(|c| match c {
                Some(mu) if mu.len() == z.len() => {
                    let d2: f64 = mu.iter().zip(z).map(|(m, &x)| (m - x as f64).powi(2)).sum();
                    Ok(-self.scale * d2.sqrt())
                }
                Some(mu) => Err(FusionError::LengthMismatch(mu.len(), z.len())),
                None => Ok(f64::NEG_INFINITY),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(softmax(&logits))
    }
}

/// Base classifier producing `C_ref`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseModel {
    NearestCentroid(CentroidModel),
    /// Distributions precomputed by an external model, one row per query.
    ExternalProbs(Vec<Vec<f64>>),
}

impl BaseModel {
    /// Reads one row of space-separated probabilities per line.
    pub fn load_probs(path: &Path, classes: usize) -> Result<Self, FusionError> {
        let text = fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| FusionError::Parse { line: i + 1, msg: format!("bad number {t:?}") }))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != classes {
                return Err(FusionError::Parse { line: i + 1, msg: format!("expected {classes} values, got {}", row.len()) });
            }
            rows.push(row);
        }
        Ok(BaseModel::ExternalProbs(rows))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BaseModel::NearestCentroid(_) => "centroid",
            BaseModel::ExternalProbs(_) => "probs",
        }
    }
}

/// `C_ref` for the query window at position `index` of its batch.
pub fn base_predict(model: &BaseModel, window: &SensorWindow, index: usize) -> Result<ProbDist, FusionError> {
    match model {
        BaseModel::NearestCentroid(m) => m.predict_embedding(encode_statistical(window).as_slice()),
        BaseModel::ExternalProbs(rows) => {
            let row = rows.get(index).ok_or(FusionError::RowMissing(index))?;
            ProbDist::normalized(row).ok_or(FusionError::RowMissing(index))
        }
    }
}

/// `alpha * c_ref + (1 - alpha) * c_rag`.
pub fn fuse_static(c_ref: &ProbDist, c_rag: &ProbDist, alpha: f64) -> Result<ProbDist, FusionError> {
    if c_ref.len() != c_rag.len() {
        return Err(FusionError::LengthMismatch(c_ref.len(), c_rag.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FusionError::AlphaOutOfRange(alpha));
    }
    Ok(ProbDist(c_ref.0.iter().zip(&c_rag.0).map(|(r, g)| alpha * r + (1.0 - alpha) * g).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::hash_embed_text;
    use super::Strategy;
    use crate::signal::{synth_generate, SynthSpec};
    use proptest::prelude::*;
    use proptest::strategy::Strategy as _;

    fn catalog() -> ClassCatalog {
        ClassCatalog::new(["walking", "running", "sitting", "standing"]).unwrap()
    }

    fn setup() -> (ClassCatalog, LabelEmbeddingTable, TextMatrix) {
        let cat = catalog();
        let table = LabelEmbeddingTable::hashed(64);
        let m = class_text_matrix(&cat, &table).unwrap();
        (cat, table, m)
    }

    fn nb(labels: &[usize]) -> Vec<Neighbor> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Neighbor { record_id: i, label_id: l, similarity: 1.0 - 0.1 * i as f64 })
            .collect()
    }

    fn cfg(strategy: Strategy, tau: f64) -> FusionConfig {
        FusionConfig { strategy, tau, ..FusionConfig::default() }
    }

    #[test]
    fn text_matrix_rows() {
        let (cat, _, m) = setup();
        assert_eq!(m.classes(), cat.len());
        assert!(m.rows().iter().all(|r| (r.norm() - 1.0).abs() < 1e-6));
    }

    #[test]
    fn tau_zero_is_uniform() {
        let (cat, table, m) = setup();
        for s in [Strategy::Combine, Strategy::Independent, Strategy::Weighted] {
            let d = rag_distribution(&nb(&[0, 1, 1]), &cat, &table, &m, &cfg(s, 0.0)).unwrap();
            assert!(d.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn single_neighbor_strategies_agree() {
        let (cat, table, m) = setup();
        let one = nb(&[2]);
        let a = rag_distribution(&one, &cat, &table, &m, &cfg(Strategy::Combine, 20.0)).unwrap();
        let b = rag_distribution(&one, &cat, &table, &m, &cfg(Strategy::Independent, 20.0)).unwrap();
        let c = rag_distribution(&one, &cat, &table, &m, &cfg(Strategy::Weighted, 20.0)).unwrap();
        for ((x, y), z) in a.probs().iter().zip(b.probs()).zip(c.probs()) {
            assert!((x - y).abs() < 1e-15 && (x - z).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_rank_weights() {
        let w = rank_weights(3, 0.9);
        let expected = [1.0 / 2.71, 0.9 / 2.71, 0.81 / 2.71];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w[0] - 0.3690).abs() < 5e-5 && (w[1] - 0.3321).abs() < 5e-5 && (w[2] - 0.2989).abs() < 5e-5);
    }

    #[test]
    fn unanimous_neighbors_pick_their_class() {
        let (cat, table, m) = setup();
        for c in 0..cat.len() {
            for s in [Strategy::Combine, Strategy::Independent, Strategy::Weighted] {
                let d = rag_distribution(&nb(&[c; 5]), &cat, &table, &m, &cfg(s, 20.0)).unwrap();
                assert_eq!(d.argmax(), c);
            }
        }
        assert!(matches!(rag_distribution(&[], &cat, &table, &m, &FusionConfig::default()), Err(FusionError::NoNeighbors)));
    }

    #[test]
    fn combine_embeds_the_joined_text() {
        let (cat, table, m) = setup();
        let d = rag_distribution(&nb(&[0, 0, 1]), &cat, &table, &m, &cfg(Strategy::Combine, 20.0)).unwrap();
        let t = hash_embed_text("walking, walking, running", 64).unwrap();
        let expected = m.distribution(&t, 20.0);
        assert_eq!(d, expected);
    }

    #[test]
    fn similarities_do_not_matter() {
        let (cat, table, m) = setup();
        let base = nb(&[3, 1, 3, 0]);
        let mut perturbed = base.clone();
        for (i, n) in perturbed.iter_mut().enumerate() {
            n.similarity = -0.3 * i as f64;
        }
        for s in [Strategy::Combine, Strategy::Independent] {
            let a = rag_distribution(&base, &cat, &table, &m, &cfg(s, 20.0)).unwrap();
            let b = rag_distribution(&perturbed, &cat, &table, &m, &cfg(s, 20.0)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&ProbDist::one_hot(3, 1)), 0.0);
        assert!((entropy(&ProbDist::uniform(4)) - 4f64.ln()).abs() < 1e-12);
        assert!((entropy(&ProbDist::new(vec![0.5, 0.5]).unwrap()) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fuse_examples() {
        let r = ProbDist::new(vec![0.8, 0.2]).unwrap();
        let g = ProbDist::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(fuse_static(&r, &g, 1.0).unwrap(), r);
        assert_eq!(fuse_static(&r, &g, 0.0).unwrap(), g);
        let half = fuse_static(&r, &g, 0.5).unwrap();
        assert!(half.probs().iter().all(|p| (p - 0.5).abs() < 1e-15));
        assert!(matches!(fuse_static(&r, &g, 1.5), Err(FusionError::AlphaOutOfRange(_))));
        assert!(matches!(fuse_static(&r, &ProbDist::uniform(3), 0.5), Err(FusionError::LengthMismatch(2, 3))));
    }

    #[test]
    fn external_probs_backend() {
        let w = SensorWindow::new(vec![0.0; 4], 2, 2, 20.0, None).unwrap();
        let m = BaseModel::ExternalProbs(vec![vec![0.8, 0.2], vec![0.0, 0.0], vec![2.0, 6.0]]);
        assert_eq!(base_predict(&m, &w, 0).unwrap().probs(), &[0.8, 0.2]);
        assert!(matches!(base_predict(&m, &w, 1), Err(FusionError::RowMissing(1))));
        assert_eq!(base_predict(&m, &w, 2).unwrap().probs(), &[0.25, 0.75]);
        assert!(matches!(base_predict(&m, &w, 3), Err(FusionError::RowMissing(3))));
    }

    #[test]
    fn centroid_backend_on_separable_data() {
        let mut spec = SynthSpec::with_defaults(4, 3);
        spec.noise_std = 0.0;
        spec.windows_per_class = 10;
        let ds = synth_generate(&spec).unwrap();
        let model = BaseModel::NearestCentroid(CentroidModel::fit(&ds).unwrap());
        for (i, w) in ds.windows().iter().enumerate() {
            assert_eq!(base_predict(&model, w, i).unwrap().argmax(), w.label_id().unwrap());
        }
    }

    fn arb_dist(c: usize) -> impl proptest::strategy::Strategy<Value = ProbDist> {
        prop::collection::vec(0.01f64..1.0, c).prop_map(|w| ProbDist::normalized(&w).unwrap())
    }

    proptest! {
        #[test]
        fn fusion_is_valid_and_linear((r, g) in (2usize..12).prop_flat_map(|c| (arb_dist(c), arb_dist(c))), alpha in 0.0f64..=1.0) {
            let f = fuse_static(&r, &g, alpha).unwrap();
            prop_assert!(ProbDist::new(f.probs().to_vec()).is_ok());
            let mid = fuse_static(&r, &g, 0.5).unwrap();
            let lo = fuse_static(&r, &g, 0.0).unwrap();
            let hi = fuse_static(&r, &g, 1.0).unwrap();
            for i in 0..r.len() {
                prop_assert!((mid.probs()[i] - 0.5 * (lo.probs()[i] + hi.probs()[i])).abs() <= 1e-12);
            }
        }

        #[test]
        fn sharper_with_larger_tau(sims in prop::collection::vec(-1.0f64..1.0, 2..10), t1 in 0.0f64..50.0, dt in 0.0f64..50.0) {
            let a = softmax(&sims.iter().map(|s| t1 * s).collect::<Vec<_>>());
            let b = softmax(&sims.iter().map(|s| (t1 + dt) * s).collect::<Vec<_>>());
            prop_assert!(b.max_prob() >= a.max_prob() - 1e-12);
        }
    }
}

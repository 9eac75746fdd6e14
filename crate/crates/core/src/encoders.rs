//! Signal and label embeddings.
//!
//! Everything that leaves this module is L2-normalized, so cosine similarity
//! downstream is a plain inner product.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::features::extract_features;
use crate::signal::{LabeledDataset, SensorWindow};

/// Default width of hashed text embeddings.
pub const DEFAULT_TEXT_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("embedding file has {got} rows, dataset has {expected} windows")]
    CountMismatch { expected: usize, got: usize },
    #[error("line {line}: expected dimension {expected}, got {got}")]
    DimInconsistent { line: usize, expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {0}: zero vector cannot be normalized")]
    ZeroVector(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("text has no tokens")]
    EmptyText,
    #[error("label {0:?} not in table and hash fallback disabled")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    vector: Vec<f32>,
    normalized: bool,
}

impl Embedding {
    /// Wraps a raw vector without normalizing it.
    pub fn raw(vector: Vec<f32>) -> Self {
        Self { vector, normalized: false }
    }

    /// L2-normalizes `values`; `None` for a zero or non-finite vector.
    pub fn unit_from_f64(values: &[f64]) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        Some(Self { vector: values.iter().map(|v| (v / norm) as f32).collect(), normalized: true })
    }

    pub fn unit(values: &[f32]) -> Option<Self> {
        let as64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        Self::unit_from_f64(&as64)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.vector.iter().zip(&other.vector).map(|(&a, &b)| a as f64 * b as f64).sum()
    }
}

/// Physics features followed by per-channel `[mean, min, max, rms]`.
///
/// An all-zero window has no direction; it maps to the first basis vector.
pub fn encode_statistical(window: &SensorWindow) -> Embedding {
    let mut v = extract_features(window).0;
    for ch in window.channel_series() {
        let n = ch.len() as f64;
        let mean = ch.iter().sum::<f64>() / n;
        let min = ch.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rms = (ch.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        v.extend([mean, min, max, rms]);
    }
    Embedding::unit_from_f64(&v).unwrap_or_else(|| {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        Embedding { vector: e, normalized: true }
    })
}

/// Dimension of [`encode_statistical`] output for `channels` channels.
pub fn statistical_dim(channels: usize) -> usize {
    crate::features::FeatureVector::dim_for(channels) + 4 * channels
}

fn parse_floats(line: &str, lineno: usize) -> Result<Vec<f64>, EncoderError> {
    line.split_whitespace()
        .map(|tok| {
            let v: f64 = tok.parse().map_err(|_| EncoderError::Parse { line: lineno, msg: format!("bad number {tok:?}") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(EncoderError::Parse { line: lineno, msg: format!("non-finite value {tok:?}") })
            }
        })
        .collect()
}

/// `n` seeded embeddings drawn uniformly from the unit sphere in `d`
/// dimensions.
pub fn random_unit_embeddings(n: usize, d: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(e) = Embedding::unit_from_f64(&v) {
            out.push(e);
        }
    }
    out
}

/// Parses a space-separated embedding file (one row per window) and
/// normalizes every row. Blank lines are skipped.
pub fn load_external_embeddings(path: &Path, expected_rows: usize) -> Result<Vec<Embedding>, EncoderError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lineno = i + 1;
        let row = parse_floats(line, lineno)?;
        let expected = *dim.get_or_insert(row.len());
        if row.len() != expected || row.is_empty() {
            return Err(EncoderError::DimInconsistent { line: lineno, expected, got: row.len() });
        }
        out.push(Embedding::unit_from_f64(&row).ok_or(EncoderError::ZeroVector(lineno))?);
    }
    if out.len() != expected_rows {
        return Err(EncoderError::CountMismatch { expected: expected_rows, got: out.len() });
    }
    Ok(out)
}

/// Source of signal embeddings for database construction and querying.
#[derive(Debug, Clone)]
pub enum SignalEncoder {
    Statistical,
    /// Embeddings precomputed by an external model, indexed by window position.
    Precomputed(Vec<Embedding>),
}

impl SignalEncoder {
    pub fn from_file(path: &Path, dataset: &LabeledDataset) -> Result<Self, EncoderError> {
        Ok(Self::Precomputed(load_external_embeddings(path, dataset.len())?))
    }

    pub fn encode(&self, index: usize, window: &SensorWindow) -> Result<Embedding, EncoderError> {
        match self {
            SignalEncoder::Statistical => Ok(encode_statistical(window)),
            SignalEncoder::Precomputed(rows) => rows
                .get(index)
                .cloned()
                .ok_or(EncoderError::CountMismatch { expected: index + 1, got: rows.len() }),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SignalEncoder::Statistical => "stat",
            SignalEncoder::Precomputed(_) => "external",
        }
    }
}

/// Principal-component projection fitted on a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d_out` rows of length `d_in`, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the covariance matching `components`, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Fits on `rows` using the population covariance. Component signs are
    /// fixed so the largest-magnitude entry of each row is positive.
    pub fn fit(rows: &[Vec<f64>], d_out: usize) -> Result<Self, EncoderError> {
        if d_out == 0 || rows.len() < d_out.max(1) {
            return Err(EncoderError::TooFewSamples { needed: d_out.max(1), got: rows.len() });
        }
        let d_in = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d_in) {
            return Err(EncoderError::DimMismatch { expected: d_in, got: bad.len() });
        }
        if d_out > d_in {
            return Err(EncoderError::DimMismatch { expected: d_in, got: d_out });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d_in];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let centered = DMatrix::from_fn(rows.len(), d_in, |i, j| rows[i][j] - mean[j]);
        let cov = (centered.transpose() * &centered) / n;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d_in).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut components = Vec::with_capacity(d_out);
        let mut explained_variance = Vec::with_capacity(d_out);
        for &k in order.iter().take(d_out) {
            let mut row: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let pivot = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
            if pivot < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(row);
            explained_variance.push(eig.eigenvalues[k].max(0.0));
        }
        Ok(Self { mean, components, explained_variance })
    }

    pub fn fit_embeddings(set: &[Embedding], d_out: usize) -> Result<Self, EncoderError> {
        let rows: Vec<Vec<f64>> = set.iter().map(|e| e.as_slice().iter().map(|&v| v as f64).collect()).collect();
        Self::fit(&rows, d_out)
    }

    pub fn d_in(&self) -> usize {
        self.mean.len()
    }

    pub fn d_out(&self) -> usize {
        self.components.len()
    }

    /// Component scores `components * (v - mean)`.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>, EncoderError> {
        if v.len() != self.d_in() {
            return Err(EncoderError::DimMismatch { expected: self.d_in(), got: v.len() });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(scores) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += s * w;
            }
        }
        out
    }
}

/// Projects and re-normalizes. A point at the fitted mean has no direction
/// and maps to the first basis vector.
pub fn pca_project(model: &PcaModel, embedding: &Embedding) -> Result<Embedding, EncoderError> {
    let v: Vec<f64> = embedding.as_slice().iter().map(|&x| x as f64).collect();
    let scores = model.transform(&v)?;
    Ok(Embedding::unit_from_f64(&scores).unwrap_or_else(|| {
        let mut e = vec![0.0; scores.len()];
        e[0] = 1.0;
        Embedding { vector: e, normalized: true }
    }))
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased whitespace tokens with leading/trailing punctuation stripped,
/// so `"walking, sitting"` yields `["walking", "sitting"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Signed feature hashing of the token bag, then L2 normalization.
pub fn hash_embed_text(text: &str, d_text: usize) -> Result<Embedding, EncoderError> {
    let tokens = tokenize(text);
    if tokens.is_empty() || d_text == 0 {
        return Err(EncoderError::EmptyText);
    }
    let mut acc = vec![0.0f64; d_text];
    for t in &tokens {
        let h = fnv1a64(t.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % d_text as u64) as usize] += sign;
    }
    // Tokens can cancel exactly (e.g. two colliding opposite-sign tokens).
    Embedding::unit_from_f64(&acc).ok_or(EncoderError::EmptyText)
}

/// Label text embeddings loaded from a table, with an optional hash fallback.
#[derive(Debug, Clone)]
pub struct LabelEmbeddingTable {
    rows: HashMap<String, Embedding>,
    dim: usize,
    fallback_enabled: bool,
}

impl LabelEmbeddingTable {
    /// Empty table that embeds every label by hashing.
    pub fn hashed(dim: usize) -> Self {
        Self { rows: HashMap::new(), dim, fallback_enabled: true }
    }

    pub fn from_rows(rows: Vec<(String, Vec<f32>)>, fallback_enabled: bool) -> Result<Self, EncoderError> {
        let mut map = HashMap::new();
        let mut dim = None;
        for (i, (label, v)) in rows.into_iter().enumerate() {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(EncoderError::DimInconsistent { line: i + 1, expected: d, got: v.len() });
            }
            map.insert(label, Embedding::unit(&v).ok_or(EncoderError::ZeroVector(i + 1))?);
        }
        Ok(Self { rows: map, dim: dim.unwrap_or(DEFAULT_TEXT_DIM), fallback_enabled })
    }

    /// Reads `label<TAB>f_0 f_1 ...` lines.
    pub fn load(path: &Path, fallback_enabled: bool) -> Result<Self, EncoderError> {
        let text = fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let (label, vals) = line
                .split_once('\t')
                .ok_or_else(|| EncoderError::Parse { line: i + 1, msg: "missing tab separator".into() })?;
            let v = parse_floats(vals, i + 1)?;
            rows.push((label.to_string(), v.into_iter().map(|x| x as f32).collect()));
        }
        Self::from_rows(rows, fallback_enabled)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fallback_enabled(&self) -> bool {
        self.fallback_enabled
    }

    pub fn contains(&self, label: &str) -> bool {
        self.rows.contains_key(label)
    }

    /// Embeds free text: an exact table row, otherwise the normalized sum of
    /// the rows of its comma-separated parts when all are in the table,
    /// otherwise the hash embedding (if allowed).
    pub fn embed_text(&self, text: &str) -> Result<Embedding, EncoderError> {
        if let Some(e) = self.rows.get(text) {
            return Ok(e.clone());
        }
        let parts: Vec<&str> = text.split(", ").collect();
        if parts.len() > 1 && parts.iter().all(|p| self.rows.contains_key(*p)) {
            let mut acc = vec![0.0f64; self.dim];
            for p in parts {
                for (a, &v) in acc.iter_mut().zip(self.rows[p].as_slice()) {
                    *a += v as f64;
                }
            }
            if let Some(e) = Embedding::unit_from_f64(&acc) {
                return Ok(e);
            }
        }
        if self.fallback_enabled {
            hash_embed_text(text, self.dim)
        } else {
            Err(EncoderError::UnknownLabel(text.to_string()))
        }
    }
}

pub fn embed_label(table: &LabelEmbeddingTable, label: &str) -> Result<Embedding, EncoderError> {
    if label.is_empty() {
        return Err(EncoderError::EmptyText);
    }
    match table.rows.get(label) {
        Some(e) => Ok(e.clone()),
        None if table.fallback_enabled => hash_embed_text(label, table.dim),
        None => Err(EncoderError::UnknownLabel(label.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_generate, SynthSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write;

    fn unit_ok(e: &Embedding) -> bool {
        (e.norm() - 1.0).abs() <= 1e-6 && e.is_normalized()
    }

    #[test]
    fn statistical_encoder_contract() {
        let mut spec = SynthSpec::with_defaults(3, 1);
        spec.noise_std = 0.0;
        spec.windows_per_class = 1;
        let ds = synth_generate(&spec).unwrap();
        let a = encode_statistical(&ds.windows()[0]);
        assert_eq!(a, encode_statistical(&ds.windows()[0]));
        assert!(unit_ok(&a));
        assert_eq!(a.dim(), statistical_dim(6));
        let b = encode_statistical(&ds.windows()[1]);
        assert!(a.dot(&b) < 1.0 - 1e-6);
        let zero = SensorWindow::new(vec![0.0; 8], 4, 2, 20.0, None).unwrap();
        assert!(unit_ok(&encode_statistical(&zero)));
    }

    fn write_rows(rows: usize, dim: usize, poison: Option<usize>) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for r in 0..rows {
            let line: Vec<String> = (0..dim)
                .map(|j| if Some(r) == poison && j == 0 { "NaN".to_string() } else { format!("{}", (r + j + 1) as f64 * 0.5) })
                .collect();
            writeln!(f, "{}", line.join(" ")).unwrap();
        }
        f
    }

    #[test]
    fn external_embeddings() {
        let f = write_rows(240, 8, None);
        let es = load_external_embeddings(f.path(), 240).unwrap();
        assert_eq!(es.len(), 240);
        assert!(es.iter().all(unit_ok));
        let short = write_rows(239, 8, None);
        assert!(matches!(load_external_embeddings(short.path(), 240), Err(EncoderError::CountMismatch { expected: 240, got: 239 })));
        let nan = write_rows(10, 8, Some(4));
        assert!(matches!(load_external_embeddings(nan.path(), 10), Err(EncoderError::Parse { line: 5, .. })));
    }

    #[test]
    fn external_ragged_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1 2 3\n1 2").unwrap();
        assert!(matches!(load_external_embeddings(f.path(), 2), Err(EncoderError::DimInconsistent { line: 2, expected: 3, got: 2 })));
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|j| rng.random_range(-1.0..1.0) * (j + 1) as f64).collect()).collect()
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let rows = random_rows(40, 6, 3);
        let model = PcaModel::fit(&rows, 6).unwrap();
        for r in &rows {
            let back = model.reconstruct(&model.transform(r).unwrap());
            let err: f64 = back.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * norm, "{err}");
        }
    }

    #[test]
    fn pca_rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let model = PcaModel::fit(&rows, 2).unwrap();
        let total: f64 = model.explained_variance.iter().sum();
        assert!(model.explained_variance[0] / total >= 0.9999);
    }

    #[test]
    fn pca_eigen_oracle() {
        // Oracle: each component satisfies Cov v = lambda v, computed directly.
        let rows = random_rows(100, 8, 9);
        let model = PcaModel::fit(&rows, 8).unwrap();
        let n = rows.len() as f64;
        let mut cov = vec![vec![0.0; 8]; 8];
        for r in &rows {
            for i in 0..8 {
                for j in 0..8 {
                    cov[i][j] += (r[i] - model.mean[i]) * (r[j] - model.mean[j]) / n;
                }
            }
        }
        for w in model.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for (a, ca) in model.components.iter().enumerate() {
            for (b, cb) in model.components.iter().enumerate() {
                let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() <= 1e-6);
            }
            let lambda = model.explained_variance[a];
            for i in 0..8 {
                let cv: f64 = (0..8).map(|j| cov[i][j] * ca[j]).sum();
                assert!((cv - lambda * ca[i]).abs() <= 1e-8 * (1.0 + lambda));
            }
        }
        assert!(matches!(PcaModel::fit(&rows[..3], 4), Err(EncoderError::TooFewSamples { .. })));
        assert!(matches!(PcaModel::fit(&rows, 9), Err(EncoderError::DimMismatch { .. })));
    }

    #[test]
    fn pca_preserves_distances_inside_span() {
        // Points in a 3-D subspace of R^6; the 3-component projection is an isometry there.
        let basis = random_rows(3, 6, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let c: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                (0..6).map(|j| (0..3).map(|k| c[k] * basis[k][j]).sum()).collect()
            })
            .collect();
        let model = PcaModel::fit(&pts, 3).unwrap();
        let proj: Vec<Vec<f64>> = pts.iter().map(|p| model.transform(p).unwrap()).collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for i in 0..pts.len() {
            for j in 0..i {
                assert!((dist(&pts[i], &pts[j]) - dist(&proj[i], &proj[j])).abs() <= 1e-6);
            }
        }
        let e = Embedding::unit_from_f64(&pts[0]).unwrap();
        assert!(unit_ok(&pca_project(&model, &e).unwrap()));
    }

    #[test]
    fn hash_text_examples() {
        let a = hash_embed_text("walking", 64).unwrap();
        assert!((a.dot(&hash_embed_text("walking", 64).unwrap()) - 1.0).abs() < 1e-6);
        assert!(matches!(hash_embed_text("", 64), Err(EncoderError::EmptyText)));
        assert!(matches!(hash_embed_text("  ,  ", 64), Err(EncoderError::EmptyText)));

        // Independent token vectors, summed by hand.
        let token_vec = |t: &str| {
            let mut h: u64 = 0xcbf29ce484222325;
            for b in t.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            let mut v = vec![0.0f64; 64];
            v[(h % 64) as usize] = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
            v
        };
        let sum: Vec<f64> = token_vec("walking").iter().zip(token_vec("upstairs")).map(|(a, b)| a + b).collect();
        let expected = Embedding::unit_from_f64(&sum).unwrap();
        let got = hash_embed_text("walking upstairs", 64).unwrap();
        for (x, y) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((x - y).abs() < 1e-7);
        }
        assert_eq!(got, hash_embed_text("UPSTAIRS  walking", 64).unwrap());
        assert!(unit_ok(&got));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn label_table_lookup_and_fallback() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "walk\t3 4\nsit\t0 2").unwrap();
        let table = LabelEmbeddingTable::load(f.path(), true).unwrap();
        assert_eq!(embed_label(&table, "walk").unwrap().as_slice(), &[0.6, 0.8]);
        assert_eq!(embed_label(&table, "run").unwrap(), hash_embed_text("run", 2).unwrap());
        let strict = LabelEmbeddingTable::load(f.path(), false).unwrap();
        assert!(matches!(embed_label(&strict, "run"), Err(EncoderError::UnknownLabel(_))));
        let joined = strict.embed_text("walk, sit").unwrap();
        assert!(unit_ok(&joined));
        assert!(joined.as_slice()[1] > joined.as_slice()[0]);
    }

    #[test]
    fn synthetic_class_names_do_not_collide() {
        use crate::signal::SYNTH_CLASS_NAMES;
        let es: Vec<Embedding> = SYNTH_CLASS_NAMES.iter().map(|n| hash_embed_text(n, DEFAULT_TEXT_DIM).unwrap()).collect();
        for i in 0..es.len() {
            for j in 0..i {
                assert!(es[i].dot(&es[j]).abs() < 1e-9, "{} vs {}", SYNTH_CLASS_NAMES[i], SYNTH_CLASS_NAMES[j]);
            }
        }
    }
}

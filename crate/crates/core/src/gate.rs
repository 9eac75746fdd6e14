//! Uncertainty-adaptive fusion gate.
//!
//! A one-hidden-layer network maps normalized physics features to a fusion
//! weight `alpha = sigmoid(w2 . tanh(W1 phi + b1) + b2)`. Training minimizes
//!
//! ```text
//! L_cls    = -log C_final[y]                         C_final = a*C_ref + (1-a)*C_rag
//! L_align  = BCE(alpha, 1 - H(C_ref) / ln C)
//! L_sparse = beta_y * alpha * (1 - alpha)            beta = softplus(beta_raw)
//! total    = sum_i exp(-s_i) * L_i + s_i
//! ```
//!
//! with batch means for each `L_i`. Gradients are analytic.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{extract_features, FeatureError, FeatureNormalizer};
use crate::fusion::{entropy, ProbDist};
use crate::retrieval::persist::{Framing, Reader, Writer};
use crate::signal::SensorWindow;

pub const DEFAULT_HIDDEN: usize = 64;
pub const GATE_MAGIC: &[u8; 8] = b"MORAGT01";
pub const GATE_VERSION: u32 = 1;
/// Number of loss terms weighted by the learnable log-variances.
pub const LOSS_TERMS: usize = 3;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("gate has no feature normalizer")]
    NoNormalizer,
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `softplus^-1(1)`, so fresh class weights start at exactly 1.
fn beta_raw_init() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Gating network parameters plus the feature normalizer it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct GateNetwork {
    input_dim: usize,
    hidden: usize,
    classes: usize,
    /// Row-major `hidden x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub beta_raw: Vec<f64>,
    /// Log-variances `s` of the three loss terms.
    pub log_vars: [f64; LOSS_TERMS],
    pub normalizer: Option<FeatureNormalizer>,
}

impl GateNetwork {
    /// Glorot-uniform weights, zero biases, `beta = 1`, `s = 0`.
    pub fn new(input_dim: usize, classes: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = (0..hidden * input_dim).map(|_| rng.random_range(-a1..a1)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-a2..a2)).collect();
        Self {
            input_dim,
            hidden,
            classes,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
            beta_raw: vec![beta_raw_init(); classes],
            log_vars: [0.0; LOSS_TERMS],
            normalizer: None,
        }
    }

    /// Every parameter zero (so `alpha = 0.5` everywhere), `beta = 1`.
    pub fn zeroed(input_dim: usize, classes: usize, hidden: usize) -> Self {
        let mut g = Self::new(input_dim, classes, hidden, 0);
        g.w1.iter_mut().for_each(|w| *w = 0.0);
        g.w2.iter_mut().for_each(|w| *w = 0.0);
        g
    }

    pub fn with_normalizer(mut self, normalizer: FeatureNormalizer) -> Self {
        self.normalizer = Some(normalizer);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1 + self.beta_raw.len() + LOSS_TERMS
    }

    pub fn beta(&self) -> Vec<f64> {
        self.beta_raw.iter().map(|&b| softplus(b)).collect()
    }

    /// Effective loss weights `exp(-s)`.
    pub fn loss_weights(&self) -> [f64; LOSS_TERMS] {
        self.log_vars.map(|s| (-s).exp())
    }

    /// Flattened parameters: `w1, b1, w2, b2, beta_raw, log_vars`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p.extend_from_slice(&self.beta_raw);
        p.extend_from_slice(&self.log_vars);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.hidden);
        let (b2, rest) = rest.split_at(1);
        let (beta, s) = rest.split_at(self.classes);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = b2[0];
        self.beta_raw.copy_from_slice(beta);
        self.log_vars.copy_from_slice(s);
    }

    fn hidden_activations(&self, phi: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() + b).tanh())
            .collect()
    }

    /// `alpha` for a raw window, using the stored normalizer.
    pub fn alpha_for_window(&self, window: &SensorWindow) -> Result<f64, GateError> {
        let norm = self.normalizer.as_ref().ok_or(GateError::NoNormalizer)?;
        let phi = norm.apply(&extract_features(window))?;
        gate_forward(self, &phi.0)
    }
}

/// Fusion weight in (0, 1) for an already-normalized feature vector.
pub fn gate_forward(gate: &GateNetwork, phi: &[f64]) -> Result<f64, GateError> {
    if phi.len() != gate.input_dim {
        return Err(GateError::DimMismatch { expected: gate.input_dim, got: phi.len() });
    }
    let h = gate.hidden_activations(phi);
    let z = gate.w2.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>() + gate.b2;
    Ok(sigmoid(z))
}

/// Entropy-derived target `1 - H / ln C`, clamped to [0, 1].
pub fn alpha_target(c_ref: &ProbDist) -> f64 {
    let c = c_ref.len() as f64;
    (1.0 - entropy(c_ref) / c.ln()).clamp(0.0, 1.0)
}

/// One training instance: normalized features, frozen distributions, truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSample {
    pub phi: Vec<f64>,
    pub c_ref: ProbDist,
    pub c_rag: ProbDist,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub align: f64,
    pub sparse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Clamp for log arguments: `[eps, 1 - eps]`.
    pub eps_clamp: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, epochs: 20, batch_size: 32, seed: 0, eps_clamp: 1e-7, weight_decay: 0.0 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), GateError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(GateError::InvalidConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.eps_clamp > 0.0 && self.eps_clamp < 0.5) {
            return Err(GateError::InvalidConfig(format!("eps_clamp must lie in (0, 0.5), got {}", self.eps_clamp)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(GateError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss on the whole training set before the first update.
    pub initial: LossBreakdown,
    pub total: Vec<f64>,
    pub cls: Vec<f64>,
    pub align: Vec<f64>,
    pub sparse: Vec<f64>,
    /// `exp(-s)` after training.
    pub final_lambda: [f64; LOSS_TERMS],
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.total.len()
    }
}

/// Loss terms and gradient with respect to [`GateNetwork::params`].
pub fn loss_and_grad(gate: &GateNetwork, batch: &[GateSample], eps: f64) -> Result<(LossBreakdown, Vec<f64>), GateError> {
    eval(gate, batch, eps, true).map(|(l, g)| (l, g.unwrap_or_default()))
}

pub fn loss_total(gate: &GateNetwork, batch: &[GateSample], eps: f64) -> Result<LossBreakdown, GateError> {
    eval(gate, batch, eps, false).map(|(l, _)| l)
}

pub fn grad_total(gate: &GateNetwork, batch: &[GateSample], eps: f64) -> Result<Vec<f64>, GateError> {
    loss_and_grad(gate, batch, eps).map(|(_, g)| g)
}

fn eval(gate: &GateNetwork, batch: &[GateSample], eps: f64, want_grad: bool) -> Result<(LossBreakdown, Option<Vec<f64>>), GateError> {
    if batch.is_empty() {
        return Err(GateError::EmptyBatch);
    }
    let (d, hdim, c) = (gate.input_dim, gate.hidden, gate.classes);
    for s in batch {
        if s.phi.len() != d {
            return Err(GateError::DimMismatch { expected: d, got: s.phi.len() });
        }
        if s.c_ref.len() != c || s.c_rag.len() != c {
            return Err(GateError::DimMismatch { expected: c, got: s.c_ref.len().max(s.c_rag.len()) });
        }
        if s.label >= c {
            return Err(GateError::LabelOutOfRange { label: s.label, classes: c });
        }
    }
    let n = batch.len() as f64;
    let lambda = gate.loss_weights();
    let beta = gate.beta();

    // First pass: per-instance terms and d(term)/d(alpha).
    struct Inst {
        h: Vec<f64>,
        alpha: f64,
        d_cls: f64,
        d_align: f64,
        d_sparse: f64,
    }
    let mut sums = [0.0; LOSS_TERMS];
    let mut insts = Vec::with_capacity(batch.len());
    for s in batch {
        let h = gate.hidden_activations(&s.phi);
        let z = gate.w2.iter().zip(&h).map(|(w, a)| w * a).sum::<f64>() + gate.b2;
        let alpha = sigmoid(z);
        let (r, g) = (s.c_ref.probs()[s.label], s.c_rag.probs()[s.label]);

        let p = alpha * r + (1.0 - alpha) * g;
        let pc = p.clamp(eps, 1.0 - eps);
        sums[0] += -pc.ln();
        let d_cls = if p > eps && p < 1.0 - eps { -(r - g) / p } else { 0.0 };

        let target = alpha_target(&s.c_ref);
        let ac = alpha.clamp(eps, 1.0 - eps);
        sums[1] += -(target * ac.ln() + (1.0 - target) * (1.0 - ac).ln());
        let d_align = if alpha > eps && alpha < 1.0 - eps { -target / alpha + (1.0 - target) / (1.0 - alpha) } else { 0.0 };

        let by = beta[s.label];
        sums[2] += by * alpha * (1.0 - alpha);
        let d_sparse = by * (1.0 - 2.0 * alpha);

        insts.push(Inst { h, alpha, d_cls, d_align, d_sparse });
    }
    let [cls, align, sparse] = sums.map(|v| v / n);
    let terms = [cls, align, sparse];
    let total: f64 = (0..LOSS_TERMS).map(|i| lambda[i] * terms[i] + gate.log_vars[i]).sum();
    let losses = LossBreakdown { total, cls, align, sparse };
    if !want_grad {
        return Ok((losses, None));
    }

    let mut g_w1 = vec![0.0; hdim * d];
    let mut g_b1 = vec![0.0; hdim];
    let mut g_w2 = vec![0.0; hdim];
    let mut g_b2 = 0.0;
    let mut g_beta = vec![0.0; c];
    for (s, inst) in batch.iter().zip(&insts) {
        let d_alpha = (lambda[0] * inst.d_cls + lambda[1] * inst.d_align + lambda[2] * inst.d_sparse) / n;
        let dz = d_alpha * inst.alpha * (1.0 - inst.alpha);
        g_b2 += dz;
        for j in 0..hdim {
            g_w2[j] += dz * inst.h[j];
            let dpre = dz * gate.w2[j] * (1.0 - inst.h[j] * inst.h[j]);
            g_b1[j] += dpre;
            for (gw, x) in g_w1[j * d..(j + 1) * d].iter_mut().zip(&s.phi) {
                *gw += dpre * x;
            }
        }
        g_beta[s.label] += lambda[2] * inst.alpha * (1.0 - inst.alpha) / n;
    }
    for (gb, raw) in g_beta.iter_mut().zip(&gate.beta_raw) {
        *gb *= sigmoid(*raw);
    }
    let g_s: Vec<f64> = (0..LOSS_TERMS).map(|i| 1.0 - lambda[i] * terms[i]).collect();

    let mut grad = Vec::with_capacity(gate.param_count());
    grad.extend(g_w1);
    grad.extend(g_b1);
    grad.extend(g_w2);
    grad.push(g_b2);
    grad.extend(g_beta);
    grad.extend(g_s);
    Ok((losses, Some(grad)))
}

/// Adaptive-moment optimizer with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Trains `gate` in place on precomputed samples. Only gate parameters move.
pub fn train(gate: &mut GateNetwork, samples: &[GateSample], config: &TrainConfig) -> Result<TrainReport, GateError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(GateError::EmptyDataset);
    }
    let start = Instant::now();
    let eps = config.eps_clamp;
    let initial = loss_total(gate, samples, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(gate.param_count(), config.lr, config.weight_decay);
    let mut params = gate.params();
    let batch_size = if config.batch_size == 0 { samples.len() } else { config.batch_size };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport {
        initial,
        total: Vec::with_capacity(config.epochs),
        cls: Vec::with_capacity(config.epochs),
        align: Vec::with_capacity(config.epochs),
        sparse: Vec::with_capacity(config.epochs),
        final_lambda: gate.loss_weights(),
        wall_time_s: 0.0,
    };
    let mut batch: Vec<GateSample> = Vec::with_capacity(batch_size);
    for _ in 0..config.epochs {
        if batch_size < samples.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let grad = grad_total(gate, &batch, eps)?;
            opt.update(&mut params, &grad);
            gate.set_params(&params);
        }
        let l = loss_total(gate, samples, eps)?;
        report.total.push(l.total);
        report.cls.push(l.cls);
        report.align.push(l.align);
        report.sparse.push(l.sparse);
    }
    report.final_lambda = gate.loss_weights();
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn encode_checkpoint(gate: &GateNetwork) -> Vec<u8> {
    let mut w = Writer::new(GATE_MAGIC);
    w.u32(GATE_VERSION);
    w.u32(gate.input_dim as u32);
    w.u32(gate.hidden as u32);
    w.u32(gate.classes as u32);
    w.u8(gate.normalizer.is_some() as u8);
    for &v in gate.params().iter() {
        w.f64(v);
    }
    if let Some(n) = &gate.normalizer {
        n.mean.iter().chain(&n.std).for_each(|&v| w.f64(v));
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GateNetwork, GateError> {
    let mut r = Reader::open(bytes, GATE_MAGIC, GATE_VERSION).map_err(|f| match f {
        Framing::BadMagic => GateError::BadMagic,
        Framing::Checksum => GateError::ChecksumMismatch,
        Framing::Version(v) => GateError::VersionUnsupported(v),
    })?;
    let short = || GateError::Corrupt("unexpected end of payload".into());
    let d = r.u32().ok_or_else(short)? as usize;
    let h = r.u32().ok_or_else(short)? as usize;
    let c = r.u32().ok_or_else(short)? as usize;
    let has_norm = r.u8().ok_or_else(short)?;
    if d == 0 || h == 0 || c < 2 || has_norm > 1 {
        return Err(GateError::Corrupt("bad header".into()));
    }
    let mut gate = GateNetwork::zeroed(d, c, h);
    let count = gate.param_count() + if has_norm == 1 { 2 * d } else { 0 };
    if r.remaining() != count * 8 {
        return Err(GateError::Corrupt(format!("expected {} payload bytes, found {}", count * 8, r.remaining())));
    }
    let params = (0..gate.param_count()).map(|_| r.f64().ok_or_else(short)).collect::<Result<Vec<_>, _>>()?;
    gate.set_params(&params);
    if has_norm == 1 {
        let mean = (0..d).map(|_| r.f64().ok_or_else(short)).collect::<Result<Vec<_>, _>>()?;
        let std = (0..d).map(|_| r.f64().ok_or_else(short)).collect::<Result<Vec<_>, _>>()?;
        if std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(GateError::Corrupt("non-positive std".into()));
        }
        gate.normalizer = Some(FeatureNormalizer { mean, std });
    }
    Ok(gate)
}

pub fn save_checkpoint(gate: &GateNetwork, path: &Path) -> Result<(), GateError> {
    fs::write(path, encode_checkpoint(gate))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GateNetwork, GateError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> ProbDist {
        ProbDist::normalized(v).unwrap()
    }

    fn random_batch(gate: &GateNetwork, n: usize, seed: u64) -> Vec<GateSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let phi = (0..gate.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let r: Vec<f64> = (0..gate.classes()).map(|_| rng.random_range(0.05..1.0)).collect();
                let g: Vec<f64> = (0..gate.classes()).map(|_| rng.random_range(0.05..1.0)).collect();
                GateSample { phi, c_ref: dist(&r), c_rag: dist(&g), label: rng.random_range(0..gate.classes()) }
            })
            .collect()
    }

    #[test]
    fn forward_examples() {
        let zero = GateNetwork::zeroed(5, 3, 8);
        assert_eq!(gate_forward(&zero, &[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), 0.5);
        let g = GateNetwork::new(5, 3, 8, 7);
        let x = [10.0, -20.0, 30.0, 5.0, 90.0];
        let a = gate_forward(&g, &x).unwrap();
        assert!(a > 0.0 && a < 1.0);
        assert_eq!(a, gate_forward(&g, &x).unwrap());
        assert!(matches!(gate_forward(&g, &[1.0]), Err(GateError::DimMismatch { expected: 5, got: 1 })));
    }

    #[test]
    fn initial_beta_is_one() {
        let g = GateNetwork::new(4, 6, 64, 0);
        assert!(g.beta().iter().all(|b| (b - 1.0).abs() < 1e-15));
        // D*H + 2H + C + 4 (the +4 is b2 and the three log-variances)
        assert_eq!(g.param_count(), 4 * 64 + 2 * 64 + 6 + 4);
    }

    #[test]
    fn alpha_target_examples() {
        assert_eq!(alpha_target(&ProbDist::uniform(5)), 0.0);
        assert_eq!(alpha_target(&ProbDist::one_hot(5, 2)), 1.0);
        let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert!((h - 0.3251).abs() < 1e-4);
        let t = alpha_target(&dist(&[0.9, 0.1]));
        assert!((t - (1.0 - h / 2f64.ln())).abs() < 1e-15);
        assert!((t - 0.5310).abs() < 1e-4);
    }

    #[test]
    fn loss_component_values() {
        let gate = GateNetwork::zeroed(2, 2, 4);
        let eps = 1e-7;
        let one_hot = GateSample { phi: vec![0.0; 2], c_ref: ProbDist::one_hot(2, 0), c_rag: ProbDist::one_hot(2, 0), label: 0 };
        let l = loss_total(&gate, std::slice::from_ref(&one_hot), eps).unwrap();
        assert!(l.cls <= 2.0 * eps);
        assert!((l.sparse - 0.25).abs() <= 1e-12);
        // target 1, alpha 0.5
        assert!((l.align - 2f64.ln()).abs() <= 1e-9);
        assert!(matches!(loss_total(&gate, &[], eps), Err(GateError::EmptyBatch)));
    }

    fn finite_difference(gate: &GateNetwork, batch: &[GateSample], h: f64) -> Vec<f64> {
        let p = gate.params();
        let mut g = gate.clone();
        (0..p.len())
            .map(|i| {
                let mut q = p.clone();
                q[i] = p[i] + h;
                g.set_params(&q);
                let up = loss_total(&g, batch, 1e-7).unwrap().total;
                q[i] = p[i] - h;
                g.set_params(&q);
                let down = loss_total(&g, batch, 1e-7).unwrap().total;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut gate = GateNetwork::new(6, 4, 10, 3);
        gate.log_vars = [0.3, -0.2, 0.1];
        gate.beta_raw = vec![0.2, -0.4, 1.1, 0.0];
        let batch = random_batch(&gate, 8, 17);
        let analytic = grad_total(&gate, &batch, 1e-7).unwrap();
        let numeric = finite_difference(&gate, &batch, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel <= 1e-5, "{a} vs {n}");
        }
    }

    #[test]
    fn stationary_configuration_has_small_gradient() {
        let mut gate = GateNetwork::zeroed(3, 3, 4);
        gate.b2 = 40.0;
        let batch: Vec<GateSample> = (0..3)
            .map(|c| GateSample { phi: vec![0.3, -0.1, 0.2], c_ref: ProbDist::one_hot(3, c), c_rag: ProbDist::one_hot(3, c), label: c })
            .collect();
        let grad = grad_total(&gate, &batch, 1e-7).unwrap();
        let net = &grad[..grad.len() - LOSS_TERMS];
        let norm = net.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "{norm}");
        assert_eq!(grad, grad_total(&gate, &batch, 1e-7).unwrap());
    }

    #[test]
    fn sparse_term_shape() {
        for beta_raw in [-2.0, 0.0, 3.0] {
            let mut gate = GateNetwork::zeroed(1, 2, 1);
            gate.beta_raw = vec![beta_raw; 2];
            let sample = |b2: f64| {
                let mut g = gate.clone();
                g.b2 = b2;
                let s = GateSample { phi: vec![0.0], c_ref: ProbDist::uniform(2), c_rag: ProbDist::uniform(2), label: 0 };
                loss_total(&g, &[s], 1e-7).unwrap().sparse
            };
            let peak = sample(0.0);
            for z in [-30.0, -3.0, -0.5, 0.5, 3.0, 30.0] {
                assert!(sample(z) < peak);
            }
            assert!(sample(40.0) < 1e-15 && sample(-40.0) < 1e-15);
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let gate = GateNetwork::new(4, 3, 16, 1);
        let batch = random_batch(&gate, 50, 2);
        let cfg = TrainConfig { lr: 1e-3, epochs: 200, batch_size: 0, seed: 5, ..TrainConfig::default() };
        let mut a = gate.clone();
        let ra = train(&mut a, &batch, &cfg).unwrap();
        assert!(ra.total[199] < ra.total[0]);
        assert!(ra.final_lambda.iter().all(|l| *l > 0.0));
        let mut b = gate.clone();
        let rb = train(&mut b, &batch, &cfg).unwrap();
        assert_eq!(ra.total, rb.total);
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut g = GateNetwork::new(5, 3, 7, 9);
        g.log_vars = [0.5, -1.0, 2.0];
        let g = g.with_normalizer(FeatureNormalizer { mean: vec![0.1; 5], std: vec![2.0; 5] });
        let bytes = encode_checkpoint(&g);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), g);
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(GateError::ChecksumMismatch)));
        let mut bad = bytes.clone();
        bad[3] = b'?';
        assert!(matches!(decode_checkpoint(&bad), Err(GateError::BadMagic)));
    }
}

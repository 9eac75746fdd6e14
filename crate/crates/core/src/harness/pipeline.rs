use crate::encoders::{LabelEmbeddingTable, SignalEncoder};
use crate::features::{extract_features, fit_normalizer, FeatureNormalizer};
use crate::fusion::{base_predict, fuse_static, rag_distribution, BaseModel, FusionConfig, ProbDist, TextMatrix};
use crate::gate::{gate_forward, train, GateError, GateNetwork, GateSample, TrainConfig, TrainReport};
use crate::par::{self, ExecMode};
use crate::retrieval::{search, KnowledgeBase, Neighbor, SearchKind};
use crate::signal::{LabeledDataset, SensorWindow};

use super::metrics::{evaluate, EvalReport};
use super::HarnessError;

/// Everything a query needs besides its own window.
#[derive(Debug, Clone, Copy)]
pub struct Components<'a> {
    pub kb: &'a KnowledgeBase,
    /// Encoder for the query windows (not the database records).
    pub encoder: &'a SignalEncoder,
    pub base: &'a BaseModel,
    pub table: &'a LabelEmbeddingTable,
    pub text: &'a TextMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fusion: FusionConfig,
    pub search: SearchKind,
    /// Learned per-query weight; `fusion.alpha` is used when absent.
    pub gate: Option<GateNetwork>,
    /// Query `i` never retrieves record `i`. Use when the queries are the
    /// database's own source windows.
    pub leave_one_out: bool,
    pub mode: ExecMode,
}

impl RunConfig {
    pub fn new(fusion: FusionConfig) -> Self {
        Self { fusion, search: SearchKind::Exact, gate: None, leave_one_out: false, mode: ExecMode::default() }
    }

    /// `(key, value)` pairs echoed into reports.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("alpha".to_string(), match &self.gate {
                Some(_) => "learned".to_string(),
                None => self.fusion.alpha.to_string(),
            }),
            ("k".to_string(), self.fusion.k.to_string()),
            ("tau".to_string(), self.fusion.tau.to_string()),
            ("strategy".to_string(), self.fusion.strategy.name().to_string()),
            ("decay".to_string(), self.fusion.decay.to_string()),
            ("search".to_string(), self.search.name().to_string()),
        ];
        if let SearchKind::Ivf { nprobe } = self.search {
            out.push(("nprobe".to_string(), nprobe.to_string()));
        }
        out.push(("leave_one_out".to_string(), self.leave_one_out.to_string()));
        out.push(("mode".to_string(), if self.mode.is_parallel() { "parallel" } else { "sequential" }.to_string()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub c_ref: ProbDist,
    pub c_rag: ProbDist,
    pub c_final: ProbDist,
    pub alpha: f64,
    pub neighbors: Vec<Neighbor>,
}

fn retrieve(
    comps: &Components<'_>,
    fusion: &FusionConfig,
    kind: SearchKind,
    index: usize,
    window: &SensorWindow,
    exclude: Option<usize>,
) -> Result<Vec<Neighbor>, HarnessError> {
    let q = comps.encoder.encode(index, window)?;
    let extra = usize::from(exclude.is_some());
    let mut hits = search(comps.kb, q.as_slice(), fusion.k + extra, kind)?;
    if let Some(id) = exclude {
        hits.retain(|n| n.record_id != id);
    }
    hits.truncate(fusion.k);
    Ok(hits)
}

fn frozen_distributions(
    comps: &Components<'_>,
    cfg: &RunConfig,
    index: usize,
    window: &SensorWindow,
) -> Result<(ProbDist, ProbDist, Vec<Neighbor>), HarnessError> {
    let exclude = cfg.leave_one_out.then_some(index);
    let neighbors = retrieve(comps, &cfg.fusion, cfg.search, index, window, exclude)?;
    let c_rag = rag_distribution(&neighbors, comps.kb.catalog(), comps.table, comps.text, &cfg.fusion)?;
    let c_ref = base_predict(comps.base, window, index)?;
    Ok((c_ref, c_rag, neighbors))
}

/// Fused predictions for every query window, in input order.
pub fn predict(cfg: &RunConfig, comps: &Components<'_>, queries: &[SensorWindow]) -> Result<Vec<Prediction>, HarnessError> {
    cfg.fusion.validate()?;
    par::try_map(cfg.mode, queries, |i, w| {
        let (c_ref, c_rag, neighbors) = frozen_distributions(comps, cfg, i, w)?;
        let alpha = match &cfg.gate {
            Some(g) => g.alpha_for_window(w)?,
            None => cfg.fusion.alpha,
        };
        let c_final = fuse_static(&c_ref, &c_rag, alpha)?;
        Ok(Prediction { label: c_final.argmax(), c_ref, c_rag, c_final, alpha, neighbors })
    })
}

/// [`predict`] followed by evaluation against the query labels.
pub fn run_pipeline(
    cfg: &RunConfig,
    comps: &Components<'_>,
    queries: &LabeledDataset,
) -> Result<(Vec<Prediction>, EvalReport), HarnessError> {
    if queries.catalog().names() != comps.kb.catalog().names() {
        return Err(HarnessError::CatalogMismatch);
    }
    let truths = queries
        .windows()
        .iter()
        .enumerate()
        .map(|(i, w)| w.label_id().ok_or(HarnessError::UnlabeledQuery(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let preds = predict(cfg, comps, queries.windows())?;
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let report = evaluate(&labels, &truths, queries.catalog().len())?.with_config(cfg.describe());
    Ok((preds, report))
}

/// Normalizer fitted on the physics features of `windows`.
pub fn fit_gate_normalizer(windows: &[SensorWindow], mode: ExecMode) -> Result<FeatureNormalizer, HarnessError> {
    let feats = par::map(mode, windows, |_, w| extract_features(w));
    Ok(fit_normalizer(&feats)?)
}

/// Training instances with frozen `C_ref`/`C_rag`. `cfg.gate` is ignored.
pub fn build_gate_samples(
    cfg: &RunConfig,
    comps: &Components<'_>,
    dataset: &LabeledDataset,
    normalizer: &FeatureNormalizer,
) -> Result<Vec<GateSample>, HarnessError> {
    cfg.fusion.validate()?;
    par::try_map(cfg.mode, dataset.windows(), |i, w| {
        let label = w.label_id().ok_or(HarnessError::UnlabeledQuery(i))?;
        let (c_ref, c_rag, _) = frozen_distributions(comps, cfg, i, w)?;
        let phi = normalizer.apply(&extract_features(w))?.0;
        Ok(GateSample { phi, c_ref, c_rag, label })
    })
}

/// Fits the gate's normalizer if missing, builds samples and trains.
pub fn train_gate(
    gate: &mut GateNetwork,
    cfg: &RunConfig,
    comps: &Components<'_>,
    dataset: &LabeledDataset,
    train_cfg: &TrainConfig,
) -> Result<TrainReport, HarnessError> {
    if gate.classes() != dataset.catalog().len() {
        return Err(GateError::DimMismatch { expected: gate.classes(), got: dataset.catalog().len() }.into());
    }
    if gate.normalizer.is_none() {
        gate.normalizer = Some(fit_gate_normalizer(dataset.windows(), cfg.mode)?);
    }
    let normalizer = gate.normalizer.clone().ok_or(GateError::NoNormalizer)?;
    let samples = build_gate_samples(cfg, comps, dataset, &normalizer)?;
    if let Some(s) = samples.first() {
        gate_forward(gate, &s.phi)?;
    }
    Ok(train(gate, &samples, train_cfg)?)
}

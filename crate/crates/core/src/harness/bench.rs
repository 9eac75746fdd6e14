use std::fmt::Write as _;
use std::time::Instant;

use crate::encoders::{Embedding, LabelEmbeddingTable};
use crate::fusion::{fuse_static, rag_distribution, FusionConfig, ProbDist, TextMatrix};
use crate::retrieval::{search, KnowledgeBase, SearchKind};

use super::HarnessError;

/// Text side of the fusion step.
#[derive(Debug, Clone, Copy)]
pub struct BenchContext<'a> {
    pub table: &'a LabelEmbeddingTable,
    pub text: &'a TextMatrix,
    pub fusion: FusionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub index_kind: &'static str,
    pub records: usize,
    pub dim: usize,
    pub k: usize,
    pub queries: usize,
    pub warmup: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        format!(
            "{} search over {} records (d={}, k={}), {} queries after {} warmup\n  mean {:.1} us  p50 {:.1} us  p95 {:.1} us  p99 {:.1} us  max {:.1} us\n",
            self.index_kind, self.records, self.dim, self.k, self.queries, self.warmup,
            self.mean_us, self.p50_us, self.p95_us, self.p99_us, self.max_us
        )
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "index = {}", self.index_kind);
        let _ = writeln!(s, "records = {}", self.records);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "queries = {}", self.queries);
        let _ = writeln!(s, "warmup = {}", self.warmup);
        for (k, v) in [
            ("mean_us", self.mean_us),
            ("p50_us", self.p50_us),
            ("p95_us", self.p95_us),
            ("p99_us", self.p99_us),
            ("max_us", self.max_us),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Times retrieval, the retrieval distribution and fusion for each query on
/// the calling thread. The first `warmup` iterations (cycling through the
/// queries) are discarded.
pub fn bench_latency(
    kb: &KnowledgeBase,
    queries: &[Embedding],
    kind: SearchKind,
    ctx: &BenchContext<'_>,
    warmup: usize,
) -> Result<BenchReport, HarnessError> {
    if queries.is_empty() {
        return Err(HarnessError::NoQueries);
    }
    ctx.fusion.validate()?;
    let c_ref = ProbDist::uniform(kb.catalog().len());
    let run = |q: &Embedding| -> Result<ProbDist, HarnessError> {
        let hits = search(kb, q.as_slice(), ctx.fusion.k, kind)?;
        let c_rag = rag_distribution(&hits, kb.catalog(), ctx.table, ctx.text, &ctx.fusion)?;
        Ok(fuse_static(&c_ref, &c_rag, ctx.fusion.alpha)?)
    };
    for q in queries.iter().cycle().take(warmup) {
        std::hint::black_box(run(q)?);
    }
    let mut times = Vec::with_capacity(queries.len());
    for q in queries {
        let start = Instant::now();
        std::hint::black_box(run(q)?);
        times.push(start.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchReport {
        index_kind: kind.name(),
        records: kb.len(),
        dim: kb.dim(),
        k: ctx.fusion.k,
        queries: queries.len(),
        warmup,
        mean_us: times.iter().sum::<f64>() / times.len() as f64,
        p50_us: percentile(&times, 50.0),
        p95_us: percentile(&times, 95.0),
        p99_us: percentile(&times, 99.0),
        max_us: times[times.len() - 1],
    })
}

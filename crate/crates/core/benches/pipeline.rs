use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mora_core::encoders::{LabelEmbeddingTable, SignalEncoder};
use mora_core::fusion::{class_text_matrix, BaseModel, CentroidModel, FusionConfig};
use mora_core::harness::{run_pipeline, Components, RunConfig};
use mora_core::par::ExecMode;
use mora_core::retrieval::build_database;
use mora_core::signal::{synth_generate, SynthSpec};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn dataset(seed: u64, per_class: usize) -> mora_core::signal::LabeledDataset {
    let mut spec = SynthSpec::with_defaults(6, seed);
    spec.windows_per_class = per_class;
    synth_generate(&spec).unwrap()
}

fn database_build(c: &mut Criterion) {
    let db = dataset(1, 200);
    let mut group = c.benchmark_group("build_database");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| build_database(&db, &SignalEncoder::Statistical, mode).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let db = dataset(1, 200);
    let test = dataset(2, 50);
    let encoder = SignalEncoder::Statistical;
    let kb = build_database(&db, &encoder, ExecMode::Parallel).unwrap();
    let base = BaseModel::NearestCentroid(CentroidModel::fit(&db).unwrap());
    let table = LabelEmbeddingTable::hashed(64);
    let text = class_text_matrix(db.catalog(), &table).unwrap();
    let comps = Components { kb: &kb, encoder: &encoder, base: &base, table: &table, text: &text };
    let mut group = c.benchmark_group("run_pipeline");
    for (name, mode) in MODES {
        let mut cfg = RunConfig::new(FusionConfig::default());
        cfg.mode = mode;
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_pipeline(&cfg, &comps, &test).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, database_build, end_to_end);
criterion_main!(benches);

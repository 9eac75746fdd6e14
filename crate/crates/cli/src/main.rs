//! `mora`: build retrieval databases, train the fusion gate, run and evaluate
//! retrieval-augmented inference, and measure latency.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mora_core::encoders::{
    random_unit_embeddings, statistical_dim, Embedding, EncoderError, LabelEmbeddingTable, SignalEncoder,
};
use mora_core::features::{FeatureError, FeatureVector};
use mora_core::fusion::{class_text_matrix, BaseModel, CentroidModel, FusionConfig, FusionError, Strategy, TextMatrix};
use mora_core::gate::{load_checkpoint, save_checkpoint, GateError, GateNetwork, TrainConfig};
use mora_core::harness::{
    bench_latency, predict, run_pipeline, train_gate, BenchContext, Components, HarnessError, RunConfig,
};
use mora_core::par::ExecMode;
use mora_core::retrieval::{
    build_database, load_database, persist_database, IvfParams, KnowledgeBase, SearchKind, StoreError,
};
use mora_core::signal::{
    ingest_csv, synth_generate, write_csv, ClassCatalog, CsvSchema, LabeledDataset, SignalError, SynthSpec,
    SYNTH_CLASS_NAMES,
};

#[derive(Debug, Parser)]
#[command(name = "mora", version, about = "Retrieval-augmented activity recognition")]
struct Cli {
    /// Seed for every random choice (synthesis, k-means, gate init, shuffling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic multichannel recording as CSV.
    Synth(SynthArgs),
    /// Encode a labeled recording into a binary knowledge base.
    BuildDb(BuildDbArgs),
    /// Predict class distributions for query windows.
    Infer(InferArgs),
    /// Train the fusion gate against a frozen database and base model.
    TrainGate(TrainGateArgs),
    /// Run inference on labeled queries and write metric reports.
    Eval(EvalArgs),
    /// Measure per-query retrieval and fusion latency.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    channels: usize,
    #[arg(long, default_value_t = 200)]
    window_len: usize,
    #[arg(long, default_value_t = 40)]
    windows_per_class: usize,
    #[arg(long, default_value_t = 20.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_std: f64,
    #[arg(long)]
    out: PathBuf,
}

/// How CSV recordings are cut into windows.
#[derive(Debug, Args, Clone)]
struct WindowArgs {
    /// Resample every run to this rate before windowing.
    #[arg(long)]
    resample_hz: Option<f64>,
    /// Split label runs into fixed-length windows.
    #[arg(long)]
    window_len: Option<usize>,
    /// Hop between windows; defaults to the window length.
    #[arg(long, requires = "window_len")]
    stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncoderKind {
    Stat,
    External,
}

#[derive(Debug, Args)]
struct BuildDbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = EncoderKind::Stat)]
    encoder: EncoderKind,
    /// Embedding file (one line per window), required with `--encoder external`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Build an IVF index with this many lists.
    #[arg(long)]
    ivf: Option<usize>,
    /// Default probe count stored with the index.
    #[arg(long, requires = "ivf")]
    nprobe: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Args, Clone)]
struct FusionArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 20.0)]
    tau: f64,
    /// combine | independent | weighted
    #[arg(long, default_value = "combine")]
    strategy: String,
    /// Rank decay for the weighted strategy.
    #[arg(long, default_value_t = 0.9)]
    decay: f64,
    /// Search the IVF index with this many probes instead of an exact scan.
    #[arg(long)]
    nprobe: Option<usize>,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    /// `centroid` or `probs:<file>`.
    #[arg(long, default_value = "centroid")]
    base: String,
    /// Fit the centroid base model on this recording instead of the database.
    #[arg(long)]
    base_train: Option<PathBuf>,
    #[arg(long, default_value_t = CentroidModel::DEFAULT_SCALE)]
    centroid_scale: f64,
    /// Label embedding table (`label<TAB>floats`); hashed embeddings otherwise.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Dimension of hashed label embeddings.
    #[arg(long, default_value_t = 64)]
    text_dim: usize,
    /// Precomputed query embeddings, required for externally encoded databases.
    #[arg(long)]
    query_embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Trained gate checkpoint; overrides `--alpha` per window.
    #[arg(long)]
    gate: Option<PathBuf>,
    /// Output file for C probabilities per line; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fusion: FusionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Args)]
struct TrainGateArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Mini-batch size; 0 for full batch.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    /// The training windows are the database's own records; skip self-matches.
    #[arg(long)]
    leave_one_out: bool,
    #[command(flatten)]
    fusion: FusionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gate: Option<PathBuf>,
    /// Directory for `report.txt`, `metrics.txt` and `confusion.csv`.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    #[arg(long)]
    leave_one_out: bool,
    #[command(flatten)]
    fusion: FusionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Database to query; a random one is generated otherwise.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    records: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Build an IVF index with this many lists before measuring.
    #[arg(long)]
    ivf: Option<usize>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    nprobe: Option<usize>,
    /// Write `key = value` results here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Core(mora_core::Error),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Core(e) if e.is_io() => 1,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
from_core!(SignalError, FeatureError, EncoderError, StoreError, FusionError, GateError, HarnessError);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mode = if cli.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let result = match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::BuildDb(a) => build_db(a, cli.seed, mode),
        Command::Infer(a) => infer(a, mode),
        Command::TrainGate(a) => train_gate_cmd(a, cli.seed, mode),
        Command::Eval(a) => eval(a, mode),
        Command::Bench(a) => bench(a, cli.seed, mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn synth(a: &SynthArgs, seed: u64) -> CliResult {
    let mut spec = SynthSpec::with_defaults(a.classes, seed);
    spec.channels = a.channels;
    spec.window_len = a.window_len;
    spec.windows_per_class = a.windows_per_class;
    spec.noise_std = a.noise_std;
    if a.rate_hz != spec.rate_hz {
        let defaults = SynthSpec::with_defaults(a.classes, seed);
        let scale = a.rate_hz / defaults.rate_hz;
        spec.rate_hz = a.rate_hz;
        spec.frequencies = defaults.frequencies.iter().map(|f| f * scale).collect();
    }
    let data = synth_generate(&spec)?;
    write_csv(&data, &a.out)?;
    info!("wrote {} windows of {} classes to {}", data.len(), data.catalog().len(), a.out.display());
    Ok(())
}

fn load_recording(path: &Path, w: &WindowArgs) -> CliResult<LabeledDataset> {
    let schema = CsvSchema::infer(path)?;
    let mut data = ingest_csv(path, &schema)?;
    if let Some(hz) = w.resample_hz {
        data = data.resample(hz)?;
    }
    if let Some(len) = w.window_len {
        data = data.segment(len, w.stride.unwrap_or(len))?;
    }
    if data.is_empty() {
        return Err(invalid(format!("{} contains no usable windows", path.display())));
    }
    info!("{}: {} windows, {} classes", path.display(), data.len(), data.catalog().len());
    Ok(data)
}

fn build_db(a: &BuildDbArgs, seed: u64, mode: ExecMode) -> CliResult {
    let data = load_recording(&a.input, &a.window)?;
    let encoder = match (a.encoder, &a.embeddings) {
        (EncoderKind::Stat, None) => SignalEncoder::Statistical,
        (EncoderKind::External, Some(p)) => SignalEncoder::from_file(p, &data)?,
        (EncoderKind::Stat, Some(_)) => return Err(invalid("--embeddings requires --encoder external")),
        (EncoderKind::External, None) => return Err(invalid("--encoder external requires --embeddings")),
    };
    let mut kb = build_database(&data, &encoder, mode)?;
    if let Some(nlist) = a.ivf {
        let mut params = IvfParams::new(nlist).with_seed(seed);
        if let Some(np) = a.nprobe {
            params = params.with_nprobe(np);
        }
        kb.build_ivf(params, mode)?;
    }
    persist_database(&kb, &a.out)?;
    info!("wrote {} records (d={}) to {}", kb.len(), kb.dim(), a.out.display());
    Ok(())
}

fn fusion_config(f: &FusionArgs) -> CliResult<(FusionConfig, SearchKind)> {
    let strategy: Strategy = f.strategy.parse().map_err(CliError::Invalid)?;
    let cfg = FusionConfig { alpha: f.alpha, k: f.k, tau: f.tau, strategy, decay: f.decay };
    cfg.validate()?;
    let search = f.nprobe.map_or(SearchKind::Exact, |nprobe| SearchKind::Ivf { nprobe });
    Ok((cfg, search))
}

/// Loaded inference components that outlive a [`Components`] borrow.
struct Loaded {
    kb: KnowledgeBase,
    encoder: SignalEncoder,
    base: BaseModel,
    table: LabelEmbeddingTable,
    text: TextMatrix,
}

impl Loaded {
    fn components(&self) -> Components<'_> {
        Components { kb: &self.kb, encoder: &self.encoder, base: &self.base, table: &self.table, text: &self.text }
    }
}

fn load_components(kb_path: &Path, queries: &LabeledDataset, m: &ModelArgs, window: &WindowArgs) -> CliResult<Loaded> {
    let kb = load_database(kb_path)?;
    let channels = queries.windows()[0].channels();
    let encoder = match &m.query_embeddings {
        Some(p) => SignalEncoder::from_file(p, queries)?,
        None if kb.dim() == statistical_dim(channels) => SignalEncoder::Statistical,
        None => {
            return Err(invalid(format!(
                "database dimension {} does not match the statistical encoder ({}); pass --query-embeddings",
                kb.dim(),
                statistical_dim(channels)
            )))
        }
    };
    let base = if m.base == "centroid" {
        let model = match &m.base_train {
            Some(p) => CentroidModel::fit(&load_recording(p, window)?.relabel(kb.catalog())?)?,
            None if kb.dim() == statistical_dim(channels) => CentroidModel::fit_knowledge_base(&kb)?,
            None => return Err(invalid("centroid base on an externally encoded database requires --base-train")),
        };
        BaseModel::NearestCentroid(model.with_scale(m.centroid_scale))
    } else if let Some(file) = m.base.strip_prefix("probs:") {
        let probs = BaseModel::load_probs(Path::new(file), kb.catalog().len())?;
        if let BaseModel::ExternalProbs(rows) = &probs {
            if rows.len() != queries.len() {
                return Err(invalid(format!("{file} has {} rows for {} query windows", rows.len(), queries.len())));
            }
        }
        probs
    } else {
        return Err(invalid(format!("unknown base model {:?}; use centroid or probs:<file>", m.base)));
    };
    let table = match &m.labels {
        Some(p) => LabelEmbeddingTable::load(p, true)?,
        None => LabelEmbeddingTable::hashed(m.text_dim),
    };
    let text = class_text_matrix(kb.catalog(), &table)?;
    Ok(Loaded { kb, encoder, base, table, text })
}

fn load_queries(path: &Path, kb_path: &Path, w: &WindowArgs) -> CliResult<LabeledDataset> {
    let data = load_recording(path, w)?;
    // Read the catalog early so label-name mismatches surface before any work.
    let catalog: ClassCatalog = load_database(kb_path)?.catalog().clone();
    let unlabeled_only = data.labels().iter().all(Option::is_none);
    if unlabeled_only {
        let (windows, _) = data.into_parts();
        return Ok(LabeledDataset::new(windows, catalog)?);
    }
    Ok(data.relabel(&catalog)?)
}

fn run_config(f: &FusionArgs, gate: Option<&PathBuf>, mode: ExecMode) -> CliResult<RunConfig> {
    let (fusion, search) = fusion_config(f)?;
    let mut cfg = RunConfig::new(fusion);
    cfg.search = search;
    cfg.mode = mode;
    cfg.gate = gate.map(|p| load_checkpoint(p)).transpose()?;
    Ok(cfg)
}

fn infer(a: &InferArgs, mode: ExecMode) -> CliResult {
    let queries = load_queries(&a.query, &a.kb, &a.window)?;
    let loaded = load_components(&a.kb, &queries, &a.model, &a.window)?;
    let cfg = run_config(&a.fusion, a.gate.as_ref(), mode)?;
    let preds = predict(&cfg, &loaded.components(), queries.windows())?;
    let mut probs = String::new();
    for p in &preds {
        let row: Vec<String> = p.c_final.probs().iter().map(f64::to_string).collect();
        probs.push_str(&row.join(" "));
        probs.push('\n');
    }
    match &a.out {
        Some(path) => {
            fs::write(path, probs)?;
            let catalog = loaded.kb.catalog();
            for (i, p) in preds.iter().enumerate() {
                println!("{i}\t{}\t{:.4}", catalog.name(p.label).unwrap_or("?"), p.alpha);
            }
        }
        None => print!("{probs}"),
    }
    Ok(())
}

fn train_gate_cmd(a: &TrainGateArgs, seed: u64, mode: ExecMode) -> CliResult {
    let data = load_queries(&a.train, &a.kb, &a.window)?;
    let loaded = load_components(&a.kb, &data, &a.model, &a.window)?;
    let mut cfg = run_config(&a.fusion, None, mode)?;
    cfg.leave_one_out = a.leave_one_out;
    let dim = FeatureVector::dim_for(data.windows()[0].channels());
    let mut gate = GateNetwork::new(dim, loaded.kb.catalog().len(), a.hidden, seed);
    let tc = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
        weight_decay: a.weight_decay,
        ..TrainConfig::default()
    };
    let report = train_gate(&mut gate, &cfg, &loaded.components(), &data, &tc)?;
    save_checkpoint(&gate, &a.out)?;
    let last = report.total.last().copied().unwrap_or(report.initial.total);
    println!("epochs = {}", report.epochs());
    println!("initial_loss = {}", report.initial.total);
    println!("final_loss = {last}");
    if let (Some(c), Some(al), Some(s)) = (report.cls.last(), report.align.last(), report.sparse.last()) {
        println!("final_cls = {c}");
        println!("final_align = {al}");
        println!("final_sparse = {s}");
    }
    println!("lambda = {:?}", report.final_lambda);
    println!("wall_time_s = {}", report.wall_time_s);
    info!("wrote gate checkpoint to {}", a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs, mode: ExecMode) -> CliResult {
    let queries = load_queries(&a.query, &a.kb, &a.window)?;
    let loaded = load_components(&a.kb, &queries, &a.model, &a.window)?;
    let mut cfg = run_config(&a.fusion, a.gate.as_ref(), mode)?;
    cfg.leave_one_out = a.leave_one_out;
    let (_, report) = run_pipeline(&cfg, &loaded.components(), &queries)?;
    let names = loaded.kb.catalog().names().to_vec();
    let text = report.to_text(&names);
    print!("{text}");
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), &text)?;
        fs::write(dir.join("metrics.txt"), report.to_key_values(&names))?;
        fs::write(dir.join("confusion.csv"), report.confusion_csv(&names))?;
        info!("reports written to {}", dir.display());
    }
    Ok(())
}

fn bench(a: &BenchArgs, seed: u64, mode: ExecMode) -> CliResult {
    if a.queries == 0 {
        return Err(invalid("--queries must be >= 1"));
    }
    let mut kb = match &a.kb {
        Some(p) => load_database(p)?,
        None => {
            if a.records == 0 || a.dim == 0 || a.classes < 2 {
                return Err(invalid("--records, --dim must be >= 1 and --classes >= 2"));
            }
            let names: Vec<String> = (0..a.classes)
                .map(|i| SYNTH_CLASS_NAMES.get(i).map_or_else(|| format!("class_{i}"), |s| s.to_string()))
                .collect();
            let catalog = ClassCatalog::new(names)?;
            let records = random_unit_embeddings(a.records, a.dim, seed)
                .into_iter()
                .enumerate()
                .map(|(i, e)| (e, i % a.classes))
                .collect();
            KnowledgeBase::from_records(records, catalog)?
        }
    };
    if let Some(nlist) = a.ivf {
        kb.build_ivf(IvfParams::new(nlist).with_seed(seed), mode)?;
    }
    let kind = match (a.nprobe, kb.index()) {
        (Some(nprobe), _) => SearchKind::Ivf { nprobe },
        (None, Some(ix)) => SearchKind::Ivf { nprobe: ix.nprobe() },
        (None, None) => SearchKind::Exact,
    };
    let queries: Vec<Embedding> = random_unit_embeddings(a.queries, kb.dim(), seed.wrapping_add(1));
    let table = LabelEmbeddingTable::hashed(64);
    let text = class_text_matrix(kb.catalog(), &table)?;
    let ctx = BenchContext { table: &table, text: &text, fusion: FusionConfig { k: a.k, ..FusionConfig::default() } };
    let report = bench_latency(&kb, &queries, kind, &ctx, a.warmup)?;
    print!("{}", report.to_text());
    if let Some(out) = &a.out {
        fs::write(out, report.to_key_values())?;
    }
    Ok(())
}

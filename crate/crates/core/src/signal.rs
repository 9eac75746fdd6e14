//! Sensor windows, labelled datasets and the ways of producing them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("window needs at least 2 timesteps and 1 channel, got {timesteps}x{channels}")]
    BadShape { timesteps: usize, channels: usize },
    #[error("sample buffer of length {len} does not match {timesteps}x{channels}")]
    BufferMismatch { len: usize, timesteps: usize, channels: usize },
    #[error("non-finite sample at timestep {timestep}, channel {channel}")]
    NonFinite { timestep: usize, channel: usize },
    #[error("sampling rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("class catalog needs at least 2 names, got {0}")]
    CatalogTooSmall(usize),
    #[error("class catalog contains an empty name")]
    EmptyClassName,
    #[error("class catalog contains duplicate name {0:?}")]
    DuplicateClass(String),
    #[error("label id {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset windows disagree on shape or rate (window {0})")]
    Inconsistent(usize),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("timestamps not monotonic at data row {0}")]
    NonMonotonicTimestamps(usize),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("parse error at data row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("resampling yields {0} samples, need at least 2")]
    OutputTooShort(usize),
    #[error("window length {window_len} exceeds series length {series_len}")]
    WindowLongerThanSeries { window_len: usize, series_len: usize },
    #[error("invalid segmentation: window_len {window_len}, stride {stride}")]
    BadSegmentation { window_len: usize, stride: usize },
    #[error("few-shot count must be at least 1")]
    ZeroShots,
    #[error("class {0:?} has no windows")]
    ClassAbsent(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fixed-length multichannel segment, stored row-major (timestep, channel).
#[derive(Debug, Clone, PartialEq)]
pub struct SensorWindow {
    samples: Vec<f64>,
    timesteps: usize,
    channels: usize,
    rate_hz: f64,
    label_id: Option<usize>,
}

impl SensorWindow {
    pub fn new(
        samples: Vec<f64>,
        timesteps: usize,
        channels: usize,
        rate_hz: f64,
        label_id: Option<usize>,
    ) -> Result<Self, SignalError> {
        if timesteps < 2 || channels < 1 {
            return Err(SignalError::BadShape { timesteps, channels });
        }
        if samples.len() != timesteps * channels {
            return Err(SignalError::BufferMismatch { len: samples.len(), timesteps, channels });
        }
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(SignalError::BadRate(rate_hz));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { timestep: pos / channels, channel: pos % channels });
        }
        Ok(Self { samples, timesteps, channels, rate_hz, label_id })
    }

    /// Builds a window from per-channel columns of equal length.
    pub fn from_channels(
        columns: &[Vec<f64>],
        rate_hz: f64,
        label_id: Option<usize>,
    ) -> Result<Self, SignalError> {
        let channels = columns.len();
        let timesteps = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != timesteps) {
            return Err(SignalError::BadShape { timesteps, channels });
        }
        let mut samples = Vec::with_capacity(timesteps * channels);
        for t in 0..timesteps {
            samples.extend(columns.iter().map(|c| c[t]));
        }
        Self::new(samples, timesteps, channels, rate_hz, label_id)
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn label_id(&self) -> Option<usize> {
        self.label_id
    }

    pub fn with_label(mut self, label_id: Option<usize>) -> Self {
        self.label_id = label_id;
        self
    }

    /// Row-major sample buffer.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn at(&self, t: usize, m: usize) -> f64 {
        self.samples[t * self.channels + m]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.samples[t * self.channels..(t + 1) * self.channels]
    }

    /// Copies channel `m` out as a contiguous series.
    pub fn channel(&self, m: usize) -> Vec<f64> {
        self.samples.iter().skip(m).step_by(self.channels).copied().collect()
    }

    pub fn channel_series(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|m| self.channel(m)).collect()
    }

    /// Duration in seconds covered by the samples.
    pub fn duration_s(&self) -> f64 {
        self.timesteps as f64 / self.rate_hz
    }
}

/// Ordered list of distinct class names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
}

impl ClassCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, SignalError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(SignalError::CatalogTooSmall(names.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(SignalError::EmptyClassName);
            }
            if !seen.insert(n.as_str()) {
                return Err(SignalError::DuplicateClass(n.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    windows: Vec<SensorWindow>,
    catalog: ClassCatalog,
}

impl LabeledDataset {
    pub fn new(windows: Vec<SensorWindow>, catalog: ClassCatalog) -> Result<Self, SignalError> {
        if let Some(first) = windows.first() {
            for (i, w) in windows.iter().enumerate() {
                if w.channels != first.channels || w.rate_hz != first.rate_hz {
                    return Err(SignalError::Inconsistent(i));
                }
                if let Some(l) = w.label_id {
                    if l >= catalog.len() {
                        return Err(SignalError::LabelOutOfRange { label: l, classes: catalog.len() });
                    }
                }
            }
        }
        Ok(Self { windows, catalog })
    }

    pub fn windows(&self) -> &[SensorWindow] {
        &self.windows
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn into_parts(self) -> (Vec<SensorWindow>, ClassCatalog) {
        (self.windows, self.catalog)
    }

    /// Ground-truth label ids; `None` entries for unlabeled windows.
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.windows.iter().map(SensorWindow::label_id).collect()
    }

    /// Number of windows per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.catalog.len()];
        for l in self.windows.iter().filter_map(SensorWindow::label_id) {
            counts[l] += 1;
        }
        counts
    }

    /// Keeps the windows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            catalog: self.catalog.clone(),
        }
    }

    /// Splits every window with [`segment_windows`]. Windows shorter than
    /// `window_len` are dropped.
    pub fn segment(&self, window_len: usize, stride: usize) -> Result<Self, SignalError> {
        let mut out = Vec::new();
        for w in &self.windows {
            match segment_windows(w, window_len, stride) {
                Ok(parts) => out.extend(parts),
                Err(SignalError::WindowLongerThanSeries { .. }) => {
                    log::debug!("dropping run of {} samples", w.timesteps);
                }
                Err(e) => return Err(e),
            }
        }
        Self::new(out, self.catalog.clone())
    }

    pub fn resample(&self, target_hz: f64) -> Result<Self, SignalError> {
        let windows = self.windows.iter().map(|w| resample(w, target_hz)).collect::<Result<_, _>>()?;
        Self::new(windows, self.catalog.clone())
    }

    /// Re-expresses labels as ids of `catalog`, matching by class name.
    pub fn relabel(&self, catalog: &ClassCatalog) -> Result<Self, SignalError> {
        let map = self
            .catalog
            .names()
            .iter()
            .map(|n| catalog.id_of(n).ok_or_else(|| SignalError::ClassAbsent(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let windows = self.windows.iter().map(|w| w.clone().with_label(w.label_id.map(|l| map[l]))).collect();
        Self::new(windows, catalog.clone())
    }
}

/// Column layout of a CSV recording.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub time_column: String,
    pub channel_columns: Vec<String>,
    pub label_column: String,
    /// Reject repeated timestamps as well as decreasing ones.
    pub strictly_monotonic: bool,
    /// Sampling rate; inferred from the median timestamp step when absent.
    pub rate_hz: Option<f64>,
}

impl CsvSchema {
    pub fn new(channel_columns: &[&str]) -> Self {
        Self {
            time_column: "t".into(),
            channel_columns: channel_columns.iter().map(|s| s.to_string()).collect(),
            label_column: "label".into(),
            strictly_monotonic: true,
            rate_hz: None,
        }
    }

    /// Reads the header of `path` and treats every column other than `t` and
    /// `label` as a channel, in file order.
    pub fn infer(path: &Path) -> Result<Self, SignalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let channels: Vec<&str> =
            headers.iter().filter(|h| *h != "t" && *h != "label").collect();
        Ok(Self::new(&channels))
    }
}

fn csv_err(e: csv::Error) -> SignalError {
    let row = e.position().map_or(0, |p| p.record() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SignalError::Io(io),
        other => SignalError::Parse { row, msg: format!("{other:?}") },
    }
}

/// Reads a CSV recording and turns every contiguous run of equal labels into
/// one window. The catalog lists labels in first-appearance order; an empty
/// label cell marks unlabeled rows. Runs of a single row are dropped.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<LabeledDataset, SignalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| SignalError::MissingColumn(name.to_string()))
    };
    let t_idx = find(&schema.time_column)?;
    let label_idx = find(&schema.label_column)?;
    let ch_idx: Vec<usize> = schema.channel_columns.iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    if ch_idx.is_empty() {
        return Err(SignalError::MissingColumn("<channel>".into()));
    }

    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64, SignalError> {
            let cell = rec.get(i).ok_or_else(|| SignalError::Parse { row, msg: "short row".into() })?;
            let v: f64 = cell.parse().map_err(|_| SignalError::Parse { row, msg: format!("bad number {cell:?}") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(SignalError::Parse { row, msg: format!("non-finite value {cell:?}") })
            }
        };
        let t = num(t_idx)?;
        if let Some(&prev) = times.last() {
            let bad = if schema.strictly_monotonic { t <= prev } else { t < prev };
            if bad {
                return Err(SignalError::NonMonotonicTimestamps(row));
            }
        }
        times.push(t);
        rows.push(ch_idx.iter().map(|&i| num(i)).collect::<Result<_, _>>()?);
        labels.push(rec.get(label_idx).unwrap_or("").to_string());
    }
    if rows.is_empty() {
        return Err(SignalError::EmptyFile);
    }

    let rate_hz = match schema.rate_hz {
        Some(r) => r,
        None => infer_rate(&times)?,
    };

    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for l in labels.iter().filter(|l| !l.is_empty()) {
        if !ids.contains_key(l) {
            ids.insert(l.clone(), names.len());
            names.push(l.clone());
        }
    }
    let catalog = ClassCatalog::new(names)?;

    let m = ch_idx.len();
    let mut windows = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = start + 1;
        while end < rows.len() && labels[end] == labels[start] {
            end += 1;
        }
        if end - start >= 2 {
            let samples: Vec<f64> = rows[start..end].iter().flatten().copied().collect();
            let label = ids.get(&labels[start]).copied();
            windows.push(SensorWindow::new(samples, end - start, m, rate_hz, label)?);
        } else {
            log::warn!("dropping single-row label run at data row {start}");
        }
        start = end;
    }
    LabeledDataset::new(windows, catalog)
}

fn infer_rate(times: &[f64]) -> Result<f64, SignalError> {
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    if steps.is_empty() {
        return Err(SignalError::BadRate(f64::NAN));
    }
    steps.sort_by(f64::total_cmp);
    let median = steps[steps.len() / 2];
    Ok(1.0 / median)
}

/// Writes a dataset as `t,ch_0..,label` with a continuous time axis.
pub fn write_csv(dataset: &LabeledDataset, path: &Path) -> Result<(), SignalError> {
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    let m = dataset.windows.first().map_or(0, SensorWindow::channels);
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|i| format!("ch_{i}")));
    header.push("label".into());
    wtr.write_record(&header).map_err(csv_err)?;
    let mut step = 0usize;
    for w in &dataset.windows {
        let label = w.label_id.and_then(|l| dataset.catalog.name(l)).unwrap_or("");
        for t in 0..w.timesteps {
            let mut rec = Vec::with_capacity(m + 2);
            rec.push(format!("{}", step as f64 / w.rate_hz));
            rec.extend(w.row(t).iter().map(|v| format!("{v}")));
            rec.push(label.to_string());
            wtr.write_record(&rec).map_err(csv_err)?;
            step += 1;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Linear interpolation onto a uniform grid of `floor(T * target / rate)`
/// samples starting at the first input sample.
pub fn resample(window: &SensorWindow, target_hz: f64) -> Result<SensorWindow, SignalError> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(SignalError::BadRate(target_hz));
    }
    let t_in = window.timesteps;
    let out_len = (t_in as f64 * target_hz / window.rate_hz).floor() as usize;
    if out_len < 2 {
        return Err(SignalError::OutputTooShort(out_len));
    }
    if target_hz == window.rate_hz {
        return Ok(window.clone());
    }
    let m = window.channels;
    let ratio = window.rate_hz / target_hz;
    let last = (t_in - 1) as f64;
    let mut samples = Vec::with_capacity(out_len * m);
    for i in 0..out_len {
        let pos = (i as f64 * ratio).min(last);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t_in - 1);
        let frac = pos - lo as f64;
        for c in 0..m {
            let a = window.at(lo, c);
            let b = window.at(hi, c);
            samples.push(a + (b - a) * frac);
        }
    }
    SensorWindow::new(samples, out_len, m, target_hz, window.label_id)
}

/// Fixed-length windows at offsets `0, stride, 2*stride, ...`.
pub fn segment_windows(
    series: &SensorWindow,
    window_len: usize,
    stride: usize,
) -> Result<Vec<SensorWindow>, SignalError> {
    if window_len < 2 || stride < 1 {
        return Err(SignalError::BadSegmentation { window_len, stride });
    }
    if window_len > series.timesteps {
        return Err(SignalError::WindowLongerThanSeries { window_len, series_len: series.timesteps });
    }
    let m = series.channels;
    let count = (series.timesteps - window_len) / stride + 1;
    (0..count)
        .map(|i| {
            let start = i * stride * m;
            let samples = series.samples[start..start + window_len * m].to_vec();
            SensorWindow::new(samples, window_len, m, series.rate_hz, series.label_id)
        })
        .collect()
}

/// Number of windows per class to keep in a few-shot split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    All,
    PerClass(usize),
}

impl std::str::FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Shots::All);
        }
        s.parse().map(Shots::PerClass).map_err(|_| format!("expected a count or 'all', got {s:?}"))
    }
}

/// Seeded per-class sample without replacement. Output keeps dataset order.
/// Unlabeled windows are never selected (except by [`Shots::All`]).
pub fn few_shot_subset(dataset: &LabeledDataset, shots: Shots, seed: u64) -> Result<LabeledDataset, SignalError> {
    let classes = dataset.catalog.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, w) in dataset.windows.iter().enumerate() {
        if let Some(l) = w.label_id {
            by_class[l].push(i);
        }
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(SignalError::ClassAbsent(dataset.catalog.names[c].clone()));
    }
    let n = match shots {
        Shots::All => return Ok(dataset.clone()),
        Shots::PerClass(0) => return Err(SignalError::ZeroShots),
        Shots::PerClass(n) => n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for members in &by_class {
        let take = n.min(members.len());
        keep.extend(sample(&mut rng, members.len(), take).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    Ok(dataset.select(&keep))
}

/// Default activity names for synthetic data; pairwise collision-free under
/// the 64-dimensional text hash.
pub const SYNTH_CLASS_NAMES: [&str; 8] =
    ["walking", "running", "sitting", "standing", "cycling", "jumping", "lying", "climbing"];

/// Parameters of the sinusoid-plus-noise generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub channels: usize,
    pub window_len: usize,
    pub windows_per_class: usize,
    pub rate_hz: f64,
    /// Base frequency of each class, Hz.
    pub frequencies: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
    /// Class names; defaults to [`SYNTH_CLASS_NAMES`] then `class_<i>`.
    pub class_names: Option<Vec<String>>,
}

impl SynthSpec {
    /// Evenly spaced frequencies between 0.5 Hz and 0.4 * rate.
    pub fn with_defaults(classes: usize, seed: u64) -> Self {
        let rate_hz = 20.0;
        let lo = 0.5;
        let hi = 0.4 * rate_hz;
        let frequencies = (0..classes)
            .map(|c| if classes > 1 { lo + (hi - lo) * c as f64 / (classes - 1) as f64 } else { lo })
            .collect();
        Self {
            classes,
            channels: 6,
            window_len: 200,
            windows_per_class: 40,
            rate_hz,
            frequencies,
            noise_std: 0.1,
            seed,
            class_names: None,
        }
    }

    fn names(&self) -> Vec<String> {
        match &self.class_names {
            Some(n) => n.clone(),
            None => (0..self.classes)
                .map(|c| SYNTH_CLASS_NAMES.get(c).map_or_else(|| format!("class_{c}"), |s| s.to_string()))
                .collect(),
        }
    }

    fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidSpec(m.to_string()));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.channels < 1 || self.window_len < 2 || self.windows_per_class < 1 {
            return bad("channels, window_len and windows_per_class must be positive (window_len >= 2)");
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad("rate must be positive");
        }
        if self.frequencies.len() != self.classes {
            return bad("one frequency per class required");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be >= 0");
        }
        for (i, f) in self.frequencies.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0 && *f < self.rate_hz / 2.0) {
                return bad("frequencies must lie in (0, rate/2)");
            }
            if self.frequencies[..i].contains(f) {
                return bad("frequencies must be distinct");
            }
        }
        if self.names().len() != self.classes {
            return bad("one class name per class required");
        }
        Ok(())
    }
}

const CLASS_SHAPE_SEED: u64 = 0x6d6f_7261_0000_0000;

/// Windows are emitted round-robin over classes: window `i` has class `i % C`.
/// Each class gets fixed per-channel phase offsets (independent of the seed);
/// each window draws a fresh global phase and i.i.d. Gaussian noise.
pub fn synth_generate(spec: &SynthSpec) -> Result<LabeledDataset, SignalError> {
    spec.validate()?;
    let catalog = ClassCatalog::new(spec.names())?;
    // Class shapes ignore the seed so that recordings drawn with different
    // seeds describe the same task.
    let offsets: Vec<Vec<f64>> = (0..spec.classes)
        .map(|c| {
            let mut class_rng = ChaCha8Rng::seed_from_u64(CLASS_SHAPE_SEED.wrapping_add(c as u64));
            (0..spec.channels).map(|_| class_rng.random_range(0.0..2.0 * PI)).collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| SignalError::InvalidSpec(e.to_string()))?;
    let (t_len, m) = (spec.window_len, spec.channels);
    let mut windows = Vec::with_capacity(spec.classes * spec.windows_per_class);
    for _ in 0..spec.windows_per_class {
        for (c, class_offsets) in offsets.iter().enumerate() {
            let phase = rng.random_range(0.0..2.0 * PI);
            let omega = 2.0 * PI * spec.frequencies[c] / spec.rate_hz;
            let mut samples = Vec::with_capacity(t_len * m);
            for t in 0..t_len {
                for &offset in class_offsets {
                    let clean = (omega * t as f64 + phase + offset).sin();
                    let eps = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    samples.push(clean + eps);
                }
            }
            windows.push(SensorWindow::new(samples, t_len, m, spec.rate_hz, Some(c))?);
        }
    }
    LabeledDataset::new(windows, catalog)
}

/// Deterministic stratified split: within each class, the first
/// `round(frac * count)` windows (in dataset order, after a seeded shuffle)
/// go to the first part.
pub fn stratified_split(dataset: &LabeledDataset, frac: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for c in 0..dataset.catalog.len() {
        let mut members: Vec<usize> =
            (0..dataset.len()).filter(|&i| dataset.windows[i].label_id == Some(c)).collect();
        members.shuffle(&mut rng);
        let cut = (frac * members.len() as f64).round() as usize;
        first.extend_from_slice(&members[..cut]);
        second.extend_from_slice(&members[cut..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (dataset.select(&first), dataset.select(&second))
}

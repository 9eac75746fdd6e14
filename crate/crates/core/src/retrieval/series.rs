//! Similarity measures on raw series, and top-k retrieval with them.

use super::{neighbor_order, warn_clamp, Neighbor, StoreError};
use crate::features::pearson;
use crate::par::{self, ExecMode};
use crate::signal::{LabeledDataset, SensorWindow};

/// Dynamic time warping with absolute-difference cost and steps
/// diagonal/right/down.
///
/// `band` is a Sakoe-Chiba half-width on `|i - j|`. It is widened to the
/// length difference when narrower, so a warping path always exists.
pub fn dtw_distance(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64, StoreError> {
    if a.is_empty() || b.is_empty() {
        return Err(StoreError::EmptySeries);
    }
    let (n, m) = (a.len(), b.len());
    let w = band.map(|w| w.max(n.abs_diff(m)));
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let (lo, hi) = match w {
            Some(w) => (i.saturating_sub(w).max(1), (i + w).min(m)),
            None => (1, m),
        };
        for j in lo..=hi {
            let cost = (a[i - 1] - b[j - 1]).abs();
            cur[j] = cost + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Sum of per-channel DTW distances.
pub fn dtw_multichannel(a: &SensorWindow, b: &SensorWindow, band: Option<usize>) -> Result<f64, StoreError> {
    if a.channels() != b.channels() {
        return Err(StoreError::DimMismatch { expected: a.channels(), got: b.channels() });
    }
    a.channel_series().iter().zip(b.channel_series()).map(|(x, y)| dtw_distance(x, &y, band)).sum()
}

fn check_pair(a: &SensorWindow, b: &SensorWindow) -> Result<(), StoreError> {
    if a.channels() != b.channels() {
        return Err(StoreError::DimMismatch { expected: a.channels(), got: b.channels() });
    }
    if a.timesteps() != b.timesteps() {
        return Err(StoreError::LengthMismatch(a.timesteps(), b.timesteps()));
    }
    Ok(())
}

/// Mean over channels of the Pearson correlation; flat channels score 0.
pub fn pearson_similarity(a: &SensorWindow, b: &SensorWindow) -> Result<f64, StoreError> {
    check_pair(a, b)?;
    let (ca, cb) = (a.channel_series(), b.channel_series());
    Ok(ca.iter().zip(&cb).map(|(x, y)| pearson(x, y)).sum::<f64>() / ca.len() as f64)
}

/// Best Pearson correlation of `a[t]` against `b[t + lag]` over the
/// overlapping samples, `lag` in `-max_lag..=max_lag`. Returns the value and
/// the lag that attains it (smallest `|lag|`, then most negative, on ties).
pub fn ccf_best_lag(a: &[f64], b: &[f64], max_lag: usize) -> Result<(f64, isize), StoreError> {
    if a.len() != b.len() {
        return Err(StoreError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StoreError::EmptySeries);
    }
    if max_lag >= n {
        return Err(StoreError::LagTooLarge { max_lag, len: n });
    }
    let mut lags: Vec<isize> = (-(max_lag as isize)..=max_lag as isize).collect();
    lags.sort_by_key(|l| (l.unsigned_abs(), *l));
    let mut best = (f64::NEG_INFINITY, 0isize);
    for lag in lags {
        let overlap = n - lag.unsigned_abs();
        if overlap < 2 {
            continue;
        }
        let (sa, sb) = if lag >= 0 {
            (&a[..overlap], &b[lag as usize..])
        } else {
            (&a[lag.unsigned_abs()..], &b[..overlap])
        };
        let r = pearson(sa, sb);
        if r > best.0 {
            best = (r, lag);
        }
    }
    Ok(best)
}

/// Mean over channels of the best-lag normalized cross-correlation.
pub fn ccf_similarity(a: &SensorWindow, b: &SensorWindow, max_lag: usize) -> Result<f64, StoreError> {
    check_pair(a, b)?;
    let (ca, cb) = (a.channel_series(), b.channel_series());
    let mut total = 0.0;
    for (x, y) in ca.iter().zip(&cb) {
        total += ccf_best_lag(x, y, max_lag)?.0;
    }
    Ok(total / ca.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMetric {
    Ccf { max_lag: usize },
    Dtw { band: Option<usize> },
    Pearson,
}

impl SeriesMetric {
    /// Higher is more similar; DTW is negated.
    pub fn similarity(&self, a: &SensorWindow, b: &SensorWindow) -> Result<f64, StoreError> {
        match *self {
            SeriesMetric::Ccf { max_lag } => ccf_similarity(a, b, max_lag),
            SeriesMetric::Dtw { band } => dtw_multichannel(a, b, band).map(|d| -d),
            SeriesMetric::Pearson => pearson_similarity(a, b),
        }
    }
}

/// Top-k windows of `dataset` by `metric`, same ordering rules as the
/// embedding search. Unlabeled windows are skipped.
pub fn raw_series_knn(
    dataset: &LabeledDataset,
    query: &SensorWindow,
    k: usize,
    metric: SeriesMetric,
    mode: ExecMode,
) -> Result<Vec<Neighbor>, StoreError> {
    if k == 0 {
        return Err(StoreError::ZeroK);
    }
    if dataset.is_empty() {
        return Err(StoreError::EmptyDataset);
    }
    warn_clamp(k, dataset.len());
    let scored = par::try_map(mode, dataset.windows(), |i, w| {
        Ok::<_, StoreError>(match w.label_id() {
            Some(label_id) => Some(Neighbor { record_id: i, label_id, similarity: metric.similarity(query, w)? }),
            None => None,
        })
    })?;
    let mut all: Vec<Neighbor> = scored.into_iter().flatten().collect();
    all.sort_by(neighbor_order);
    all.truncate(k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_generate, SynthSpec};
    use proptest::prelude::*;

    #[test]
    fn dtw_examples() {
        let a = [0.5, -1.0, 2.0, 3.5];
        assert_eq!(dtw_distance(&a, &a, None).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 3.0], None).unwrap(), 1.0);
        let b = [1.0, 1.0, 0.0, 3.0];
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert_eq!(dtw_distance(&a, &b, Some(0)).unwrap(), l1);
        assert!(matches!(dtw_distance(&[], &a, None), Err(StoreError::EmptySeries)));
    }

    proptest! {
        #[test]
        fn dtw_symmetry_and_band_monotonicity(
            a in prop::collection::vec(-3.0f64..3.0, 1..25),
            b in prop::collection::vec(-3.0f64..3.0, 1..25),
        ) {
            let ab = dtw_distance(&a, &b, None).unwrap();
            prop_assert!((ab - dtw_distance(&b, &a, None).unwrap()).abs() <= 1e-9);
            prop_assert_eq!(dtw_distance(&a, &a, Some(0)).unwrap(), 0.0);
            let mut last = f64::INFINITY;
            for w in 0..26 {
                let d = dtw_distance(&a, &b, Some(w)).unwrap();
                prop_assert!(d <= last + 1e-12);
                last = d;
            }
            prop_assert!((last - ab).abs() <= 1e-12);
        }
    }

    fn window(xs: Vec<f64>) -> SensorWindow {
        let t = xs.len();
        SensorWindow::new(xs, t, 1, 20.0, Some(0)).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.4).sin() + 0.1 * i as f64).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_similarity(&window(x.clone()), &window(x.clone())).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_similarity(&window(x.clone()), &window(neg)).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson_similarity(&window(vec![2.0; 20]), &window(x.clone())).unwrap(), 0.0);
        assert!(matches!(pearson_similarity(&window(x[..10].to_vec()), &window(x)), Err(StoreError::LengthMismatch(10, 20))));
    }

    #[test]
    fn ccf_recovers_shift() {
        let f = |t: f64| (t * 0.31).sin() + 0.5 * (t * 0.07).cos();
        let a: Vec<f64> = (0..80).map(|i| f(i as f64)).collect();
        assert!((ccf_best_lag(&a, &a, 10).unwrap().0 - 1.0).abs() < 1e-12);
        assert_eq!(ccf_best_lag(&a, &a, 10).unwrap().1, 0);
        for s in [1isize, 3, 7] {
            let delayed: Vec<f64> = (0..80).map(|i| f(i as f64 - s as f64)).collect();
            assert_eq!(ccf_best_lag(&a, &delayed, 10).unwrap().1, s);
            let ahead: Vec<f64> = (0..80).map(|i| f(i as f64 + s as f64)).collect();
            assert_eq!(ccf_best_lag(&a, &ahead, 10).unwrap().1, -s);
        }
        assert_eq!(ccf_similarity(&window(vec![1.0; 30]), &window(vec![1.0; 30]), 5).unwrap(), 0.0);
        assert!(matches!(ccf_best_lag(&a, &a, 80), Err(StoreError::LagTooLarge { .. })));
    }

    #[test]
    fn raw_knn_contracts() {
        let mut spec = SynthSpec::with_defaults(3, 2);
        spec.windows_per_class = 4;
        spec.window_len = 30;
        spec.channels = 2;
        let ds = synth_generate(&spec).unwrap();
        let q = ds.windows()[5].clone();
        for metric in [SeriesMetric::Pearson, SeriesMetric::Ccf { max_lag: 4 }, SeriesMetric::Dtw { band: Some(5) }] {
            let r = raw_series_knn(&ds, &q, 3, metric, ExecMode::Parallel).unwrap();
            assert_eq!(r[0].record_id, 5, "{metric:?}");
            assert_eq!(raw_series_knn(&ds, &q, 100, metric, ExecMode::Sequential).unwrap().len(), ds.len());
            // brute-force re-ranking of all pairwise values
            let mut all: Vec<(f64, usize)> =
                ds.windows().iter().enumerate().map(|(i, w)| (metric.similarity(&q, w).unwrap(), i)).collect();
            all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let ids: Vec<usize> = r.iter().map(|n| n.record_id).collect();
            assert_eq!(ids, all.iter().take(3).map(|x| x.1).collect::<Vec<_>>());
        }
    }
}

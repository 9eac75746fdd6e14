//! Physics-informed window features used as the gate input.
//!
//! Layout for a window with `M` channels, in order:
//!
//! 1. Pearson correlation of every channel pair `(i, j)`, `i < j`;
//! 2. variance of each channel;
//! 3. mean absolute deviation of each channel;
//! 4. zero-crossing rate of each mean-removed channel;
//! 5. range of the variances over sliding sub-windows of each channel.

use thiserror::Error;

use crate::signal::SensorWindow;

/// Sub-window length for the local variance range.
pub const LOCAL_WINDOW: usize = 10;
/// Sub-window stride for the local variance range.
pub const LOCAL_STRIDE: usize = 5;
/// Lower bound applied to every fitted standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a normalizer on an empty set")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    /// `M(M-1)/2 + 4M`.
    pub fn dim_for(channels: usize) -> usize {
        channels * (channels - 1) / 2 + 4 * channels
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64
}

/// Treats a channel as constant when its spread is at rounding level.
fn is_flat(var: f64, mu: f64) -> bool {
    var.sqrt() <= 1e-12 * (1.0 + mu.abs())
}

/// Pearson correlation; 0 when either side has no spread.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let n = a.len() as f64;
    if is_flat(saa / n, ma) || is_flat(sbb / n, mb) {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn mean_abs_dev(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).abs()).sum::<f64>() / xs.len() as f64
}

fn zero_crossing_rate(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    let crossings = xs.windows(2).filter(|p| (p[0] - mu) * (p[1] - mu) < 0.0).count();
    crossings as f64 / (xs.len() - 1) as f64
}

fn local_variance_range(xs: &[f64]) -> f64 {
    if xs.len() <= LOCAL_WINDOW {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut start = 0;
    while start + LOCAL_WINDOW <= xs.len() {
        let v = variance(&xs[start..start + LOCAL_WINDOW]);
        lo = lo.min(v);
        hi = hi.max(v);
        start += LOCAL_STRIDE;
    }
    hi - lo
}

pub fn extract_features(window: &SensorWindow) -> FeatureVector {
    let chans = window.channel_series();
    let m = chans.len();
    let mut out = Vec::with_capacity(FeatureVector::dim_for(m));
    for i in 0..m {
        for j in i + 1..m {
            out.push(pearson(&chans[i], &chans[j]));
        }
    }
    let vars: Vec<f64> = chans.iter().map(|c| variance(c)).collect();
    let flat: Vec<bool> = chans.iter().zip(&vars).map(|(c, v)| is_flat(*v, mean(c))).collect();
    out.extend(vars.iter().zip(&flat).map(|(v, f)| if *f { 0.0 } else { *v }));
    out.extend(chans.iter().zip(&flat).map(|(c, f)| if *f { 0.0 } else { mean_abs_dev(c) }));
    out.extend(chans.iter().zip(&flat).map(|(c, f)| if *f { 0.0 } else { zero_crossing_rate(c) }));
    out.extend(chans.iter().zip(&flat).map(|(c, f)| if *f { 0.0 } else { local_variance_range(c) }));
    FeatureVector(out)
}

/// Per-dimension z-scoring fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, phi: &FeatureVector) -> Result<FeatureVector, FeatureError> {
        normalize(phi, self)
    }
}

/// Population mean and std per dimension, std floored at [`STD_FLOOR`].
pub fn fit_normalizer(features: &[FeatureVector]) -> Result<FeatureNormalizer, FeatureError> {
    let first = features.first().ok_or(FeatureError::EmptySet)?;
    let d = first.len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(FeatureError::DimMismatch { expected: d, got: bad.len() });
    }
    let n = features.len() as f64;
    let mut mu = vec![0.0; d];
    for f in features {
        for (m, v) in mu.iter_mut().zip(&f.0) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in features {
        for ((s, v), m) in var.iter_mut().zip(&f.0).zip(&mu) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(FeatureNormalizer { mean: mu, std })
}

pub fn normalize(phi: &FeatureVector, normalizer: &FeatureNormalizer) -> Result<FeatureVector, FeatureError> {
    if phi.len() != normalizer.dim() {
        return Err(FeatureError::DimMismatch { expected: normalizer.dim(), got: phi.len() });
    }
    Ok(FeatureVector(
        phi.0.iter().zip(&normalizer.mean).zip(&normalizer.std).map(|((v, m), s)| (v - m) / s).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(columns: &[Vec<f64>]) -> SensorWindow {
        SensorWindow::from_channels(columns, 20.0, None).unwrap()
    }

    #[test]
    fn constant_window_is_all_zero() {
        let w = window(&[vec![5.0; 30], vec![-2.0; 30], vec![0.1; 30]]);
        let f = extract_features(&w);
        assert_eq!(f.len(), FeatureVector::dim_for(3));
        assert!(f.0.iter().all(|&v| v == 0.0), "{:?}", f.0);
    }

    #[test]
    fn identical_alternating_channels() {
        let c = vec![1.0, -1.0, 1.0, -1.0];
        let f = extract_features(&window(&[c.clone(), c]));
        // pair corr, var x2, mad x2, zcr x2, lvr x2
        assert_eq!(f.0[0], 1.0);
        assert_eq!(&f.0[5..7], &[1.0, 1.0]);
    }

    #[test]
    fn hand_evaluated_variance_and_mad() {
        let f = extract_features(&window(&[vec![0.0, 1.0, 0.0, 1.0]]));
        assert_eq!(f.0, vec![0.25, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn local_variance_range_by_hand() {
        // sub-windows [0..10) flat, [5..15) half flat half alternating, [10..20) alternating +-1
        let mut xs = vec![0.0; 10];
        xs.extend((0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
        let expected_hi = 1.0;
        let lvr = local_variance_range(&xs);
        assert!((lvr - expected_hi).abs() < 1e-12, "{lvr}");
        assert_eq!(local_variance_range(&xs[..10]), 0.0);
    }

    #[test]
    fn normalizer_examples() {
        let single = fit_normalizer(&[FeatureVector(vec![3.0, -1.0])]).unwrap();
        assert_eq!(single.mean, vec![3.0, -1.0]);
        assert_eq!(single.std, vec![STD_FLOOR; 2]);

        let set = [FeatureVector(vec![0.0]), FeatureVector(vec![2.0])];
        let n = fit_normalizer(&set).unwrap();
        assert_eq!((n.mean[0], n.std[0]), (1.0, 1.0));
        assert_eq!(n, fit_normalizer(&set).unwrap());

        let z = normalize(&FeatureVector(vec![1.0]), &n).unwrap();
        assert_eq!(z.0, vec![0.0]);
        assert_eq!(
            normalize(&FeatureVector(vec![1.0, 2.0]), &n),
            Err(FeatureError::DimMismatch { expected: 1, got: 2 })
        );
        assert_eq!(fit_normalizer(&[]), Err(FeatureError::EmptySet));
    }

    #[test]
    fn normalized_training_set_is_standardized() {
        let set: Vec<FeatureVector> =
            (0..50).map(|i| FeatureVector(vec![i as f64, (i as f64 * 0.7).sin() * 3.0 + 10.0])).collect();
        let n = fit_normalizer(&set).unwrap();
        let z: Vec<FeatureVector> = set.iter().map(|f| normalize(f, &n).unwrap()).collect();
        for d in 0..2 {
            let col: Vec<f64> = z.iter().map(|f| f.0[d]).collect();
            assert!(mean(&col).abs() <= 1e-9);
            assert!((variance(&col).sqrt() - 1.0).abs() <= 1e-9);
        }
    }

    fn arb_window() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..5, 12usize..40).prop_flat_map(|(m, t)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, t), m))
    }

    proptest! {
        #[test]
        fn offset_invariance(cols in arb_window(), offset in -50.0f64..50.0) {
            let base = extract_features(&window(&cols));
            let shifted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v + offset).collect()).collect();
            let moved = extract_features(&window(&shifted));
            for (a, b) in base.0.iter().zip(&moved.0) {
                prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }

        #[test]
        fn scale_covariance(cols in arb_window(), s in 0.1f64..10.0) {
            let m = cols.len();
            let pairs = m * (m - 1) / 2;
            let base = extract_features(&window(&cols));
            let scaled: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v * s).collect()).collect();
            let f = extract_features(&window(&scaled));
            prop_assert_eq!(f.len(), FeatureVector::dim_for(m));
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
            for i in 0..pairs {
                prop_assert!(close(f.0[i], base.0[i]));
            }
            for c in 0..m {
                prop_assert!(close(f.0[pairs + c], base.0[pairs + c] * s * s));
                prop_assert!(close(f.0[pairs + m + c], base.0[pairs + m + c] * s));
                prop_assert!(close(f.0[pairs + 2 * m + c], base.0[pairs + 2 * m + c]));
            }
        }
    }
}

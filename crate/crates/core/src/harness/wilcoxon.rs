use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::average_ranks;
use super::HarnessError;

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
const MIN_PAIRS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// `P(W+ >= observed)`: evidence that `a` tends to exceed `b`.
    pub p_greater: f64,
    /// `P(W+ <= observed)`: evidence that `a` tends to fall below `b`.
    pub p_less: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Paired signed-rank test on `a[i] - b[i]`. Zero differences are dropped;
/// ties share average ranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, HarnessError> {
    if a.len() != b.len() {
        return Err(HarnessError::LengthMismatch(a.len(), b.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(if a.is_empty() { HarnessError::TooFewPairs(0) } else { HarnessError::AllZeroDifferences });
    }
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(HarnessError::TooFewPairs(n));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p_greater, p_less, exact) = if n <= EXACT_MAX_N {
        let (g, l) = exact_tails(&ranks, w_plus);
        (g, l, true)
    } else {
        let (g, l) = normal_tails(&ranks, w_plus);
        (g, l, false)
    };
    Ok(WilcoxonResult {
        n,
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_greater,
        p_less,
        p_two_sided: (2.0 * p_greater.min(p_less)).min(1.0),
        exact,
    })
}

/// Null distribution of `W+` by subset-sum counting over doubled ranks
/// (average ranks are multiples of 1/2, so doubling makes them integral).
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let obs = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let ge: f64 = counts[obs..].iter().sum();
    let le: f64 = counts[..=obs].iter().sum();
    (ge / all, le / all)
}

/// Normal approximation with tie-corrected variance and continuity correction.
fn normal_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let ge = 1.0 - std_normal.cdf((w_plus - 0.5 - mean) / sd);
    let le = std_normal.cdf((w_plus + 0.5 - mean) / sd);
    (ge.min(1.0), le.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every sign assignment of the ranks directly.
    fn brute_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
        let n = ranks.len();
        let (mut ge, mut le) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if w >= w_plus - 1e-9 {
                ge += 1;
            }
            if w <= w_plus + 1e-9 {
                le += 1;
            }
        }
        let all = (1u64 << n) as f64;
        (ge as f64 / all, le as f64 / all)
    }

    #[test]
    fn five_positive_differences() {
        let a = [2.0, 4.0, 6.0, 8.0, 10.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_greater, 0.03125);
        assert_eq!(r.p_two_sided, 0.0625);
        assert!(r.exact);
        let flipped = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(flipped.p_less, 0.03125);
    }

    #[test]
    fn degenerate_inputs() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(HarnessError::AllZeroDifferences)));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0, 2.0, 3.0, 3.0, 5.0]),
            Err(HarnessError::TooFewPairs(2))
        ));
        assert!(matches!(wilcoxon_signed_rank(&a, &a[..3]), Err(HarnessError::LengthMismatch(5, 3))));
    }

    #[test]
    fn symmetric_differences_are_insignificant() {
        let d = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0];
        let zeros = [0.0; 8];
        let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
        assert_eq!(r.w_plus, r.w_minus);
        assert!(r.p_two_sided >= 0.9);
    }

    #[test]
    fn large_n_uses_normal_approximation() {
        let a: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let b = vec![0.0; 30];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_greater < 1e-5);
        assert!(r.p_less > 0.999);
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(d in prop::collection::vec(prop_oneof![-5i32..=-1, 1i32..=5], 5..=12)) {
            let a: Vec<f64> = d.iter().map(|&x| x as f64).collect();
            let r = wilcoxon_signed_rank(&a, &vec![0.0; a.len()]).unwrap();
            let ranks = average_ranks(&a.iter().map(|x| x.abs()).collect::<Vec<_>>());
            let (ge, le) = brute_tails(&ranks, r.w_plus);
            prop_assert!((r.p_greater - ge).abs() < 1e-12);
            prop_assert!((r.p_less - le).abs() < 1e-12);
            prop_assert!((r.w_plus + r.w_minus - (a.len() * (a.len() + 1)) as f64 / 2.0).abs() < 1e-9);
        }
    }
}

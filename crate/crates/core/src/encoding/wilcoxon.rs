//! Wilcoxon signed-rank test for paired samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size evaluated by full sign enumeration.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Average ranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p-value: enumerates all `2^n` sign assignments of `ranks`
/// and counts those whose positive-rank sum is at most `statistic`.
pub fn exact_p_value(ranks: &[f64], statistic: f64) -> f64 {
    let n = ranks.len();
    assert!(n <= 30, "sign enumeration limited to n <= 30");
    // ranks are multiples of 1/2, so doubled sums are exact integers
    let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
    let threshold = (2.0 * statistic).round() as u64;
    let total = 1usize << n;
    let mut sums = vec![0u64; total];
    let mut count = 1u64; // empty set
    for mask in 1..total {
        let low = mask.trailing_zeros() as usize;
        let s = sums[mask & (mask - 1)] + doubled[low];
        sums[mask] = s;
        if s <= threshold {
            count += 1;
        }
    }
    (2.0 * count as f64 / total as f64).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
pub fn normal_p_value(ranks: &[f64], statistic: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((statistic - mean + 0.5) / var.sqrt()).min(0.0);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.cdf(z)).min(1.0)
}

/// Paired two-sided signed-rank test of `a` against `b`. Zero differences are
/// dropped; the p-value is exact for up to [`EXACT_MAX_N`] pairs.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wilcoxon sample".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::IdenticalSamples);
    }
    if diffs.len() < 5 {
        return Err(Error::TooFewDifferences(diffs.len()));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = diffs.len();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    let statistic = w_plus.min(w_minus);
    let exact = n <= EXACT_MAX_N;
    let p_value = if exact {
        exact_p_value(&ranks, statistic)
    } else {
        normal_p_value(&ranks, statistic)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        n,
        p_value,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn all_positive_five_pairs() {
        let a = [1.1, 2.3, 3.0, 4.8, 5.5];
        let b = [1.0, 2.0, 2.5, 4.0, 4.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.w_plus, 15.0);
        assert!(r.exact);
        assert_eq!(r.p_value, 0.0625);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::IdenticalSamples)
        );
        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0, 2.0, 2.0]),
            Err(Error::TooFewDifferences(2))
        );
    }

    #[test]
    fn symmetric_noise_is_not_significant() {
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let eps = [1e-3, -1e-3, 2e-3, -2e-3, 3e-3, -3e-3];
        let a: Vec<f64> = b.iter().zip(eps).map(|(x, e)| x + e).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(r.p_value >= 0.5, "p = {}", r.p_value);
    }
}

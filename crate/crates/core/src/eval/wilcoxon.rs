//! Wilcoxon signed-rank test for paired metric differences.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{JbfError, Result};

/// Fewest nonzero differences accepted.
pub const MIN_SAMPLES: usize = 5;
/// Largest sample size evaluated with the exact null distribution.
pub const EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub exact: bool,
}

/// Ranks of `values` (1-based), with ties given their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Two-sided signed-rank test. Zero differences are dropped and tied
/// magnitudes share their average rank. Up to [`EXACT_MAX`] samples the
/// p-value is the exact fraction of the `2^n` sign assignments whose
/// statistic is at most the observed one; beyond that a normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
        return Err(JbfError::NonFinite { index: i });
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n < MIN_SAMPLES {
        return Err(JbfError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: n,
        });
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let (p_value, exact) = if n <= EXACT_MAX {
        (exact_p(&ranks, statistic), true)
    } else {
        (normal_p(&magnitudes, &ranks, statistic), false)
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        p_value,
        n,
        exact,
    })
}

/// Exact null distribution of `W+` by dynamic programming over doubled
/// (integer) ranks.
fn exact_p(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    let observed = (2.0 * statistic).round() as usize;
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s).min(total - s) <= observed)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / 2f64.powi(ranks.len() as i32)
}

fn normal_p(magnitudes: &[f64], ranks: &[f64], statistic: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * standard.sf(z)).min(1.0)
}

//! Wilcoxon rank-sum (Mann-Whitney) test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is
/// enumerated.
pub const EXACT_MAX_N: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankSumMethod {
    /// Exact for small samples, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Sum of the mid-ranks of `x` in the pooled sample.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: RankSumMethod,
}

/// Mid-ranks (1-based) of the pooled values and the tie-group sizes.
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<RankSumTest> {
    wilcoxon_rank_sum_with(x, y, RankSumMethod::Auto)
}

/// Two-sided rank-sum test of `x` against `y`.
///
/// The exact p-value is the share of all `C(n, |x|)` rank assignments whose
/// sum is at least as far from its mean as the observed one. The normal
/// approximation uses the tie-corrected variance and a 0.5 continuity
/// correction.
pub fn wilcoxon_rank_sum_with(x: &[f64], y: &[f64], method: RankSumMethod) -> Result<RankSumTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let w: f64 = ranks[..n1].iter().sum();
    let expected = n1 as f64 * (n + 1) as f64 / 2.0;
    let method = match method {
        RankSumMethod::Auto if n <= EXACT_MAX_N => RankSumMethod::Exact,
        RankSumMethod::Auto => RankSumMethod::Normal,
        m => m,
    };
    let p_value = match method {
        RankSumMethod::Exact => exact_p(&ranks, n1, (w - expected).abs(), expected),
        _ => {
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1).max(1)) as f64;
            let var = n1 as f64 * n2 as f64 / 12.0 * ((n + 1) as f64 - tie_term);
            if var <= 0.0 {
                1.0
            } else {
                let z = ((w - expected).abs() - 0.5).max(0.0) / var.sqrt();
                erfc(z / std::f64::consts::SQRT_2).min(1.0)
            }
        }
    };
    Ok(RankSumTest {
        statistic: w,
        p_value,
        method,
    })
}

fn exact_p(ranks: &[f64], n1: usize, observed_dev: f64, expected: f64) -> f64 {
    // enumerate every n1-subset of pooled positions by bitmask
    let n = ranks.len();
    assert!(n <= 30, "exact enumeration is limited to small samples");
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if (s - expected).abs() >= observed_dev - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

//! Better-or-comparable counting and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::metrics::average_ranks;

/// Largest sample size for which the automatic method enumerates signs.
pub const EXACT_MAX_N: usize = 20;
pub const MIN_NONZERO_DIFFS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("need at least {MIN_NONZERO_DIFFS} non-zero differences, got {0}")]
    TooFewDifferences(usize),
    #[error("differences must be finite")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::HigherIsBetter => Direction::LowerIsBetter,
            Direction::LowerIsBetter => Direction::HigherIsBetter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BocCounts {
    pub a_wins: usize,
    pub b_wins: usize,
    pub draws: usize,
}

impl BocCounts {
    /// Datasets where `a` is better or comparable.
    pub fn boc_a(&self) -> usize {
        self.a_wins + self.draws
    }

    pub fn boc_b(&self) -> usize {
        self.b_wins + self.draws
    }
}

/// Per dataset: a draw when `|a - b| <= epsilon`, otherwise a win for the
/// better side.
pub fn boc_compare(a: &[f64], b: &[f64], epsilon: f64, direction: Direction) -> Result<BocCounts, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if !(epsilon >= 0.0) {
        return Err(StatsError::NegativeEpsilon(epsilon));
    }
    // absorbs decimal representation error, e.g. |0.81 - 0.80| > 0.01 in binary
    let tolerance = epsilon * (1.0 + 1e-9);
    let mut counts = BocCounts { a_wins: 0, b_wins: 0, draws: 0 };
    for (&x, &y) in a.iter().zip(b) {
        if (x - y).abs() <= tolerance {
            counts.draws += 1;
        } else if (x > y) == (direction == Direction::HigherIsBetter) {
            counts.a_wins += 1;
        } else {
            counts.b_wins += 1;
        }
    }
    Ok(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// differences tend to be positive
    Greater,
    /// differences tend to be negative
    Less,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// exact for n <= 20, normal approximation above
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// min(W+, W-)
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank_with(diffs, alternative, WilcoxonMethod::Auto)
}

/// Signed-rank test on paired differences. Zero differences are dropped;
/// tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank_with(
    diffs: &[f64],
    alternative: Alternative,
    method: WilcoxonMethod,
) -> Result<WilcoxonResult, StatsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nonzero.len();
    if n < MIN_NONZERO_DIFFS {
        return Err(StatsError::TooFewDifferences(n));
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p_value = match method {
        WilcoxonMethod::Exact => exact_p(&ranks, w_plus, alternative),
        _ => normal_p(&magnitudes, n, w_plus, alternative),
    };
    Ok(WilcoxonResult { statistic: w_plus.min(w_minus), w_plus, w_minus, n, p_value, method })
}

/// Distribution of W+ over all 2^n equally likely sign assignments,
/// counted on doubled ranks so average ranks stay integral.
fn exact_p(ranks: &[f64], w_plus: f64, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max_sum + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let assignments = 2f64.powi(ranks.len() as i32);
    let observed = (2.0 * w_plus).round() as usize;
    let upper = counts[observed..].iter().sum::<f64>() / assignments;
    let lower = counts[..=observed].iter().sum::<f64>() / assignments;
    match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
fn normal_p(magnitudes: &[f64], n: usize, w_plus: f64, alternative: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    let diff = w_plus - mean;
    match alternative {
        Alternative::Greater => std_normal.sf((diff - 0.5) / sd),
        Alternative::Less => std_normal.cdf((diff + 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((diff.abs() - 0.5).max(0.0)) / sd;
            (2.0 * std_normal.sf(z)).min(1.0)
        }
    }
}

//! Fixed-length dataset meta-features: descriptive statistics (slots 0-13)
//! and correlation aggregates (slots 14-23).
//!
//! | slot | meaning |
//! |------|---------|
//! | 0 | rows |
//! | 1 | feature columns (all but the target) |
//! | 2, 3 | numeric / categorical feature columns |
//! | 4 | features per row |
//! | 5 | fraction of missing feature cells |
//! | 6 | fraction of feature columns with a missing cell |
//! | 7, 8, 9 | class count, majority-class fraction, normalized class entropy (classification) |
//! | 10 | target variance (regression) |
//! | 11, 12 | mean of numeric feature means / standard deviations |
//! | 13 | mean categorical cardinality |
//! | 14-17 | mean, std, max, min of \|r(feature, target)\| |
//! | 18-20 | mean, std, max of \|r\| over numeric feature pairs |
//! | 21 | fraction of feature pairs with \|r\| > 0.8 |
//! | 22 | fraction of numeric features with \|r(feature, target)\| > 0.5 |
//! | 23 | number of numeric feature pairs |
//!
//! Undefined statistics are 0. Class labels are coded by their sorted order
//! before correlating with the target. Standard deviations and variances are
//! population (divide by n) statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::tabular::{ColumnData, TabularDataset, Task};

pub const META_FEATURE_COUNT: usize = 24;
pub const META_SCHEMA_VERSION: u32 = 1;

pub const HIGH_PAIR_CORRELATION: f64 = 0.8;
pub const HIGH_TARGET_CORRELATION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub values: [f64; META_FEATURE_COUNT],
    pub schema_version: u32,
}

impl MetaFeatureVector {
    pub fn new(values: [f64; META_FEATURE_COUNT]) -> Self {
        MetaFeatureVector { values, schema_version: META_SCHEMA_VERSION }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn max_or_zero(xs: &[f64]) -> f64 {
    xs.iter().copied().reduce(f64::max).unwrap_or(0.0)
}

fn min_or_zero(xs: &[f64]) -> f64 {
    xs.iter().copied().reduce(f64::min).unwrap_or(0.0)
}

fn fraction_above(xs: &[f64], threshold: f64) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().filter(|&&x| x > threshold).count() as f64 / xs.len() as f64
    }
}

/// Pearson correlation over rows where both cells are present. Fewer than
/// two complete rows, or a constant side, gives 0.
pub fn pearson(x: &[Option<f64>], y: &[Option<f64>]) -> f64 {
    let pairs: Vec<(f64, f64)> =
        x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    if pairs.len() < 2 {
        return 0.0;
    }
    let constant = |sel: fn(&(f64, f64)) -> f64| {
        let first = sel(&pairs[0]);
        pairs.iter().all(|p| sel(p) == first)
    };
    if constant(|p| p.0) || constant(|p| p.1) {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return 0.0;
    }
    (sxy / denom).clamp(-1.0, 1.0)
}

/// Numeric view of the target: values as-is for regression, sorted-label
/// codes for classification.
fn target_codes(d: &TabularDataset) -> Vec<Option<f64>> {
    match &d.target().data {
        ColumnData::Numeric(cells) => cells.clone(),
        ColumnData::Categorical(cells) => {
            let codes: BTreeMap<&str, f64> = d
                .target()
                .categories()
                .into_iter()
                .enumerate()
                .map(|(i, label)| (label, i as f64))
                .collect();
            cells.iter().map(|c| c.as_deref().map(|l| codes[l])).collect()
        }
    }
}

pub fn extract_meta_features(d: &TabularDataset) -> MetaFeatureVector {
    let mut v = [0.0; META_FEATURE_COUNT];
    let n_rows = d.n_rows();
    let features: Vec<_> = d.features().collect();
    let numeric: Vec<&[Option<f64>]> = features
        .iter()
        .filter_map(|c| match &c.data {
            ColumnData::Numeric(cells) => Some(cells.as_slice()),
            ColumnData::Categorical(_) => None,
        })
        .collect();
    let categorical: Vec<_> =
        features.iter().filter(|c| matches!(c.data, ColumnData::Categorical(_))).collect();

    v[0] = n_rows as f64;
    v[1] = features.len() as f64;
    v[2] = numeric.len() as f64;
    v[3] = categorical.len() as f64;
    v[4] = features.len() as f64 / n_rows as f64;
    if !features.is_empty() {
        let missing: usize = features.iter().map(|c| c.missing_count()).sum();
        v[5] = missing as f64 / (features.len() * n_rows) as f64;
        let with_missing = features.iter().filter(|c| c.missing_count() > 0).count();
        v[6] = with_missing as f64 / features.len() as f64;
    }

    match d.task() {
        Task::Classification => {
            if let ColumnData::Categorical(cells) = &d.target().data {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for label in cells.iter().flatten() {
                    *counts.entry(label.as_str()).or_default() += 1;
                }
                let k = counts.len();
                v[7] = k as f64;
                let total = n_rows as f64;
                v[8] = counts.values().copied().max().unwrap_or(0) as f64 / total;
                if k > 1 {
                    let entropy: f64 = counts
                        .values()
                        .map(|&c| {
                            let p = c as f64 / total;
                            -p * p.log2()
                        })
                        .sum();
                    v[9] = entropy / (k as f64).log2();
                }
            }
        }
        Task::Regression => {
            if let ColumnData::Numeric(cells) = &d.target().data {
                let ys: Vec<f64> = cells.iter().flatten().copied().collect();
                let s = std_dev(&ys);
                v[10] = s * s;
            }
        }
    }

    let present: Vec<Vec<f64>> =
        numeric.iter().map(|c| c.iter().flatten().copied().collect()).collect();
    v[11] = mean(&present.iter().map(|p| mean(p)).collect::<Vec<_>>());
    v[12] = mean(&present.iter().map(|p| std_dev(p)).collect::<Vec<_>>());
    v[13] = mean(&categorical.iter().map(|c| c.categories().len() as f64).collect::<Vec<_>>());

    let target = target_codes(d);
    let target_corr: Vec<f64> = numeric.iter().map(|c| pearson(c, &target).abs()).collect();
    v[14] = mean(&target_corr);
    v[15] = std_dev(&target_corr);
    v[16] = max_or_zero(&target_corr);
    v[17] = min_or_zero(&target_corr);

    let mut pair_corr = Vec::new();
    for i in 0..numeric.len() {
        for j in i + 1..numeric.len() {
            pair_corr.push(pearson(numeric[i], numeric[j]).abs());
        }
    }
    v[18] = mean(&pair_corr);
    v[19] = std_dev(&pair_corr);
    v[20] = max_or_zero(&pair_corr);
    v[21] = fraction_above(&pair_corr, HIGH_PAIR_CORRELATION);
    v[22] = fraction_above(&target_corr, HIGH_TARGET_CORRELATION);
    v[23] = pair_corr.len() as f64;

    MetaFeatureVector::new(v)
}

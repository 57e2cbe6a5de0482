//! Pairwise logistic ranking loss and training-pair selection.
//!
//! For an ordered pair `(i, j)` with `label[i] > label[j]` the loss is
//! `log(1 + exp(-(s_i - s_j)))`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RankError;

/// `1 / (1 + exp(d))`, i.e. sigmoid(-d), without overflow.
fn sigmoid_neg(d: f64) -> f64 {
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// `log(1 + exp(-d))` without overflow.
pub fn pair_loss(d: f64) -> f64 {
    if d >= 0.0 {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

/// Total loss over `pairs`.
pub fn pairwise_loss(scores: &[f64], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| pair_loss(scores[i] - scores[j])).sum()
}

/// First and second derivatives of the total pairwise loss with respect
/// to each score. Every pair must be ordered so `labels[i] > labels[j]`.
pub fn pairwise_gradients(
    scores: &[f64],
    labels: &[f64],
    pairs: &[(usize, usize)],
) -> Result<(Vec<f64>, Vec<f64>), RankError> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| !(labels[i] > labels[j])) {
        return Err(RankError::MisorderedPair { i, j });
    }
    let mut grad = vec![0.0; scores.len()];
    let mut hess = vec![0.0; scores.len()];
    accumulate_gradients(scores, pairs, &mut grad, &mut hess);
    Ok((grad, hess))
}

pub(crate) fn accumulate_gradients(
    scores: &[f64],
    pairs: &[(usize, usize)],
    grad: &mut [f64],
    hess: &mut [f64],
) {
    // sigmoid(-(s_i - s_j)) = e_j / (e_i + e_j) with e = exp(s - max), one
    // exp per item instead of per pair; falls back when the spread of
    // scores under- or overflows
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let usable = e.iter().all(|v| v.is_normal());
    for &(i, j) in pairs {
        let sigma = if usable { e[j] / (e[i] + e[j]) } else { sigmoid_neg(scores[i] - scores[j]) };
        let h = sigma * (1.0 - sigma);
        grad[i] -= sigma;
        grad[j] += sigma;
        hess[i] += h;
        hess[j] += h;
    }
}

/// Number of index pairs whose labels differ.
pub(crate) fn count_ordered_pairs(labels: &[f64]) -> usize {
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut tied = 0usize;
    let mut start = 0;
    for end in 1..=n {
        if end == n || sorted[end] != sorted[start] {
            let run = end - start;
            tied += run * (run - 1) / 2;
            start = end;
        }
    }
    n * n.saturating_sub(1) / 2 - tied
}

/// Every pair with differing labels, oriented better-first.
pub(crate) fn all_pairs(labels: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] > labels[j] {
                pairs.push((i, j));
            } else if labels[j] > labels[i] {
                pairs.push((j, i));
            }
        }
    }
    pairs
}

/// `count` pairs drawn uniformly with replacement among index pairs with
/// differing labels. The caller guarantees at least one such pair exists.
pub(crate) fn sample_pairs(labels: &[f64], count: usize, seed: u64, stream: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = labels.len() as u64;
    // both indices from one draw; multiply-shift bias is below n / 2^32
    let pick = |bits: u64| (((bits & 0xffff_ffff) * n) >> 32) as usize;
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let word = rng.next_u64();
        let (i, j) = (pick(word), pick(word >> 32));
        if labels[i] > labels[j] {
            pairs.push((i, j));
        } else if labels[j] > labels[i] {
            pairs.push((j, i));
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_scores_give_half_gradients() {
        let (g, h) = pairwise_gradients(&[0.3, 0.3], &[1.0, 0.0], &[(0, 1)]).unwrap();
        assert_eq!(g, vec![-0.5, 0.5]);
        assert_eq!(h, vec![0.25, 0.25]);
    }

    #[test]
    fn well_separated_pair_stops_pushing() {
        let (g, h) = pairwise_gradients(&[800.0, -800.0], &[1.0, 0.0], &[(0, 1)]).unwrap();
        assert!(g[0].abs() < 1e-300 && g[1].abs() < 1e-300);
        assert!(h[0] < 1e-300);
        // and the reverse stays finite
        let (g, h) = pairwise_gradients(&[-800.0, 800.0], &[1.0, 0.0], &[(0, 1)]).unwrap();
        assert_eq!(g, vec![-1.0, 1.0]);
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn misordered_pair_is_rejected() {
        assert!(matches!(
            pairwise_gradients(&[0.0, 0.0], &[0.0, 1.0], &[(0, 1)]),
            Err(RankError::MisorderedPair { i: 0, j: 1 })
        ));
        assert!(pairwise_gradients(&[0.0, 0.0], &[1.0, 1.0], &[(0, 1)]).is_err());
    }

    #[test]
    fn loss_is_stable() {
        assert_relative_eq!(pair_loss(0.0), std::f64::consts::LN_2);
        assert_eq!(pair_loss(-1000.0), 1000.0);
        assert!(pair_loss(1000.0) >= 0.0 && pair_loss(1000.0) < 1e-300);
    }

    #[test]
    fn pair_counting() {
        let labels = [1.0, 1.0, 2.0, 3.0, 3.0, 3.0];
        assert_eq!(count_ordered_pairs(&labels), all_pairs(&labels).len());
        assert_eq!(count_ordered_pairs(&[5.0; 4]), 0);
        assert_eq!(count_ordered_pairs(&[]), 0);
    }

    #[test]
    fn sampled_pairs_are_oriented_and_deterministic() {
        let labels: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let a = sample_pairs(&labels, 300, 9, 3);
        assert_eq!(a, sample_pairs(&labels, 300, 9, 3));
        assert_ne!(a, sample_pairs(&labels, 300, 9, 4));
        assert!(a.iter().all(|&(i, j)| labels[i] > labels[j]));
    }
}

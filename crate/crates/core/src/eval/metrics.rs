//! Per-fold ranking quality measures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rescales to [0, 1]; a constant input maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// Discounted cumulative gain of the first `k` gains, linear gain and
/// `1 / log2(position + 1)` discount with 1-based positions.
pub fn dcg_at_k(gains: &[f64], k: usize) -> f64 {
    gains.iter().take(k).enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// NDCG@k of relevances listed in predicted order. When every relevance
/// is zero any order is ideal and the result is 1.
pub fn ndcg_at_k(relevance_in_rank_order: &[f64], k: usize) -> f64 {
    let mut ideal = relevance_in_rank_order.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg <= 0.0 {
        return 1.0;
    }
    (dcg_at_k(relevance_in_rank_order, k) / idcg).clamp(0.0, 1.0)
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
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

/// Spearman rank correlation; 0 if either side is constant or shorter
/// than two.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs paired samples");
    if a.len() < 2 {
        return 0.0;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Best label among the first `k` entries (all entries if fewer).
pub fn best_in_top_k(labels_in_rank_order: &[f64], k: usize) -> f64 {
    labels_in_rank_order.iter().take(k.max(1)).copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Best overall label minus the best label in the top `k`.
pub fn regret_at_k(labels_in_rank_order: &[f64], k: usize) -> f64 {
    let best = labels_in_rank_order.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    best - best_in_top_k(labels_in_rank_order, k)
}

/// Mean regret@k of `n_seeds` uniformly random orderings.
pub fn random_ranking_regret(labels: &[f64], k: usize, n_seeds: u64, base_seed: u64) -> f64 {
    if labels.is_empty() || n_seeds == 0 {
        return 0.0;
    }
    let total: f64 = (0..n_seeds)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s));
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng);
            regret_at_k(&shuffled, k)
        })
        .sum();
    total / n_seeds as f64
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ndcg_hand_computed() {
        // DCG = 2 + 3/log2(3) + 1/2, IDCG = 3 + 2/log2(3) + 1/2
        let dcg = 2.0 + 3.0 / 3f64.log2() + 0.5;
        let idcg = 3.0 + 2.0 / 3f64.log2() + 0.5;
        assert_relative_eq!(dcg, 4.392789260714372, epsilon = 1e-12);
        assert_relative_eq!(idcg, 4.761859507142915, epsilon = 1e-12);
        assert_relative_eq!(ndcg_at_k(&[2.0, 3.0, 1.0], 3), dcg / idcg, epsilon = 1e-12);
        assert_relative_eq!(ndcg_at_k(&[2.0, 3.0, 1.0], 3), 0.9224945, epsilon = 1e-6);
    }

    #[test]
    fn ndcg_edge_cases() {
        assert_eq!(ndcg_at_k(&[3.0, 2.0, 2.0, 0.0], 2), 1.0);
        assert_eq!(ndcg_at_k(&[0.0, 0.0], 1), 1.0);
        assert_eq!(ndcg_at_k(&[0.0, 1.0], 1), 0.0);
    }

    #[test]
    fn spearman_reversed_and_identical() {
        let truth = [5.0, 4.0, 3.0, 2.0, 1.0];
        let reversed = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_relative_eq!(spearman(&reversed, &truth), -1.0);
        assert_relative_eq!(spearman(&truth, &truth), 1.0);
        assert_eq!(spearman(&[1.0; 5], &truth), 0.0);
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn regret_examples() {
        let labels = [0.7, 0.9, 0.8];
        assert_relative_eq!(regret_at_k(&labels, 1), 0.2, epsilon = 1e-12);
        assert_eq!(regret_at_k(&labels, 2), 0.0);
        assert_eq!(regret_at_k(&labels, 10), 0.0);
        assert_eq!(regret_at_k(&[0.9, 0.1], 1), 0.0);
    }

    #[test]
    fn random_regret_is_deterministic_and_bounded() {
        let labels: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let a = random_ranking_regret(&labels, 10, 20, 3);
        assert_eq!(a, random_ranking_regret(&labels, 10, 20, 3));
        assert!(a > 0.0 && a < 0.98);
        assert_eq!(random_ranking_regret(&labels, 50, 20, 3), 0.0);
    }

    #[test]
    fn normalization() {
        assert_eq!(min_max_normalize(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max_normalize(&[1.0, 1.0]), vec![0.0, 0.0]);
    }
}

//! Gradient boosting with the pairwise objective.

use serde::{Deserialize, Serialize};

use super::objective::{accumulate_gradients, all_pairs, count_ordered_pairs, pairwise_loss, sample_pairs};
use super::tree::{grow_tree, BinnedMatrix, FitTargets, RegressionTree, TreeParams};
use super::{RankConfig, RankError, TrainingGroup};
use crate::par::Execution;

/// L2 penalty on leaf values.
pub const LEAF_LAMBDA: f64 = 1.0;
/// Smallest hessian used when forming Newton targets.
pub const HESSIAN_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl Booster {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.learning_rate * t.predict(row)).sum::<f64>()
    }
}

/// Result of [`fit_traced`]: the booster and the total pairwise loss over
/// each round's training pairs, measured before the round's tree is added
/// and once more at the end.
pub struct TrainTrace {
    pub booster: Booster,
    pub losses: Vec<f64>,
}

pub fn fit(groups: &[TrainingGroup], config: &RankConfig, exec: Execution) -> Result<Booster, RankError> {
    Ok(fit_inner(groups, config, exec, false)?.booster)
}

pub fn fit_traced(groups: &[TrainingGroup], config: &RankConfig, exec: Execution) -> Result<TrainTrace, RankError> {
    fit_inner(groups, config, exec, true)
}

struct GroupLayout<'a> {
    offset: usize,
    labels: &'a [f64],
    /// fixed pair list when every ordered pair fits under the cap
    fixed: Option<Vec<(usize, usize)>>,
    has_pairs: bool,
}

fn fit_inner(
    groups: &[TrainingGroup],
    config: &RankConfig,
    exec: Execution,
    trace: bool,
) -> Result<TrainTrace, RankError> {
    config.validate()?;
    let width = groups.iter().flat_map(|g| g.feature_rows.first()).map(Vec::len).next().unwrap_or(0);
    let mut layout = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        if g.feature_rows.len() != g.labels.len() {
            return Err(RankError::RaggedGroup(g.dataset_id.clone()));
        }
        if let Some(row) = g.feature_rows.iter().find(|r| r.len() != width) {
            return Err(RankError::WidthMismatch { expected: width, found: row.len() });
        }
        let ordered = count_ordered_pairs(&g.labels);
        layout.push(GroupLayout {
            offset,
            labels: &g.labels,
            fixed: (ordered <= config.max_pairs_per_group).then(|| all_pairs(&g.labels)),
            has_pairs: ordered > 0,
        });
        offset += g.labels.len();
    }
    if !layout.iter().any(|l| l.has_pairs) {
        return Err(RankError::NoPairs);
    }

    let rows: Vec<&[f64]> = groups.iter().flat_map(|g| g.feature_rows.iter().map(Vec::as_slice)).collect();
    let matrix = BinnedMatrix::new(&rows, width);
    let n = matrix.n_rows();
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        lambda: LEAF_LAMBDA,
    };

    let base_score = 0.0;
    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut losses = Vec::new();

    let mut last_pairs: Vec<Vec<(usize, usize)>> = Vec::new();
    for round in 0..config.n_trees {
        let round_pairs: Vec<Vec<(usize, usize)>> = exec.map_range(layout.len(), |gi| {
            let l = &layout[gi];
            match &l.fixed {
                Some(p) => p.clone(),
                None if !l.has_pairs => Vec::new(),
                None => {
                    let stream = ((round as u64) << 32) | gi as u64;
                    sample_pairs(l.labels, config.max_pairs_per_group, config.seed, stream)
                }
            }
        });
        let per_group: Vec<(Vec<f64>, Vec<f64>)> = exec.map_range(layout.len(), |gi| {
            let l = &layout[gi];
            let len = l.labels.len();
            let (mut g, mut h) = (vec![0.0; len], vec![0.0; len]);
            accumulate_gradients(&scores[l.offset..l.offset + len], &round_pairs[gi], &mut g, &mut h);
            (g, h)
        });
        let grad: Vec<f64> = per_group.iter().flat_map(|p| p.0.iter().copied()).collect();
        let hess: Vec<f64> = per_group.iter().flat_map(|p| p.1.iter().copied()).collect();
        let target: Vec<f64> = grad.iter().zip(&hess).map(|(g, h)| -g / h.max(HESSIAN_FLOOR)).collect();

        if trace {
            losses.push(total_loss(&layout, &scores, &round_pairs));
        }
        let (tree, row_values) =
            grow_tree(&matrix, &FitTargets { target: &target, grad: &grad, hess: &hess }, params, exec);
        for (s, v) in scores.iter_mut().zip(&row_values) {
            *s += config.learning_rate * v;
        }
        trees.push(tree);
        if trace {
            last_pairs = round_pairs;
        }
    }
    if trace {
        losses.push(total_loss(&layout, &scores, &last_pairs));
    }

    Ok(TrainTrace { booster: Booster { base_score, learning_rate: config.learning_rate, trees }, losses })
}

fn total_loss(layout: &[GroupLayout<'_>], scores: &[f64], pairs: &[Vec<(usize, usize)>]) -> f64 {
    layout
        .iter()
        .zip(pairs)
        .map(|(l, p)| pairwise_loss(&scores[l.offset..l.offset + l.labels.len()], p))
        .sum()
}

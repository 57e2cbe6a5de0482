//! Regression trees grown greedily on exact thresholds.
//!
//! Each feature is mapped once to the sorted list of its distinct values;
//! rows carry the index of their value. A node then scans value indices in
//! order, which visits exactly the thresholds a sort-based exact search
//! would, without re-sorting per node. Only the smaller child of a split
//! is scanned; the larger one's bin totals come from the parent's.

use serde::{Deserialize, Serialize};

use crate::par::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    /// Rows with `row[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { leaf: f64 },
}

/// Flat binary tree; node 0 is the root and children always have larger
/// indices than their parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree { nodes: vec![TreeNode::Leaf { leaf: value }] }
    }

    /// One split on `feature` at `threshold`.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Self {
        RegressionTree {
            nodes: vec![
                TreeNode::Split { feature, threshold, left: 1, right: 2 },
                TreeNode::Leaf { leaf: left },
                TreeNode::Leaf { leaf: right },
            ],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { leaf } => return leaf,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Structural check for trees read from disk: child links point forward
    /// and in range, every node is reachable exactly once, features fit
    /// `width`, values are finite.
    pub fn check(&self, width: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { leaf } if !leaf.is_finite() => {
                    return Err(format!("node {i} has a non-finite leaf value"))
                }
                TreeNode::Leaf { .. } => {}
                TreeNode::Split { feature, threshold, left, right } => {
                    if feature >= width {
                        return Err(format!("node {i} splits feature {feature}, row width is {width}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    for child in [left, right] {
                        if child <= i || child >= self.nodes.len() {
                            return Err(format!("node {i} has invalid child {child}"));
                        }
                        parents[child] += 1;
                    }
                }
            }
        }
        if let Some(i) = (1..self.nodes.len()).find(|&i| parents[i] != 1) {
            return Err(format!("node {i} is referenced {} times", parents[i]));
        }
        Ok(())
    }
}

/// Feature matrix with every value replaced by its rank among the
/// feature's distinct values.
pub(crate) struct BinnedMatrix {
    n_rows: usize,
    /// `bins[f][row]`
    bins: Vec<Vec<u32>>,
    /// `values[f]`: sorted distinct values of feature `f`
    values: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub(crate) fn new(rows: &[&[f64]], width: usize) -> Self {
        let mut bins = Vec::with_capacity(width);
        let mut values = Vec::with_capacity(width);
        for f in 0..width {
            let mut distinct: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let col = rows
                .iter()
                .map(|r| distinct.binary_search_by(|v| v.total_cmp(&r[f])).expect("value present") as u32)
                .collect();
            bins.push(col);
            values.push(distinct);
        }
        BinnedMatrix { n_rows: rows.len(), bins, values }
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn width(&self) -> usize {
        self.bins.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug)]
struct SplitChoice {
    gain: f64,
    feature: usize,
    /// rows with bin <= last_left_bin go left
    last_left_bin: u32,
    threshold: f64,
}

/// Per-row quantities the tree is fitted to.
pub(crate) struct FitTargets<'a> {
    /// regression targets for split search
    pub target: &'a [f64],
    pub grad: &'a [f64],
    pub hess: &'a [f64],
}

const PARALLEL_SPLIT_WORK: usize = 1 << 16;

/// Row count and target sum per bin, for every feature.
struct Histogram {
    counts: Vec<Vec<u32>>,
    sums: Vec<Vec<f64>>,
}

impl Histogram {
    /// `self - child`, the histogram of the sibling.
    fn minus(mut self, child: &Histogram) -> Histogram {
        for (c, cc) in self.counts.iter_mut().zip(&child.counts) {
            c.iter_mut().zip(cc).for_each(|(a, b)| *a -= b);
        }
        for (s, cs) in self.sums.iter_mut().zip(&child.sums) {
            s.iter_mut().zip(cs).for_each(|(a, b)| *a -= b);
        }
        self
    }
}

/// Grows one tree. Splits maximize the reduction in squared error of
/// `target`; leaves take the Newton value `-sum(grad) / (sum(hess) + lambda)`.
/// Also returns each training row's leaf value.
pub(crate) fn grow_tree(
    m: &BinnedMatrix,
    fit: &FitTargets<'_>,
    params: TreeParams,
    exec: Execution,
) -> (RegressionTree, Vec<f64>) {
    let mut builder = Builder { m, fit, params, exec, nodes: Vec::new(), row_values: vec![0.0; m.n_rows] };
    builder.build((0..m.n_rows).collect(), None, 0);
    (RegressionTree { nodes: builder.nodes }, builder.row_values)
}

struct Builder<'a, 'b> {
    m: &'a BinnedMatrix,
    fit: &'a FitTargets<'b>,
    params: TreeParams,
    exec: Execution,
    nodes: Vec<TreeNode>,
    row_values: Vec<f64>,
}

impl Builder<'_, '_> {
    fn can_split(&self, rows: usize, depth: usize) -> bool {
        depth < self.params.max_depth && rows >= 2 * self.params.min_samples_leaf
    }

    /// `hist` is the node's histogram when the parent already derived it.
    fn build(&mut self, rows: Vec<usize>, hist: Option<Histogram>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { leaf: 0.0 });
        let mut split = None;
        if self.can_split(rows.len(), depth) {
            let hist = hist.unwrap_or_else(|| self.histogram(&rows));
            split = self.best_split(&rows, &hist).map(|s| (s, hist));
        }
        match split {
            Some((s, hist)) => {
                let bins = &self.m.bins[s.feature];
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&r| bins[r] <= s.last_left_bin);
                // scan the smaller child, subtract for the larger
                let (left_hist, right_hist) = if self.can_split(left.len().max(right.len()), depth + 1) {
                    if left.len() <= right.len() {
                        let lh = self.histogram(&left);
                        let rh = hist.minus(&lh);
                        (Some(lh), Some(rh))
                    } else {
                        let rh = self.histogram(&right);
                        let lh = hist.minus(&rh);
                        (Some(lh), Some(rh))
                    }
                } else {
                    (None, None)
                };
                let l = self.build(left, left_hist, depth + 1);
                let r = self.build(right, right_hist, depth + 1);
                self.nodes[at] = TreeNode::Split { feature: s.feature, threshold: s.threshold, left: l, right: r };
            }
            None => {
                let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.fit.grad[r], h + self.fit.hess[r]));
                let value = -g / (h + self.params.lambda);
                for &r in &rows {
                    self.row_values[r] = value;
                }
                self.nodes[at] = TreeNode::Leaf { leaf: value };
            }
        }
        at
    }

    fn exec_for(&self, rows: usize) -> Execution {
        if rows * self.m.width() >= PARALLEL_SPLIT_WORK {
            self.exec
        } else {
            Execution::Sequential
        }
    }

    fn histogram(&self, rows: &[usize]) -> Histogram {
        let per_feature = self.exec_for(rows.len()).map_range(self.m.width(), |f| {
            let bins = &self.m.bins[f];
            let size = self.m.values[f].len();
            let mut counts = vec![0u32; size];
            let mut sums = vec![0.0; size];
            for &r in rows {
                let b = bins[r] as usize;
                counts[b] += 1;
                sums[b] += self.fit.target[r];
            }
            (counts, sums)
        });
        let (counts, sums) = per_feature.into_iter().unzip();
        Histogram { counts, sums }
    }

    fn best_split(&self, rows: &[usize], hist: &Histogram) -> Option<SplitChoice> {
        let n = rows.len() as f64;
        let (sum, sum_sq) =
            rows.iter().fold((0.0, 0.0), |(s, q), &r| (s + self.fit.target[r], q + self.fit.target[r].powi(2)));
        let parent_score = sum * sum / n;
        let sse = sum_sq - parent_score;
        if !(sse > 0.0) {
            return None;
        }
        let mut best: Option<SplitChoice> = None;
        for f in 0..self.m.width() {
            if let Some(choice) = self.best_for_feature(f, rows.len(), hist, sum, parent_score) {
                if best.is_none_or(|b| choice.gain > b.gain) {
                    best = Some(choice);
                }
            }
        }
        best.filter(|b| b.gain > 1e-10 * sse)
    }

    fn best_for_feature(&self, f: usize, n: usize, hist: &Histogram, sum: f64, parent_score: f64) -> Option<SplitChoice> {
        let values = &self.m.values[f];
        if values.len() < 2 {
            return None;
        }
        let (counts, sums) = (&hist.counts[f], &hist.sums[f]);
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<SplitChoice> = None;
        let (mut left_n, mut left_sum) = (0usize, 0.0);
        let mut prev: Option<usize> = None;
        for b in 0..values.len() {
            if counts[b] == 0 {
                continue;
            }
            if let Some(p) = prev {
                let right_n = n - left_n;
                if left_n >= min_leaf && right_n >= min_leaf {
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64
                        - parent_score;
                    if best.is_none_or(|c| gain > c.gain) {
                        let mid = values[p] + (values[b] - values[p]) / 2.0;
                        let threshold = if mid < values[b] { mid } else { values[p] };
                        best = Some(SplitChoice { gain, feature: f, last_left_bin: p as u32, threshold });
                    }
                }
            }
            left_n += counts[b] as usize;
            left_sum += sums[b];
            prev = Some(b);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_plain(rows: &[Vec<f64>], target: &[f64], params: TreeParams) -> (RegressionTree, Vec<f64>) {
        let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = BinnedMatrix::new(&views, rows[0].len());
        // grad = -target, hess = 1 makes Newton leaves close to leaf means
        let grad: Vec<f64> = target.iter().map(|t| -t).collect();
        let hess = vec![1.0; target.len()];
        grow_tree(&m, &FitTargets { target, grad: &grad, hess: &hess }, params, Execution::Sequential)
    }

    const PARAMS: TreeParams = TreeParams { max_depth: 8, min_samples_leaf: 1, lambda: 0.0 };

    #[test]
    fn stump_prediction() {
        let t = RegressionTree::stump(0, 0.5, -1.0, 1.0);
        assert_eq!(t.predict(&[0.2]) , -1.0);
        assert_eq!(t.predict(&[0.7]), 1.0);
        assert_eq!(t.predict(&[0.5]), -1.0);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn finds_exact_step() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i % 3) as f64, i as f64]).collect();
        let target: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 5.0 }).collect();
        let (tree, values) = fit_plain(&rows, &target, PARAMS);
        assert_eq!(tree.depth(), 1);
        match tree.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 1);
                assert_eq!(threshold, 3.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(values, target);
        for (row, v) in rows.iter().zip(&values) {
            assert_eq!(tree.predict(row), *v);
        }
    }

    #[test]
    fn respects_depth_and_leaf_size() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let target: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let (tree, _) = fit_plain(&rows, &target, TreeParams { max_depth: 3, min_samples_leaf: 5, lambda: 1.0 });
        assert!(tree.depth() <= 3);
        tree.check(1).unwrap();
        let (tree, _) = fit_plain(&rows, &target, TreeParams { max_depth: 8, min_samples_leaf: 40, lambda: 1.0 });
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn constant_target_is_a_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let (tree, _) = fit_plain(&rows, &[2.0; 10], PARAMS);
        assert_eq!(tree.nodes, vec![TreeNode::Leaf { leaf: 2.0 }]);
    }

    #[test]
    fn check_rejects_broken_trees() {
        let mut t = RegressionTree::stump(3, 0.0, 1.0, 2.0);
        assert!(t.check(2).is_err());
        assert!(t.check(4).is_ok());
        t.nodes[0] = TreeNode::Split { feature: 0, threshold: 0.0, left: 0, right: 2 };
        assert!(t.check(4).is_err());
        t.nodes[0] = TreeNode::Split { feature: 0, threshold: 0.0, left: 2, right: 2 };
        assert!(t.check(4).is_err());
    }

    #[test]
    fn json_shape() {
        let t = RegressionTree::stump(0, 0.5, -1.0, 1.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(
            json,
            r#"{"nodes":[{"feature":0,"threshold":0.5,"left":1,"right":2},{"leaf":-1.0},{"leaf":1.0}]}"#
        );
        assert_eq!(serde_json::from_str::<RegressionTree>(&json).unwrap(), t);
    }

    #[test]
    fn parallel_split_search_matches_sequential() {
        let rows: Vec<Vec<f64>> =
            (0..3000).map(|i| (0..30).map(|f| ((i * (f + 3)) % 17) as f64).collect()).collect();
        let target: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = BinnedMatrix::new(&views, 30);
        let grad: Vec<f64> = target.iter().map(|t| -t).collect();
        let hess = vec![1.0; target.len()];
        let fit = FitTargets { target: &target, grad: &grad, hess: &hess };
        let a = grow_tree(&m, &fit, PARAMS, Execution::Sequential);
        let b = grow_tree(&m, &fit, PARAMS, Execution::Parallel);
        assert_eq!(a, b);
    }
}

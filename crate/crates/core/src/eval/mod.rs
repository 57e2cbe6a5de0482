//! Leave-one-dataset-out evaluation of the ranker, plus the statistics and
//! synthetic data used to judge it.

pub mod metrics;
pub mod significance;
pub mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{dcg_at_k, ndcg_at_k, regret_at_k, spearman};
pub use significance::{
    boc_compare, wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, BocCounts, Direction, StatsError,
    WilcoxonMethod, WilcoxonResult,
};
pub use synthetic::{generate_synthetic_kb, OracleConfig, SyntheticKb, SyntheticOracle};

use crate::kb::{KnowledgeBase, Metric, PerformanceRecord};
use crate::par::Execution;
use crate::pipeline::{encode_pipeline, Family, PipelineGraph, PipelineSequence, SequenceFeaturizer};
use crate::ranker::{build_training_groups_with, train_with, RankConfig, RankError};
use crate::tabular::Task;

/// Seeds averaged by the random-ranking baseline.
pub const RANDOM_BASELINE_SEEDS: u64 = 20;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-out needs at least 3 datasets for {task}/{metric}, found {found}")]
    TooFewDatasets { task: Task, metric: Metric, found: usize },
    #[error("k must be at least 1")]
    BadK,
    #[error(transparent)]
    Rank(#[from] RankError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub pipeline: PipelineGraph,
    pub predicted: f64,
    pub true_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    pub k: usize,
    /// best stored score among the top k, in metric units
    pub achieved_score: f64,
    /// in label units (higher is better)
    pub regret: f64,
    /// regret divided by the fold's label range
    pub normalized_regret: f64,
    pub ndcg: f64,
    /// mean regret@k of random orderings
    pub random_regret: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub dataset_id: String,
    pub n_candidates: usize,
    pub best_true_score: f64,
    pub at_k: Vec<AtK>,
    pub spearman: f64,
    pub ranked: Vec<RankedEntry>,
}

impl FoldResult {
    pub fn at(&self, k: usize) -> Option<&AtK> {
        self.at_k.iter().find(|a| a.k == k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = metrics::mean_std(xs);
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateAtK {
    pub k: usize,
    pub achieved_score: MeanStd,
    pub regret: MeanStd,
    pub normalized_regret: MeanStd,
    pub ndcg: MeanStd,
    pub random_regret: MeanStd,
    /// folds whose top k contains a best pipeline
    pub hit_rate: f64,
    /// one-sided test that random regret exceeds model regret; absent when
    /// fewer than 5 folds differ
    pub wilcoxon_vs_random: Option<WilcoxonResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub folds: usize,
    pub at_k: Vec<AggregateAtK>,
    pub spearman: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub task: Task,
    pub metric: Metric,
    pub k_list: Vec<usize>,
    pub config: RankConfig,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

impl LooReport {
    pub fn aggregate_at(&self, k: usize) -> Option<&AggregateAtK> {
        self.aggregate.at_k.iter().find(|a| a.k == k)
    }

    /// The first `n` ranked pipelines of every fold.
    pub fn top_pipelines(&self, n: usize) -> Vec<Vec<&PipelineGraph>> {
        self.folds.iter().map(|f| f.ranked.iter().take(n).map(|e| &e.pipeline).collect()).collect()
    }
}

pub fn loo_evaluate(
    kb: &KnowledgeBase,
    task: Task,
    metric: Metric,
    config: &RankConfig,
    k_list: &[usize],
) -> Result<LooReport, EvalError> {
    loo_evaluate_with(kb, task, metric, config, k_list, Execution::default())
}

/// For each dataset, trains on every other dataset's records and ranks the
/// held-out dataset's stored topologies. Folds run under `exec`; each
/// fold's own training is sequential when folds are spread over threads.
pub fn loo_evaluate_with(
    kb: &KnowledgeBase,
    task: Task,
    metric: Metric,
    config: &RankConfig,
    k_list: &[usize],
    exec: Execution,
) -> Result<LooReport, EvalError> {
    config.validate()?;
    let mut k_list = k_list.to_vec();
    k_list.sort_unstable();
    k_list.dedup();
    if k_list.is_empty() || k_list[0] == 0 {
        return Err(EvalError::BadK);
    }
    let ids = kb.dataset_ids(task, metric);
    if ids.len() < 3 {
        return Err(EvalError::TooFewDatasets { task, metric, found: ids.len() });
    }

    // one encoding for all folds so every held-out topology is encodable
    let pipelines: Vec<&PipelineGraph> = kb.slice(task, metric).map(|r| &r.pipeline).collect();
    let featurizer = SequenceFeaturizer::from_pipelines(pipelines.iter().copied())
        .map_err(|_| RankError::EmptySlice { task, metric })?;
    let set = build_training_groups_with(kb, task, metric, featurizer)?;

    let mut by_dataset: BTreeMap<&str, Vec<&PerformanceRecord>> = BTreeMap::new();
    for r in kb.slice(task, metric) {
        by_dataset.entry(r.dataset_id.as_str()).or_default().push(r);
    }
    let inner = if exec.is_parallel() { Execution::Sequential } else { exec };

    let folds: Vec<Result<FoldResult, EvalError>> = exec.map_range(ids.len(), |fi| {
        let id = ids[fi].as_str();
        let model = train_with(&set.without_group(id), config, inner)?;
        let records = &by_dataset[id];
        let candidates: Vec<PipelineGraph> = records.iter().map(|r| r.pipeline.clone()).collect();
        let outcome = model.rank_candidates_with(&records[0].meta_features, &candidates, inner)?;
        let truth: BTreeMap<PipelineSequence, f64> = records
            .iter()
            .map(|r| (encode_pipeline(&r.pipeline, model.slots()).expect("encodable by construction"), r.score))
            .collect();
        let ranked: Vec<RankedEntry> = outcome
            .ranked
            .into_iter()
            .map(|c| RankedEntry { true_score: truth[&c.sequence], predicted: c.score, pipeline: c.pipeline })
            .collect();
        let baseline_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(fi as u64 * RANDOM_BASELINE_SEEDS);
        Ok(score_fold(id, metric, ranked, &k_list, baseline_seed))
    });
    let folds = folds.into_iter().collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate(&folds, &k_list);
    Ok(LooReport { task, metric, k_list, config: config.clone(), folds, aggregate })
}

fn score_fold(id: &str, metric: Metric, ranked: Vec<RankedEntry>, k_list: &[usize], baseline_seed: u64) -> FoldResult {
    let labels: Vec<f64> = ranked.iter().map(|e| metric.label(e.true_score)).collect();
    let predicted: Vec<f64> = ranked.iter().map(|e| e.predicted).collect();
    let relevance = metrics::min_max_normalize(&labels);
    let best = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let range = best - worst;
    let at_k = k_list
        .iter()
        .map(|&k| {
            let regret = regret_at_k(&labels, k);
            AtK {
                k,
                achieved_score: metric.score(metrics::best_in_top_k(&labels, k)),
                regret,
                normalized_regret: if range > 0.0 { regret / range } else { 0.0 },
                ndcg: ndcg_at_k(&relevance, k),
                random_regret: metrics::random_ranking_regret(&labels, k, RANDOM_BASELINE_SEEDS, baseline_seed),
            }
        })
        .collect();
    FoldResult {
        dataset_id: id.to_owned(),
        n_candidates: ranked.len(),
        best_true_score: metric.score(best),
        at_k,
        spearman: spearman(&predicted, &labels),
        ranked,
    }
}

fn aggregate(folds: &[FoldResult], k_list: &[usize]) -> Aggregate {
    let column = |k: usize, f: fn(&AtK) -> f64| -> Vec<f64> {
        folds.iter().map(|fold| f(fold.at(k).expect("every fold has every k"))).collect()
    };
    let at_k = k_list
        .iter()
        .map(|&k| {
            let regret = column(k, |a| a.regret);
            let random = column(k, |a| a.random_regret);
            let diffs: Vec<f64> = random.iter().zip(&regret).map(|(r, m)| r - m).collect();
            AggregateAtK {
                k,
                achieved_score: MeanStd::of(&column(k, |a| a.achieved_score)),
                regret: MeanStd::of(&regret),
                normalized_regret: MeanStd::of(&column(k, |a| a.normalized_regret)),
                ndcg: MeanStd::of(&column(k, |a| a.ndcg)),
                random_regret: MeanStd::of(&random),
                hit_rate: regret.iter().filter(|&&r| r == 0.0).count() as f64 / folds.len().max(1) as f64,
                wilcoxon_vs_random: wilcoxon_signed_rank(&diffs, Alternative::Greater).ok(),
            }
        })
        .collect();
    let rho: Vec<f64> = folds.iter().map(|f| f.spearman).collect();
    Aggregate { folds: folds.len(), at_k, spearman: MeanStd::of(&rho) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveShare {
    pub name: String,
    pub family: Family,
    pub count: usize,
    pub fraction: f64,
}

/// Share of each primitive among all node occurrences in the given top
/// pipelines, `data` nodes included. Empty lists contribute nothing.
/// Sorted by fraction descending, then name.
pub fn primitive_frequency(top_lists: &[Vec<&PipelineGraph>]) -> Vec<PrimitiveShare> {
    let mut counts: BTreeMap<(&str, Family), usize> = BTreeMap::new();
    let mut total = 0usize;
    for g in top_lists.iter().flatten() {
        for n in &g.nodes {
            *counts.entry((n.primitive.name.as_str(), n.primitive.family)).or_default() += 1;
            total += 1;
        }
    }
    let mut shares: Vec<PrimitiveShare> = counts
        .into_iter()
        .map(|((name, family), count)| PrimitiveShare {
            name: name.to_owned(),
            family,
            count,
            fraction: count as f64 / total as f64,
        })
        .collect();
    shares.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
    shares
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Primitive;

    fn chain(names: &[&str]) -> PipelineGraph {
        let (model, steps) = names.split_last().unwrap();
        let mut p: Vec<Primitive> = steps.iter().map(|n| Primitive::new(*n, Family::DataPreprocessing)).collect();
        p.push(Primitive::new(*model, Family::PredictiveModel));
        PipelineGraph::chain(&p)
    }

    #[test]
    fn frequency_of_identical_chains() {
        let g = chain(&["Scaler", "KNN"]);
        let lists = vec![vec![&g], vec![&g], vec![]];
        let shares = primitive_frequency(&lists);
        assert_eq!(shares.len(), 3);
        for s in &shares {
            assert!((s.fraction - 1.0 / 3.0).abs() < 1e-12);
            assert_eq!(s.count, 2);
        }
        assert_eq!(shares[0].name, "KNN");
    }

    #[test]
    fn frequency_sorted_descending() {
        let a = chain(&["Scaler", "Scaler", "KNN"]);
        let b = chain(&["SVC"]);
        let shares = primitive_frequency(&[vec![&a, &b]]);
        assert_eq!(shares[0].name, "Scaler");
        assert!((shares[0].fraction - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(shares[1].name, "data");
    }

    fn entry(score: f64, predicted: f64) -> RankedEntry {
        RankedEntry { pipeline: chain(&["M"]), predicted, true_score: score }
    }

    #[test]
    fn fold_with_correct_top_one() {
        let ranked = vec![entry(0.9, 3.0), entry(0.7, 2.0), entry(0.8, 1.0)];
        let f = score_fold("d", Metric::Accuracy, ranked, &[1, 2], 0);
        assert_eq!(f.at(1).unwrap().regret, 0.0);
        assert_eq!(f.at(1).unwrap().ndcg, 1.0);
        assert_eq!(f.best_true_score, 0.9);
    }

    #[test]
    fn fold_reversed_order() {
        let ranked: Vec<RankedEntry> = (0..5).map(|i| entry(0.5 + 0.1 * i as f64, -(i as f64))).collect();
        let f = score_fold("d", Metric::Accuracy, ranked, &[1, 5], 0);
        assert!((f.spearman + 1.0).abs() < 1e-12);
        assert!((f.at(1).unwrap().regret - 0.4).abs() < 1e-12);
        assert!((f.at(1).unwrap().normalized_regret - 1.0).abs() < 1e-12);
        assert_eq!(f.at(5).unwrap().regret, 0.0);
    }

    #[test]
    fn mse_fold_reports_metric_units() {
        let ranked = vec![entry(2.0, 1.0), entry(0.5, 0.0)];
        let f = score_fold("d", Metric::Mse, ranked, &[1, 2], 0);
        assert_eq!(f.best_true_score, 0.5);
        assert_eq!(f.at(1).unwrap().achieved_score, 2.0);
        assert!((f.at(1).unwrap().regret - 1.5).abs() < 1e-12);
        assert_eq!(f.at(2).unwrap().achieved_score, 0.5);
    }

    #[test]
    fn loo_needs_three_datasets() {
        let cfg = OracleConfig { n_datasets: 2, n_pipelines: 10, ..OracleConfig::default() };
        let s = generate_synthetic_kb(&cfg).unwrap();
        let err = loo_evaluate(&s.kb, Task::Classification, Metric::Accuracy, &RankConfig::default(), &[1]);
        assert!(matches!(err, Err(EvalError::TooFewDatasets { found: 2, .. })));
    }

    #[test]
    fn loo_small_run_is_well_formed() {
        let cfg = OracleConfig { n_datasets: 4, n_pipelines: 30, ..OracleConfig::default() };
        let s = generate_synthetic_kb(&cfg).unwrap();
        let rc = RankConfig { n_trees: 10, ..RankConfig::default() };
        let r = loo_evaluate(&s.kb, Task::Classification, Metric::Accuracy, &rc, &[10, 1, 5, 5]).unwrap();
        assert_eq!(r.k_list, vec![1, 5, 10]);
        assert_eq!(r.folds.len(), 4);
        for f in &r.folds {
            assert_eq!(f.n_candidates, 30);
            let regrets: Vec<f64> = f.at_k.iter().map(|a| a.regret).collect();
            assert!(regrets.windows(2).all(|w| w[0] >= w[1]) && regrets[2] >= 0.0);
            assert!(f.at_k.iter().all(|a| (0.0..=1.0).contains(&a.ndcg)));
        }
        let seq = loo_evaluate_with(&s.kb, Task::Classification, Metric::Accuracy, &rc, &[1, 5, 10], Execution::Sequential)
            .unwrap();
        assert_eq!(seq, r);
        assert!(matches!(
            loo_evaluate(&s.kb, Task::Classification, Metric::Accuracy, &rc, &[0]),
            Err(EvalError::BadK)
        ));
    }
}

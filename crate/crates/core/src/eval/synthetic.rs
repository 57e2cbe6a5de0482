//! Synthetic knowledge bases with a known score function, for testing the
//! ranker end to end without executing real pipelines.
//!
//! The latent quality of pipeline `p` on dataset `d` is
//!
//! ```text
//! z(d, p) = offset(d) + sum_q count_p(q) * (u_q + V_q . m(d))
//!         + sum_{q < r, both in p} C_qr
//! ```
//!
//! where `m(d)` is the standardized meta-feature vector of `d`, `u` are
//! per-primitive main effects, `V` couples primitives to dataset
//! characteristics and `C` rewards or penalizes primitive combinations.
//! Accuracy is `logistic(z)`; mse is `1 - logistic(z)`. With interactions
//! disabled `V` and `C` are zero and `z` is linear in the model's features.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, Metric, PerformanceRecord};
use crate::meta::{extract_meta_features, MetaFeatureVector, META_FEATURE_COUNT};
use crate::pipeline::{Family, PipelineGraph, Primitive, DATA_NAME};
use crate::tabular::{Column, TabularDataset, Task};

pub const COMBINER: &str = "CombineDFs";

const DATA_PREPROCESSING: [&str; 7] =
    ["SimpleImputer", "StandardScaler", "MinMaxScaler", "MaxAbsScaler", "RobustScaler", "Normalizer", "Binarizer"];
const FEATURE_PREPROCESSING: [&str; 7] =
    ["PCA", "FastICA", "Nystroem", "RBFSampler", "FeatureAgglomeration", "SelectPercentile", "VarianceThreshold"];
const FEATURE_ENGINEERING: [&str; 6] =
    ["PolynomialFeatures", "OneHotEncoder", "ZeroCount", "StackingEstimator", "KBinsDiscretizer", COMBINER];
const PREDICTIVE_MODELS: [&str; 10] = [
    "LogisticRegression",
    "KNeighbors",
    "DecisionTree",
    "RandomForest",
    "ExtraTrees",
    "GradientBoosting",
    "LinearSVC",
    "BernoulliNB",
    "GaussianNB",
    "MLP",
];

/// The 30 primitives synthetic pipelines are built from.
pub fn synthetic_primitives() -> Vec<Primitive> {
    let families = [
        (&DATA_PREPROCESSING[..], Family::DataPreprocessing),
        (&FEATURE_PREPROCESSING[..], Family::FeaturePreprocessing),
        (&FEATURE_ENGINEERING[..], Family::FeatureEngineering),
        (&PREDICTIVE_MODELS[..], Family::PredictiveModel),
    ];
    families
        .into_iter()
        .flat_map(|(names, family)| names.iter().map(move |n| Primitive::new(*n, family)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_datasets: usize,
    pub n_pipelines: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub task: Task,
    /// meta-feature couplings and primitive-pair affinities
    pub interactions: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_datasets: 30,
            n_pipelines: 200,
            noise_std: 0.05,
            seed: 1,
            task: Task::Classification,
            interactions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("need at least 2 datasets and 2 pipelines")]
    TooSmall,
    #[error("noise_std must be finite and non-negative")]
    BadNoise,
    #[error("could only generate {0} distinct pipeline topologies")]
    TooFewTopologies(usize),
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.n_datasets < 2 || self.n_pipelines < 2 {
            return Err(SyntheticError::TooSmall);
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SyntheticError::BadNoise);
        }
        Ok(())
    }
}

/// Noise-free score function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    metric: Metric,
    /// primitive name -> coefficient row; `data` included
    index: BTreeMap<String, usize>,
    main_effect: Vec<f64>,
    coupling: Vec<[f64; META_FEATURE_COUNT]>,
    affinity: Vec<Vec<f64>>,
    offset: [f64; META_FEATURE_COUNT],
    mf_mean: [f64; META_FEATURE_COUNT],
    mf_scale: [f64; META_FEATURE_COUNT],
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SyntheticOracle {
    pub fn metric(&self) -> Metric {
        self.metric
    }

    fn standardize(&self, mf: &MetaFeatureVector) -> [f64; META_FEATURE_COUNT] {
        let mut m = [0.0; META_FEATURE_COUNT];
        for f in 0..META_FEATURE_COUNT {
            if self.mf_scale[f] > 0.0 {
                m[f] = ((mf.values[f] - self.mf_mean[f]) / self.mf_scale[f]).clamp(-3.0, 3.0);
            }
        }
        m
    }

    /// Latent quality; higher is better for either metric.
    pub fn latent(&self, mf: &MetaFeatureVector, pipeline: &PipelineGraph) -> f64 {
        let m = self.standardize(mf);
        let mut z: f64 = self.offset.iter().zip(&m).map(|(w, x)| w * x).sum();
        let mut present = Vec::new();
        for node in &pipeline.nodes {
            let Some(&q) = self.index.get(&node.primitive.name) else { continue };
            let coupled: f64 = self.coupling[q].iter().zip(&m).map(|(v, x)| v * x).sum();
            z += self.main_effect[q] + coupled;
            present.push(q);
        }
        present.sort_unstable();
        present.dedup();
        for (a, &q) in present.iter().enumerate() {
            for &r in &present[a + 1..] {
                z += self.affinity[q][r];
            }
        }
        z
    }

    /// Exact expected score of `pipeline` on a dataset with meta-features `mf`.
    pub fn score(&self, mf: &MetaFeatureVector, pipeline: &PipelineGraph) -> f64 {
        let p = logistic(self.latent(mf, pipeline));
        match self.metric {
            Metric::Accuracy => p,
            Metric::Mse => 1.0 - p,
        }
    }
}

pub struct SyntheticKb {
    pub kb: KnowledgeBase,
    pub oracle: SyntheticOracle,
    pub datasets: Vec<TabularDataset>,
    pub pipelines: Vec<PipelineGraph>,
}

/// Independent random stream per generation stage, so that changing one
/// count does not reshuffle the others.
fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

pub fn generate_synthetic_kb(cfg: &OracleConfig) -> Result<SyntheticKb, SyntheticError> {
    cfg.validate()?;
    let mut data_rng = stage_rng(cfg.seed, 1);
    let datasets: Vec<TabularDataset> =
        (0..cfg.n_datasets).map(|i| synthetic_dataset(&mut data_rng, i, cfg.task)).collect();
    let meta: Vec<MetaFeatureVector> = datasets.iter().map(extract_meta_features).collect();

    let pipelines = random_pipelines(&mut stage_rng(cfg.seed, 2), cfg.n_pipelines)?;
    let oracle = random_oracle(&mut stage_rng(cfg.seed, 3), cfg, &meta);

    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise");
    let mut noise_rng = stage_rng(cfg.seed, 4);
    let mut kb = KnowledgeBase::new();
    for (d, mf) in datasets.iter().zip(&meta) {
        for p in &pipelines {
            let exact = oracle.score(mf, p);
            let noisy = if cfg.noise_std > 0.0 { exact + noise.sample(&mut noise_rng) } else { exact };
            let score = match oracle.metric {
                Metric::Accuracy => noisy.clamp(0.0, 1.0),
                Metric::Mse => noisy.max(0.0),
            };
            kb.insert(PerformanceRecord {
                dataset_id: d.name().to_owned(),
                task: cfg.task,
                metric: oracle.metric,
                pipeline: p.clone(),
                score,
                meta_features: mf.clone(),
            })
            .expect("synthetic records are valid");
        }
    }
    Ok(SyntheticKb { kb, oracle, datasets, pipelines })
}

fn random_oracle(rng: &mut ChaCha8Rng, cfg: &OracleConfig, meta: &[MetaFeatureVector]) -> SyntheticOracle {
    let mut names: Vec<String> = synthetic_primitives().into_iter().map(|p| p.name).collect();
    names.push(DATA_NAME.to_owned());
    let index: BTreeMap<String, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
    let k = names.len();

    let per_feature = 1.0 / (META_FEATURE_COUNT as f64).sqrt();
    let main = Normal::new(0.0, 0.35).unwrap();
    let couple = Normal::new(0.0, 0.3 * per_feature).unwrap();
    let pair = Normal::new(0.0, 0.15).unwrap();
    let off = Normal::new(0.0, 0.3 * per_feature).unwrap();

    let main_effect: Vec<f64> = (0..k).map(|_| main.sample(rng)).collect();
    let mut coupling = vec![[0.0; META_FEATURE_COUNT]; k];
    let mut affinity = vec![vec![0.0; k]; k];
    if cfg.interactions {
        for row in coupling.iter_mut() {
            for v in row.iter_mut() {
                *v = couple.sample(rng);
            }
        }
        for q in 0..k {
            for r in q + 1..k {
                affinity[q][r] = pair.sample(rng);
            }
        }
    }
    let mut offset = [0.0; META_FEATURE_COUNT];
    for v in offset.iter_mut() {
        *v = off.sample(rng);
    }

    let n = meta.len() as f64;
    let mut mf_mean = [0.0; META_FEATURE_COUNT];
    let mut mf_scale = [0.0; META_FEATURE_COUNT];
    for f in 0..META_FEATURE_COUNT {
        let mean = meta.iter().map(|m| m.values[f]).sum::<f64>() / n;
        let var = meta.iter().map(|m| (m.values[f] - mean).powi(2)).sum::<f64>() / n;
        mf_mean[f] = mean;
        mf_scale[f] = var.sqrt();
    }

    SyntheticOracle {
        metric: Metric::for_task(cfg.task),
        index,
        main_effect,
        coupling,
        affinity,
        offset,
        mf_mean,
        mf_scale,
    }
}

/// Distinct in-tree pipelines of 2 to 8 nodes.
fn random_pipelines(rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<PipelineGraph>, SyntheticError> {
    let primitives = synthetic_primitives();
    let models: Vec<&Primitive> = primitives.iter().filter(|p| p.family == Family::PredictiveModel).collect();
    let steps: Vec<&Primitive> = primitives
        .iter()
        .filter(|p| p.family != Family::PredictiveModel && p.name != COMBINER)
        .collect();
    let combiner = primitives.iter().find(|p| p.name == COMBINER).expect("combiner present");

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 1000 {
        attempts += 1;
        let nodes = rng.random_range(2..=8);
        let mut g = PipelineGraph::new();
        let sink = g.add((*models.choose(rng).expect("models")).clone());
        grow(rng, &mut g, sink, nodes - 1, &steps, combiner);
        if seen.insert(g.canonical_tokens().expect("generated pipelines are valid")) {
            out.push(g);
        }
    }
    if out.len() < count {
        return Err(SyntheticError::TooFewTopologies(out.len()));
    }
    Ok(out)
}

/// Adds a subtree of exactly `budget` nodes feeding `consumer`.
fn grow(
    rng: &mut ChaCha8Rng,
    g: &mut PipelineGraph,
    consumer: u32,
    budget: usize,
    steps: &[&Primitive],
    combiner: &Primitive,
) {
    if budget == 1 {
        let d = g.add(Primitive::data());
        g.connect(d, consumer);
    } else if budget >= 3 && rng.random_bool(0.25) {
        let c = g.add(combiner.clone());
        g.connect(c, consumer);
        let rest = budget - 1;
        let left = rng.random_range(1..rest);
        grow(rng, g, c, left, steps, combiner);
        grow(rng, g, c, rest - left, steps, combiner);
    } else {
        let s = g.add((*steps.choose(rng).expect("steps")).clone());
        g.connect(s, consumer);
        grow(rng, g, s, budget - 1, steps, combiner);
    }
}

/// A dataset with a latent factor driving feature correlation and the
/// target, random missingness and a few categorical columns.
fn synthetic_dataset(rng: &mut ChaCha8Rng, index: usize, task: Task) -> TabularDataset {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let n_rows = rng.random_range(60..=300);
    let n_numeric = rng.random_range(2..=8);
    let n_categorical = rng.random_range(0..=3);
    let missing_rate = if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..0.15) };
    let rho: f64 = rng.random_range(0.0..0.95);
    let latent: Vec<f64> = (0..n_rows).map(|_| std_normal.sample(rng)).collect();

    let mut columns = Vec::new();
    let mut signal = vec![0.0; n_rows];
    for j in 0..n_numeric {
        let scale = rng.random_range(0.5..20.0);
        let shift = rng.random_range(-10.0..10.0);
        let weight: f64 = std_normal.sample(rng);
        let mut cells = Vec::with_capacity(n_rows);
        for (r, z) in latent.iter().enumerate() {
            let clean = rho * z + (1.0 - rho * rho).sqrt() * std_normal.sample(rng);
            signal[r] += weight * clean;
            let missing = missing_rate > 0.0 && rng.random_bool(missing_rate);
            cells.push((!missing).then_some(scale * clean + shift));
        }
        columns.push(Column::numeric(format!("x{j}"), cells));
    }
    for j in 0..n_categorical {
        let levels = rng.random_range(2..=6) as f64;
        let mut cells = Vec::with_capacity(n_rows);
        for z in &latent {
            let u = rho * z + (1.0 - rho * rho).sqrt() * std_normal.sample(rng);
            let level = ((logistic(u) * levels).floor()).min(levels - 1.0) as usize;
            let missing = missing_rate > 0.0 && rng.random_bool(missing_rate);
            cells.push((!missing).then(|| format!("c{level}")));
        }
        columns.push(Column::categorical(format!("cat{j}"), cells));
    }
    let noise_level = rng.random_range(0.1..2.0);
    let target: Vec<f64> = signal.iter().map(|s| s + noise_level * std_normal.sample(rng)).collect();
    let target_column = match task {
        Task::Regression => Column::numeric("target", target.into_iter().map(Some).collect()),
        Task::Classification => {
            let n_classes = rng.random_range(2..=4);
            let mut cuts: Vec<f64> = (1..n_classes).map(|_| rng.random_range(-1.5..1.5)).collect();
            cuts.sort_by(f64::total_cmp);
            let sd = (target.iter().map(|t| t * t).sum::<f64>() / n_rows as f64).sqrt().max(1e-9);
            let labels = target
                .iter()
                .map(|t| Some(format!("class{}", cuts.iter().filter(|&&c| t / sd > c).count())))
                .collect();
            Column::categorical("target", labels)
        }
    };
    columns.push(target_column);
    let target_index = columns.len() - 1;
    TabularDataset::new(format!("synth-{index:03}"), columns, target_index, task)
        .expect("synthetic datasets satisfy dataset invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, noise: f64) -> OracleConfig {
        OracleConfig { n_datasets: 4, n_pipelines: 25, noise_std: noise, seed, ..OracleConfig::default() }
    }

    #[test]
    fn thirty_primitives_in_four_families() {
        let p = synthetic_primitives();
        assert_eq!(p.len(), 30);
        for f in [Family::DataPreprocessing, Family::FeaturePreprocessing, Family::FeatureEngineering, Family::PredictiveModel] {
            assert!(p.iter().any(|x| x.family == f));
        }
    }

    #[test]
    fn same_seed_same_kb() {
        let a = generate_synthetic_kb(&small(1, 0.05)).unwrap();
        let b = generate_synthetic_kb(&small(1, 0.05)).unwrap();
        assert_eq!(a.kb, b.kb);
        assert_eq!(a.oracle, b.oracle);
        let c = generate_synthetic_kb(&small(2, 0.05)).unwrap();
        assert_ne!(a.kb, c.kb);
    }

    #[test]
    fn noiseless_scores_equal_oracle() {
        let s = generate_synthetic_kb(&small(3, 0.0)).unwrap();
        assert_eq!(s.kb.len(), 4 * 25);
        for r in s.kb.records() {
            assert_eq!(r.score, s.oracle.score(&r.meta_features, &r.pipeline));
        }
    }

    #[test]
    fn pipelines_are_valid_and_sized() {
        let s = generate_synthetic_kb(&small(4, 0.05)).unwrap();
        for p in &s.pipelines {
            p.validate().unwrap();
            assert!((2..=8).contains(&p.len()));
        }
    }

    #[test]
    fn regression_variant_uses_mse() {
        let cfg = OracleConfig { task: Task::Regression, ..small(5, 0.05) };
        let s = generate_synthetic_kb(&cfg).unwrap();
        assert!(s.kb.records().all(|r| r.metric == Metric::Mse && r.score >= 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(generate_synthetic_kb(&OracleConfig { n_datasets: 1, ..small(1, 0.0) }).err(), Some(SyntheticError::TooSmall));
        assert_eq!(generate_synthetic_kb(&OracleConfig { noise_std: -1.0, ..small(1, 0.0) }).err(), Some(SyntheticError::BadNoise));
    }
}

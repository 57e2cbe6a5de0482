//! Pairwise gradient-boosted ranker over concatenated dataset meta-features
//! and pipeline encodings.
//!
//! Training groups are datasets: pairs are only formed between pipelines
//! evaluated on the same dataset, so the model learns which topology beats
//! which for a given kind of data.

pub mod booster;
pub mod objective;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use booster::{fit, fit_traced, Booster, TrainTrace};
pub use objective::{pairwise_gradients, pairwise_loss};
pub use tree::{RegressionTree, TreeNode};

use crate::kb::{KnowledgeBase, Metric};
use crate::meta::{MetaFeatureVector, META_FEATURE_COUNT, META_SCHEMA_VERSION};
use crate::par::Execution;
use crate::pipeline::{encode_pipeline, EncodeError, PipelineGraph, PipelineSequence, SequenceFeaturizer};
use crate::tabular::Task;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub max_pairs_per_group: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            learning_rate: 0.1,
            max_depth: 8,
            n_trees: 150,
            max_pairs_per_group: 10_000,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl RankConfig {
    pub fn with_seed(seed: u64) -> Self {
        RankConfig { seed, ..RankConfig::default() }
    }

    pub fn validate(&self) -> Result<(), RankError> {
        let bad = |msg: &str| Err(RankError::BadConfig(msg.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if self.max_pairs_per_group < 1 {
            return bad("max_pairs_per_group must be at least 1");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("no {task}/{metric} records to train on")]
    EmptySlice { task: Task, metric: Metric },
    #[error("no trainable pairs: every group has identical labels")]
    NoPairs,
    #[error("row width {found} does not match expected width {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("group `{0}` has different numbers of rows and labels")]
    RaggedGroup(String),
    #[error("pair ({i}, {j}) is not ordered by label")]
    MisorderedPair { i: usize, j: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("cannot encode pipeline: {0}")]
    Encode(#[from] EncodeError),
    #[error("meta-feature schema version {found} does not match the model's {expected}")]
    MetaVersion { found: u32, expected: u32 },
    #[error("model file format version {found:?}, expected {expected}")]
    ModelVersion { found: Option<u64>, expected: u32 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Rows of one dataset: each row is meta-features followed by the
/// featurized pipeline. Labels are higher-is-better.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingGroup {
    pub dataset_id: String,
    pub feature_rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

/// Training groups of one (task, metric) slice and the frozen encoding that
/// produced their rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub task: Task,
    pub metric: Metric,
    pub featurizer: SequenceFeaturizer,
    pub groups: Vec<TrainingGroup>,
}

impl TrainingSet {
    pub fn width(&self) -> usize {
        META_FEATURE_COUNT + self.featurizer.width()
    }

    pub fn without_group(&self, dataset_id: &str) -> TrainingSet {
        TrainingSet {
            groups: self.groups.iter().filter(|g| g.dataset_id != dataset_id).cloned().collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> TrainingSet {
        TrainingSet { task: self.task, metric: self.metric, featurizer: self.featurizer.clone(), groups: Vec::new() }
    }
}

/// Concatenates meta-features and the pipeline encoding.
pub fn feature_row(
    mf: &MetaFeatureVector,
    pipeline: &PipelineGraph,
    featurizer: &SequenceFeaturizer,
) -> Result<Vec<f64>, EncodeError> {
    let mut row = Vec::with_capacity(META_FEATURE_COUNT + featurizer.width());
    row.extend_from_slice(mf.as_slice());
    row.extend(featurizer.featurize(pipeline)?);
    Ok(row)
}

/// One group per dataset, with vocabulary and slot count taken from the
/// slice's own pipelines.
pub fn build_training_groups(kb: &KnowledgeBase, task: Task, metric: Metric) -> Result<TrainingSet, RankError> {
    let pipelines: Vec<&PipelineGraph> = kb.slice(task, metric).map(|r| &r.pipeline).collect();
    let featurizer = SequenceFeaturizer::from_pipelines(pipelines.iter().copied())
        .map_err(|_| RankError::EmptySlice { task, metric })?;
    build_training_groups_with(kb, task, metric, featurizer)
}

/// Like [`build_training_groups`] with a caller-supplied encoding.
pub fn build_training_groups_with(
    kb: &KnowledgeBase,
    task: Task,
    metric: Metric,
    featurizer: SequenceFeaturizer,
) -> Result<TrainingSet, RankError> {
    let mut groups: Vec<TrainingGroup> = Vec::new();
    // slice() iterates in key order, so records of a dataset are adjacent
    for r in kb.slice(task, metric) {
        if groups.last().is_none_or(|g| g.dataset_id != r.dataset_id) {
            groups.push(TrainingGroup { dataset_id: r.dataset_id.clone(), feature_rows: Vec::new(), labels: Vec::new() });
        }
        let g = groups.last_mut().expect("pushed above");
        g.feature_rows.push(feature_row(&r.meta_features, &r.pipeline, &featurizer)?);
        g.labels.push(metric.label(r.score));
    }
    if groups.is_empty() {
        return Err(RankError::EmptySlice { task, metric });
    }
    Ok(TrainingSet { task, metric, featurizer, groups })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub format_version: u32,
    pub task: Task,
    pub metric: Metric,
    pub mf_version: u32,
    #[serde(flatten)]
    pub featurizer: SequenceFeaturizer,
    pub config: RankConfig,
    #[serde(flatten)]
    pub booster: Booster,
}

pub fn train(set: &TrainingSet, config: &RankConfig) -> Result<RankModel, RankError> {
    train_with(set, config, Execution::default())
}

pub fn train_with(set: &TrainingSet, config: &RankConfig, exec: Execution) -> Result<RankModel, RankError> {
    let booster = fit(&set.groups, config, exec)?;
    Ok(RankModel {
        format_version: MODEL_FORMAT_VERSION,
        task: set.task,
        metric: set.metric,
        mf_version: META_SCHEMA_VERSION,
        featurizer: set.featurizer.clone(),
        config: config.clone(),
        booster,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub pipeline: PipelineGraph,
    pub score: f64,
    #[serde(skip)]
    pub sequence: PipelineSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedCandidate {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RankOutcome {
    pub ranked: Vec<RankedCandidate>,
    pub skipped: Vec<SkippedCandidate>,
}

impl RankModel {
    /// Expected row width: meta-features plus pipeline encoding.
    pub fn width(&self) -> usize {
        META_FEATURE_COUNT + self.featurizer.width()
    }

    pub fn slots(&self) -> usize {
        self.featurizer.slots
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64, RankError> {
        if row.len() != self.width() {
            return Err(RankError::WidthMismatch { expected: self.width(), found: row.len() });
        }
        Ok(self.booster.predict(row))
    }

    pub fn rank_candidates(
        &self,
        mf: &MetaFeatureVector,
        candidates: &[PipelineGraph],
    ) -> Result<RankOutcome, RankError> {
        self.rank_candidates_with(mf, candidates, Execution::default())
    }

    /// Scores every candidate and sorts best first; ties are ordered by
    /// encoded sequence. Candidates that cannot be encoded (invalid, or longer
    /// than the model's slot count) are reported in `skipped`.
    pub fn rank_candidates_with(
        &self,
        mf: &MetaFeatureVector,
        candidates: &[PipelineGraph],
        exec: Execution,
    ) -> Result<RankOutcome, RankError> {
        if mf.schema_version != self.mf_version {
            return Err(RankError::MetaVersion { found: mf.schema_version, expected: self.mf_version });
        }
        let scored = exec.map(candidates, |g| -> Result<(PipelineSequence, f64), EncodeError> {
            let sequence = encode_pipeline(g, self.slots())?;
            let row = feature_row(mf, g, &self.featurizer)?;
            Ok((sequence, self.booster.predict(&row)))
        });
        let mut outcome = RankOutcome::default();
        for (index, (g, result)) in candidates.iter().zip(scored).enumerate() {
            match result {
                Ok((sequence, score)) => {
                    outcome.ranked.push(RankedCandidate { pipeline: g.clone(), score, sequence })
                }
                Err(e) => {
                    log::warn!("skipping candidate {index}: {e}");
                    outcome.skipped.push(SkippedCandidate { index, reason: e.to_string() });
                }
            }
        }
        outcome.ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.sequence.cmp(&b.sequence)));
        Ok(outcome)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<RankModel, RankError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| RankError::Malformed(e.to_string()))?;
        let found = value.get("format_version").and_then(serde_json::Value::as_u64);
        if found != Some(MODEL_FORMAT_VERSION as u64) {
            return Err(RankError::ModelVersion { found, expected: MODEL_FORMAT_VERSION });
        }
        let model: RankModel = serde_json::from_value(value).map_err(|e| RankError::Malformed(e.to_string()))?;
        let width = model.width();
        for (i, t) in model.booster.trees.iter().enumerate() {
            t.check(width).map_err(|e| RankError::Malformed(format!("tree {i}: {e}")))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), RankError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| RankError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<RankModel, RankError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RankError::Io { path: path.display().to_string(), source })?;
        RankModel::from_json(&text)
    }
}

//! Knowledge base of past pipeline performance observations.
//!
//! Stored as JSON Lines, one [`PerformanceRecord`] per line. At most one
//! record is kept per (dataset, task, metric, topology) key: the one with
//! the best score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meta::{MetaFeatureVector, META_FEATURE_COUNT, META_SCHEMA_VERSION};
use crate::pipeline::{max_pipeline_length, PipelineGraph, PipelineViolation, Token};
use crate::tabular::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Mse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
        }
    }

    /// The task this metric evaluates.
    pub fn task(self) -> Task {
        match self {
            Metric::Accuracy => Task::Classification,
            Metric::Mse => Task::Regression,
        }
    }

    pub fn for_task(task: Task) -> Metric {
        match task {
            Task::Classification => Metric::Accuracy,
            Task::Regression => Metric::Mse,
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy)
    }

    /// Maps a raw score to a label where higher is always better.
    pub fn label(self, score: f64) -> f64 {
        if self.higher_is_better() {
            score
        } else {
            -score
        }
    }

    /// Inverse of [`Metric::label`].
    pub fn score(self, label: f64) -> f64 {
        self.label(label)
    }

    pub fn is_better(self, candidate: f64, incumbent: f64) -> bool {
        self.label(candidate) > self.label(incumbent)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "mse" => Ok(Metric::Mse),
            other => Err(format!("unknown metric `{other}` (expected accuracy or mse)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct PerformanceRecord {
    pub dataset_id: String,
    pub task: Task,
    pub metric: Metric,
    pub pipeline: PipelineGraph,
    pub score: f64,
    pub meta_features: MetaFeatureVector,
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    dataset_id: String,
    task: Task,
    metric: Metric,
    score: f64,
    meta_features: Vec<f64>,
    mf_version: u32,
    pipeline: PipelineGraph,
}

impl TryFrom<RecordWire> for PerformanceRecord {
    type Error = String;

    fn try_from(w: RecordWire) -> Result<Self, Self::Error> {
        let values: [f64; META_FEATURE_COUNT] = w.meta_features.try_into().map_err(|v: Vec<f64>| {
            format!("meta_features has {} values, expected {META_FEATURE_COUNT}", v.len())
        })?;
        Ok(PerformanceRecord {
            dataset_id: w.dataset_id,
            task: w.task,
            metric: w.metric,
            pipeline: w.pipeline,
            score: w.score,
            meta_features: MetaFeatureVector { values, schema_version: w.mf_version },
        })
    }
}

impl From<PerformanceRecord> for RecordWire {
    fn from(r: PerformanceRecord) -> Self {
        RecordWire {
            dataset_id: r.dataset_id,
            task: r.task,
            metric: r.metric,
            score: r.score,
            meta_features: r.meta_features.values.to_vec(),
            mf_version: r.meta_features.schema_version,
            pipeline: r.pipeline,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RecordError {
    #[error("metric {metric} does not evaluate {task} tasks")]
    MetricTaskMismatch { task: Task, metric: Metric },
    #[error("accuracy {0} outside [0, 1]")]
    AccuracyRange(f64),
    #[error("mse {0} is negative")]
    NegativeMse(f64),
    #[error("score is not finite")]
    NonFiniteScore,
    #[error("meta-feature vector has non-finite values")]
    NonFiniteMetaFeatures,
    #[error("meta-feature schema version {found}, expected {expected}")]
    MetaVersion { found: u32, expected: u32 },
    #[error("invalid pipeline: {0}")]
    Pipeline(#[from] PipelineViolation),
}

impl PerformanceRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.metric.task() != self.task {
            return Err(RecordError::MetricTaskMismatch { task: self.task, metric: self.metric });
        }
        if !self.score.is_finite() {
            return Err(RecordError::NonFiniteScore);
        }
        match self.metric {
            Metric::Accuracy if !(0.0..=1.0).contains(&self.score) => {
                return Err(RecordError::AccuracyRange(self.score))
            }
            Metric::Mse if self.score < 0.0 => return Err(RecordError::NegativeMse(self.score)),
            _ => {}
        }
        if self.meta_features.schema_version != META_SCHEMA_VERSION {
            return Err(RecordError::MetaVersion {
                found: self.meta_features.schema_version,
                expected: META_SCHEMA_VERSION,
            });
        }
        if !self.meta_features.is_finite() {
            return Err(RecordError::NonFiniteMetaFeatures);
        }
        self.pipeline.validate()?;
        Ok(())
    }

    /// Higher-is-better version of the score.
    pub fn label(&self) -> f64 {
        self.metric.label(self.score)
    }
}

/// Dedup key. Topology is the unpadded canonical token sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub dataset_id: String,
    pub task: Task,
    pub metric: Metric,
    pub topology: Vec<Token>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Added,
    Replaced,
    KeptIncumbent,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("invalid record: {0}")]
    Record(#[from] RecordError),
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<KbError> },
    #[error("malformed record: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl KbError {
    fn at_line(self, line: usize) -> KbError {
        KbError::Line { line, source: Box::new(self) }
    }

    fn io(path: &Path, source: std::io::Error) -> KbError {
        KbError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KbStats {
    pub records: usize,
    pub datasets: usize,
    pub topologies: usize,
    pub max_pipeline_length: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    records: BTreeMap<RecordKey, PerformanceRecord>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in key order.
    pub fn records(&self) -> impl Iterator<Item = &PerformanceRecord> {
        self.records.values()
    }

    pub fn get(&self, key: &RecordKey) -> Option<&PerformanceRecord> {
        self.records.get(key)
    }

    /// Adds `r`, or keeps the better of `r` and the stored record for the
    /// same key. Equal scores keep the stored record.
    pub fn insert(&mut self, r: PerformanceRecord) -> Result<InsertOutcome, RecordError> {
        r.validate()?;
        let key = RecordKey {
            dataset_id: r.dataset_id.clone(),
            task: r.task,
            metric: r.metric,
            topology: r.pipeline.canonical_tokens()?,
        };
        match self.records.get_mut(&key) {
            None => {
                self.records.insert(key, r);
                Ok(InsertOutcome::Added)
            }
            Some(existing) if r.metric.is_better(r.score, existing.score) => {
                *existing = r;
                Ok(InsertOutcome::Replaced)
            }
            Some(_) => Ok(InsertOutcome::KeptIncumbent),
        }
    }

    /// Records for one (task, metric) slice, in key order.
    pub fn slice(&self, task: Task, metric: Metric) -> impl Iterator<Item = &PerformanceRecord> {
        self.records.values().filter(move |r| r.task == task && r.metric == metric)
    }

    /// Distinct dataset ids in the slice, sorted.
    pub fn dataset_ids(&self, task: Task, metric: Metric) -> Vec<String> {
        self.slice(task, metric).map(|r| r.dataset_id.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Distinct topologies observed for (task, metric), ordered by canonical
    /// sequence.
    pub fn candidates(&self, task: Task, metric: Metric) -> Vec<PipelineGraph> {
        let mut seen: BTreeMap<&[Token], &PipelineGraph> = BTreeMap::new();
        for (key, r) in &self.records {
            if key.task == task && key.metric == metric {
                seen.entry(key.topology.as_slice()).or_insert(&r.pipeline);
            }
        }
        seen.into_values().cloned().collect()
    }

    /// Copy without any record of `dataset_id`.
    pub fn without_dataset(&self, dataset_id: &str) -> KnowledgeBase {
        KnowledgeBase {
            records: self
                .records
                .iter()
                .filter(|(k, _)| k.dataset_id != dataset_id)
                .map(|(k, r)| (k.clone(), r.clone()))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: KnowledgeBase) {
        for r in other.records.into_values() {
            self.insert(r).expect("records of a knowledge base are valid");
        }
    }

    pub fn stats(&self) -> KbStats {
        let datasets: BTreeSet<&str> = self.records.keys().map(|k| k.dataset_id.as_str()).collect();
        let topologies: BTreeSet<&[Token]> = self.records.keys().map(|k| k.topology.as_slice()).collect();
        KbStats {
            records: self.records.len(),
            datasets: datasets.len(),
            topologies: topologies.len(),
            max_pipeline_length: max_pipeline_length(self.records.values().map(|r| &r.pipeline))
                .unwrap_or(0),
        }
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<KnowledgeBase, KbError> {
        let mut kb = KnowledgeBase::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| KbError::Io { path: "<reader>".into(), source: e }.at_line(line_no))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PerformanceRecord =
                serde_json::from_str(&line).map_err(|e| KbError::from(e).at_line(line_no))?;
            kb.insert(record).map_err(|e| KbError::from(e).at_line(line_no))?;
        }
        Ok(kb)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<(), KbError> {
        for r in self.records.values() {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n").map_err(|e| KbError::Io { path: "<writer>".into(), source: e })?;
        }
        writer.flush().map_err(|e| KbError::Io { path: "<writer>".into(), source: e })
    }

    pub fn load(path: &Path) -> Result<KnowledgeBase, KbError> {
        let file = std::fs::File::open(path).map_err(|e| KbError::io(path, e))?;
        KnowledgeBase::read_from(BufReader::new(file))
    }

    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let file = std::fs::File::create(path).map_err(|e| KbError::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Family, Primitive};

    fn topo(name: &str) -> PipelineGraph {
        PipelineGraph::chain(&[
            Primitive::new("StandardScaler", Family::DataPreprocessing),
            Primitive::new(name, Family::PredictiveModel),
        ])
    }

    fn rec(dataset: &str, metric: Metric, pipeline: PipelineGraph, score: f64) -> PerformanceRecord {
        PerformanceRecord {
            dataset_id: dataset.into(),
            task: metric.task(),
            metric,
            pipeline,
            score,
            meta_features: MetaFeatureVector::new([0.5; META_FEATURE_COUNT]),
        }
    }

    #[test]
    fn keeps_higher_accuracy() {
        let mut kb = KnowledgeBase::new();
        kb.insert(rec("d1", Metric::Accuracy, topo("T"), 0.80)).unwrap();
        assert_eq!(kb.insert(rec("d1", Metric::Accuracy, topo("T"), 0.85)).unwrap(), InsertOutcome::Replaced);
        assert_eq!(kb.len(), 1);
        assert_eq!(kb.records().next().unwrap().score, 0.85);
    }

    #[test]
    fn keeps_lower_mse() {
        let mut kb = KnowledgeBase::new();
        kb.insert(rec("d1", Metric::Mse, topo("T"), 3.0)).unwrap();
        assert_eq!(kb.insert(rec("d1", Metric::Mse, topo("T"), 5.0)).unwrap(), InsertOutcome::KeptIncumbent);
        assert_eq!(kb.records().next().unwrap().score, 3.0);
    }

    #[test]
    fn distinct_datasets_are_distinct_keys() {
        let mut kb = KnowledgeBase::new();
        kb.insert(rec("d1", Metric::Accuracy, topo("T"), 0.8)).unwrap();
        kb.insert(rec("d2", Metric::Accuracy, topo("T"), 0.8)).unwrap();
        assert_eq!(kb.len(), 2);
    }

    #[test]
    fn rejects_invalid_records() {
        let mut kb = KnowledgeBase::new();
        let mut r = rec("d", Metric::Accuracy, topo("T"), 1.2);
        assert_eq!(kb.insert(r.clone()), Err(RecordError::AccuracyRange(1.2)));
        r.score = 0.5;
        r.task = Task::Regression;
        assert!(matches!(kb.insert(r), Err(RecordError::MetricTaskMismatch { .. })));
        assert_eq!(kb.insert(rec("d", Metric::Mse, topo("T"), -1.0)), Err(RecordError::NegativeMse(-1.0)));
        let broken = PipelineGraph::chain(&[Primitive::new("S", Family::DataPreprocessing)]);
        assert!(matches!(kb.insert(rec("d", Metric::Accuracy, broken, 0.5)), Err(RecordError::Pipeline(_))));
        assert!(kb.is_empty());
    }

    #[test]
    fn candidates_dedup_and_filter() {
        let mut kb = KnowledgeBase::new();
        assert!(kb.candidates(Task::Classification, Metric::Accuracy).is_empty());
        for d in ["a", "b", "c"] {
            for m in ["M1", "M2", "M3", "M4", "M5"] {
                kb.insert(rec(d, Metric::Accuracy, topo(m), 0.5)).unwrap();
            }
        }
        kb.insert(rec("r", Metric::Mse, topo("Reg"), 1.0)).unwrap();
        assert_eq!(kb.candidates(Task::Classification, Metric::Accuracy).len(), 5);
        let reg = kb.candidates(Task::Regression, Metric::Mse);
        assert_eq!(reg, vec![topo("Reg")]);
        let stats = kb.stats();
        assert_eq!((stats.records, stats.datasets, stats.topologies, stats.max_pipeline_length), (16, 4, 6, 3));
    }

    #[test]
    fn malformed_line_is_reported_by_number() {
        let mut kb = KnowledgeBase::new();
        for i in 0..6 {
            kb.insert(rec(&format!("d{i}"), Metric::Accuracy, topo("T"), 0.5)).unwrap();
        }
        let mut buf = Vec::new();
        kb.write_to(&mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("{\"dataset_id\": oops}\n");
        let err = KnowledgeBase::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, KbError::Line { line: 7, .. }), "{err}");
        assert!(err.to_string().starts_with("line 7"));
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let mut line = serde_json::to_value(rec("d", Metric::Accuracy, topo("T"), 0.5)).unwrap();
        line["mf_version"] = serde_json::json!(99);
        let err = KnowledgeBase::read_from(line.to_string().as_bytes()).unwrap_err();
        let KbError::Line { line: 1, source } = err else { panic!("{err}") };
        assert!(matches!(*source, KbError::Record(RecordError::MetaVersion { found: 99, .. })));
    }

    #[test]
    fn empty_input_is_empty_kb() {
        assert!(KnowledgeBase::read_from("".as_bytes()).unwrap().is_empty());
        assert!(KnowledgeBase::read_from("\n  \n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn wire_schema_field_names() {
        let v = serde_json::to_value(rec("d", Metric::Mse, topo("T"), 0.25)).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["dataset_id", "meta_features", "metric", "mf_version", "pipeline", "score", "task"].into()
        );
        assert_eq!(v["meta_features"].as_array().unwrap().len(), 24);
    }
}

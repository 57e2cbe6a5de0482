//! Ranks candidate machine-learning pipeline topologies for a tabular
//! dataset by predicted performance, without executing any of them.
//!
//! The offline phase accumulates `(dataset, pipeline, score)` observations
//! in a [`kb::KnowledgeBase`] and trains a pairwise gradient-boosted ranker
//! ([`ranker::RankModel`]) on concatenated dataset meta-features and
//! pipeline encodings. The online phase extracts meta-features from a new
//! dataset and orders the candidate pipelines with the trained model.

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod eval;
pub mod kb;
pub mod meta;
pub mod par;
pub mod pipeline;
pub mod ranker;
pub mod tabular;

//! Pipelines as primitive DAGs, and their canonical fixed-length token
//! sequences.
//!
//! A pipeline is an in-tree: data enters at `data` source nodes and flows
//! along edges to a single predictive-model sink. Encoding walks from the
//! sink towards the sources, so a primitive always precedes its inputs.
//! Parallel input branches are emitted deepest first; equally deep branches
//! are ordered by their own emitted token sequences. The result is padded
//! with `blank` tokens up to the slot count.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh64::xxh64;

pub const DATA_NAME: &str = "data";
pub const BLANK_NAME: &str = "blank";

const TOKEN_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DataPreprocessing,
    FeaturePreprocessing,
    FeatureEngineering,
    PredictiveModel,
    Special,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Special,
        Family::DataPreprocessing,
        Family::FeaturePreprocessing,
        Family::FeatureEngineering,
        Family::PredictiveModel,
    ];

    /// Numeric code used in feature vectors.
    pub fn ordinal(self) -> u8 {
        match self {
            Family::Special => 0,
            Family::DataPreprocessing => 1,
            Family::FeaturePreprocessing => 2,
            Family::FeatureEngineering => 3,
            Family::PredictiveModel => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::DataPreprocessing => "data_preprocessing",
            Family::FeaturePreprocessing => "feature_preprocessing",
            Family::FeatureEngineering => "feature_engineering",
            Family::PredictiveModel => "predictive_model",
            Family::Special => "special",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown primitive family `{s}`"))
    }
}

/// Stable 64-bit hash of a primitive name (xxHash64, seed 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(pub u64);

impl Token {
    pub fn of(name: &str) -> Token {
        Token(xxh64(name.as_bytes(), TOKEN_SEED))
    }

    pub fn blank() -> Token {
        Token::of(BLANK_NAME)
    }

    pub fn data() -> Token {
        Token::of(DATA_NAME)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Primitive {
    pub name: String,
    pub family: Family,
}

impl Primitive {
    pub fn new(name: impl Into<String>, family: Family) -> Self {
        Primitive { name: name.into(), family }
    }

    pub fn data() -> Self {
        Primitive::new(DATA_NAME, Family::Special)
    }

    pub fn blank() -> Self {
        Primitive::new(BLANK_NAME, Family::Special)
    }

    pub fn token(&self) -> Token {
        Token::of(&self.name)
    }

    pub fn is_data(&self) -> bool {
        self.name == DATA_NAME && self.family == Family::Special
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: u32,
    pub primitive: Primitive,
}

/// A pipeline topology. Edges run from a producer node to its consumer.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "GraphWire", into = "GraphWire")]
pub struct PipelineGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct NodeWire {
    id: u32,
    name: String,
    family: Family,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphWire {
    nodes: Vec<NodeWire>,
    edges: Vec<[u32; 2]>,
}

impl From<GraphWire> for PipelineGraph {
    fn from(w: GraphWire) -> Self {
        PipelineGraph {
            nodes: w
                .nodes
                .into_iter()
                .map(|n| Node { id: n.id, primitive: Primitive::new(n.name, n.family) })
                .collect(),
            edges: w.edges.into_iter().map(|[a, b]| (a, b)).collect(),
        }
    }
}

impl From<PipelineGraph> for GraphWire {
    fn from(g: PipelineGraph) -> Self {
        GraphWire {
            nodes: g
                .nodes
                .into_iter()
                .map(|n| NodeWire { id: n.id, name: n.primitive.name, family: n.primitive.family })
                .collect(),
            edges: g.edges.into_iter().map(|(a, b)| [a, b]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PipelineViolation {
    #[error("pipeline has no nodes")]
    Empty,
    #[error("node id {0} appears more than once")]
    DuplicateNodeId(u32),
    #[error("edge references unknown node id {0}")]
    UnknownNode(u32),
    #[error("primitive `{name}` misuses the reserved special family")]
    ReservedName { name: String },
    #[error("the blank padding primitive cannot appear in a pipeline")]
    BlankNode,
    #[error("pipeline graph is not acyclic")]
    Cyclic,
    #[error("pipeline must have exactly one sink, found {0}")]
    SinkCount(usize),
    #[error("sink `{0}` is not a predictive model")]
    SinkNotPredictive(String),
    #[error("source node `{0}` is not a data node")]
    SourceNotData(String),
    #[error("data node {0} has inputs")]
    DataHasInputs(u32),
    #[error("node {0} has no path to the sink")]
    Unreachable(u32),
    #[error("node {id} feeds {out_degree} consumers; pipelines must be in-trees")]
    NotInTree { id: u32, out_degree: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("invalid pipeline: {0}")]
    Invalid(#[from] PipelineViolation),
    #[error("pipeline has {nodes} primitives but only {slots} slots are available")]
    TooLong { nodes: usize, slots: usize },
}

impl PipelineGraph {
    pub fn new() -> Self {
        PipelineGraph::default()
    }

    /// Appends a node and returns its id.
    pub fn add(&mut self, primitive: Primitive) -> u32 {
        let id = self.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
        self.nodes.push(Node { id, primitive });
        id
    }

    pub fn connect(&mut self, from: u32, to: u32) {
        self.edges.push((from, to));
    }

    /// `data -> steps[0] -> ... -> steps[n-1]`.
    pub fn chain(steps: &[Primitive]) -> Self {
        let mut g = PipelineGraph::new();
        let mut prev = g.add(Primitive::data());
        for p in steps {
            let id = g.add(p.clone());
            g.connect(prev, id);
            prev = id;
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline graphs always serialize")
    }

    fn index_of(&self) -> Result<HashMap<u32, usize>, PipelineViolation> {
        let mut index = HashMap::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(PipelineViolation::DuplicateNodeId(n.id));
            }
        }
        Ok(index)
    }

    /// Edges as (producer index, consumer index) into `nodes`.
    fn indexed_edges(&self) -> Result<Vec<(usize, usize)>, PipelineViolation> {
        let index = self.index_of()?;
        self.edges
            .iter()
            .map(|&(a, b)| {
                let ia = *index.get(&a).ok_or(PipelineViolation::UnknownNode(a))?;
                let ib = *index.get(&b).ok_or(PipelineViolation::UnknownNode(b))?;
                Ok((ia, ib))
            })
            .collect()
    }

    /// Checks every pipeline invariant, reporting the first one violated.
    pub fn validate(&self) -> Result<(), PipelineViolation> {
        self.structure().map(|_| ())
    }

    fn structure(&self) -> Result<Structure, PipelineViolation> {
        if self.nodes.is_empty() {
            return Err(PipelineViolation::Empty);
        }
        let edges = self.indexed_edges()?;
        for n in &self.nodes {
            let p = &n.primitive;
            let reserved = p.name == DATA_NAME || p.name == BLANK_NAME;
            if reserved != (p.family == Family::Special) {
                return Err(PipelineViolation::ReservedName { name: p.name.clone() });
            }
            if p.name == BLANK_NAME {
                return Err(PipelineViolation::BlankNode);
            }
        }

        let n = self.nodes.len();
        let mut inputs = vec![Vec::new(); n];
        let mut outputs = vec![Vec::new(); n];
        for &(a, b) in &edges {
            outputs[a].push(b);
            inputs[b].push(a);
        }

        // Kahn's algorithm
        let mut indegree: Vec<usize> = inputs.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = ready.pop() {
            seen += 1;
            for &w in &outputs[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push(w);
                }
            }
        }
        if seen != n {
            return Err(PipelineViolation::Cyclic);
        }

        let sinks: Vec<usize> = (0..n).filter(|&i| outputs[i].is_empty()).collect();
        if sinks.len() != 1 {
            return Err(PipelineViolation::SinkCount(sinks.len()));
        }
        let sink = sinks[0];
        if self.nodes[sink].primitive.family != Family::PredictiveModel {
            return Err(PipelineViolation::SinkNotPredictive(self.nodes[sink].primitive.name.clone()));
        }
        for i in 0..n {
            let is_data = self.nodes[i].primitive.is_data();
            if inputs[i].is_empty() && !is_data {
                return Err(PipelineViolation::SourceNotData(self.nodes[i].primitive.name.clone()));
            }
            if is_data && !inputs[i].is_empty() {
                return Err(PipelineViolation::DataHasInputs(self.nodes[i].id));
            }
        }

        let mut reaches = vec![false; n];
        let mut stack = vec![sink];
        reaches[sink] = true;
        while let Some(v) = stack.pop() {
            for &u in &inputs[v] {
                if !reaches[u] {
                    reaches[u] = true;
                    stack.push(u);
                }
            }
        }
        if let Some(i) = reaches.iter().position(|r| !r) {
            return Err(PipelineViolation::Unreachable(self.nodes[i].id));
        }
        if let Some(i) = (0..n).find(|&i| i != sink && outputs[i].len() != 1) {
            return Err(PipelineViolation::NotInTree { id: self.nodes[i].id, out_degree: outputs[i].len() });
        }

        Ok(Structure { inputs, sink })
    }

    /// Node indices in emission order (sink first, inputs after their
    /// consumer, deepest branch first).
    pub fn emission_order(&self) -> Result<Vec<usize>, PipelineViolation> {
        let s = self.structure()?;
        Ok(self.emit(s.sink, &s.inputs).1)
    }

    /// Returns (longest path node count, emitted node indices) for the
    /// subtree rooted at `v`.
    fn emit(&self, v: usize, inputs: &[Vec<usize>]) -> (usize, Vec<usize>) {
        let mut branches: Vec<(usize, Vec<usize>, Vec<Token>)> = inputs[v]
            .iter()
            .map(|&u| {
                let (depth, order) = self.emit(u, inputs);
                let tokens = order.iter().map(|&i| self.nodes[i].primitive.token()).collect();
                (depth, order, tokens)
            })
            .collect();
        branches.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.2.cmp(&b.2)));
        let depth = 1 + branches.first().map_or(0, |b| b.0);
        let mut order = Vec::with_capacity(1 + branches.iter().map(|b| b.1.len()).sum::<usize>());
        order.push(v);
        for (_, sub, _) in branches {
            order.extend(sub);
        }
        (depth, order)
    }

    /// Unpadded emitted token sequence; the identity of a topology.
    pub fn canonical_tokens(&self) -> Result<Vec<Token>, PipelineViolation> {
        Ok(self.emission_order()?.into_iter().map(|i| self.nodes[i].primitive.token()).collect())
    }

    /// Primitive names in emission order.
    pub fn emitted_names(&self) -> Result<Vec<String>, PipelineViolation> {
        Ok(self.emission_order()?.into_iter().map(|i| self.nodes[i].primitive.name.clone()).collect())
    }
}

struct Structure {
    inputs: Vec<Vec<usize>>,
    sink: usize,
}

pub fn validate_pipeline(g: &PipelineGraph) -> Result<(), PipelineViolation> {
    g.validate()
}

/// Fixed-length token sequence, padded with `blank` tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PipelineSequence {
    pub tokens: Vec<Token>,
}

impl PipelineSequence {
    pub fn slots(&self) -> usize {
        self.tokens.len()
    }

    /// Tokens before the padding.
    pub fn unpadded(&self) -> &[Token] {
        let blank = Token::blank();
        let end = self.tokens.iter().position(|t| *t == blank).unwrap_or(self.tokens.len());
        &self.tokens[..end]
    }
}

pub fn encode_pipeline(g: &PipelineGraph, slots: usize) -> Result<PipelineSequence, EncodeError> {
    let mut tokens = g.canonical_tokens()?;
    if tokens.len() > slots {
        return Err(EncodeError::TooLong { nodes: tokens.len(), slots });
    }
    tokens.resize(slots, Token::blank());
    Ok(PipelineSequence { tokens })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("cannot take the maximum length of an empty pipeline list")]
pub struct EmptyPipelineList;

/// Node count of the largest pipeline, data nodes included.
pub fn max_pipeline_length<'a, I>(pipelines: I) -> Result<usize, EmptyPipelineList>
where
    I: IntoIterator<Item = &'a PipelineGraph>,
{
    pipelines.into_iter().map(PipelineGraph::len).max().ok_or(EmptyPipelineList)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VocabularyError {
    #[error("vocabulary must start with blank then data")]
    MissingReserved,
    #[error("primitive `{0}` appears twice in the vocabulary")]
    Duplicate(String),
}

/// Ordered primitive table. Index 0 is `blank`, index 1 is `data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Primitive>", into = "Vec<Primitive>")]
pub struct PrimitiveVocabulary {
    entries: Vec<Primitive>,
    index: HashMap<Token, usize>,
}

impl TryFrom<Vec<Primitive>> for PrimitiveVocabulary {
    type Error = VocabularyError;

    fn try_from(entries: Vec<Primitive>) -> Result<Self, Self::Error> {
        if entries.len() < 2 || entries[0] != Primitive::blank() || entries[1] != Primitive::data() {
            return Err(VocabularyError::MissingReserved);
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, p) in entries.iter().enumerate() {
            if index.insert(p.token(), i).is_some() {
                return Err(VocabularyError::Duplicate(p.name.clone()));
            }
        }
        Ok(PrimitiveVocabulary { entries, index })
    }
}

impl From<PrimitiveVocabulary> for Vec<Primitive> {
    fn from(v: PrimitiveVocabulary) -> Self {
        v.entries
    }
}

impl PrimitiveVocabulary {
    /// `blank`, `data`, then every other primitive seen, sorted by name.
    pub fn from_pipelines<'a, I>(pipelines: I) -> Self
    where
        I: IntoIterator<Item = &'a PipelineGraph>,
    {
        let mut named: BTreeMap<&str, Family> = BTreeMap::new();
        for g in pipelines {
            for n in &g.nodes {
                let p = &n.primitive;
                if p.family != Family::Special {
                    named.entry(p.name.as_str()).or_insert(p.family);
                }
            }
        }
        let mut entries = vec![Primitive::blank(), Primitive::data()];
        entries.extend(named.into_iter().map(|(name, family)| Primitive::new(name, family)));
        PrimitiveVocabulary::try_from(entries).expect("names are unique by construction")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Primitive] {
        &self.entries
    }

    pub fn lookup(&self, token: Token) -> Option<(usize, Family)> {
        self.index.get(&token).map(|&i| (i, self.entries[i].family))
    }
}

/// Numeric encoding of a sequence: `(vocabulary index, family ordinal)` per
/// slot, then a count per vocabulary entry. Tokens missing from the
/// vocabulary are treated as `blank`.
pub fn featurize_sequence(s: &PipelineSequence, v: &PrimitiveVocabulary) -> Vec<f64> {
    let mut slots = Vec::with_capacity(2 * s.slots());
    let mut bag = vec![0.0; v.len()];
    for &t in &s.tokens {
        let (idx, family) = v.lookup(t).unwrap_or_else(|| {
            log::warn!("primitive token {t} is not in the model vocabulary; treating it as blank");
            (0, Family::Special)
        });
        slots.push(idx as f64);
        slots.push(family.ordinal() as f64);
        bag[idx] += 1.0;
    }
    slots.extend(bag);
    slots
}

/// Frozen vocabulary plus slot count: everything needed to turn a pipeline
/// into a fixed-width row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceFeaturizer {
    pub vocabulary: PrimitiveVocabulary,
    pub slots: usize,
}

impl SequenceFeaturizer {
    pub fn from_pipelines<'a, I>(pipelines: I) -> Result<Self, EmptyPipelineList>
    where
        I: IntoIterator<Item = &'a PipelineGraph> + Clone,
    {
        let slots = max_pipeline_length(pipelines.clone())?;
        Ok(SequenceFeaturizer { vocabulary: PrimitiveVocabulary::from_pipelines(pipelines), slots })
    }

    pub fn width(&self) -> usize {
        2 * self.slots + self.vocabulary.len()
    }

    pub fn featurize(&self, g: &PipelineGraph) -> Result<Vec<f64>, EncodeError> {
        Ok(featurize_sequence(&encode_pipeline(g, self.slots)?, &self.vocabulary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prim(name: &str, family: Family) -> Primitive {
        Primitive::new(name, family)
    }

    fn model(name: &str) -> Primitive {
        prim(name, Family::PredictiveModel)
    }

    fn pre(name: &str) -> Primitive {
        prim(name, Family::DataPreprocessing)
    }

    /// Combiner joining data->Primitive1 and data->Primitive2->Primitive3,
    /// feeding a classifier.
    fn combiner_graph() -> PipelineGraph {
        let mut g = PipelineGraph::new();
        let d1 = g.add(Primitive::data());
        let p1 = g.add(pre("Primitive1"));
        let d2 = g.add(Primitive::data());
        let p2 = g.add(pre("Primitive2"));
        let p3 = g.add(pre("Primitive3"));
        let c = g.add(model("Combiner"));
        g.connect(d1, p1);
        g.connect(p1, c);
        g.connect(d2, p2);
        g.connect(p2, p3);
        g.connect(p3, c);
        g
    }

    #[test]
    fn combiner_example_emission() {
        let g = combiner_graph();
        assert_eq!(
            g.emitted_names().unwrap(),
            ["Combiner", "Primitive3", "Primitive2", "data", "Primitive1", "data"]
        );
        let s = encode_pipeline(&g, 6).unwrap();
        assert_eq!(s.slots(), 6);
        assert_eq!(s.tokens[0], Token::of("Combiner"));
    }

    #[test]
    fn chain_is_padded() {
        let g = PipelineGraph::chain(&[pre("P"), model("M")]);
        let s = encode_pipeline(&g, 5).unwrap();
        let expected: Vec<Token> = ["M", "P", "data", "blank", "blank"].iter().map(|n| Token::of(n)).collect();
        assert_eq!(s.tokens, expected);
        assert_eq!(s.unpadded().len(), 3);
    }

    #[test]
    fn equal_depth_ties_pick_smaller_emission_first() {
        let mut g = PipelineGraph::new();
        let da = g.add(Primitive::data());
        let a = g.add(pre("A"));
        let db = g.add(Primitive::data());
        let b = g.add(pre("B"));
        let c = g.add(model("Combiner"));
        // insert B's branch first so input order does not decide
        g.connect(db, b);
        g.connect(b, c);
        g.connect(da, a);
        g.connect(a, c);

        let branch_a = vec![Token::of("A"), Token::data()];
        let branch_b = vec![Token::of("B"), Token::data()];
        // enumerate both candidate orderings and keep the smaller one
        let head = vec![Token::of("Combiner")];
        let first = [head.clone(), branch_a.clone(), branch_b.clone()].concat();
        let second = [head, branch_b.clone(), branch_a.clone()].concat();
        let expected = if branch_a < branch_b { first } else { second };
        assert_eq!(g.canonical_tokens().unwrap(), expected);
    }

    #[test]
    fn validation_examples() {
        assert_eq!(PipelineGraph::chain(&[pre("scaler"), model("clf")]).validate(), Ok(()));

        let mut cyc = PipelineGraph::new();
        let d = cyc.add(Primitive::data());
        let a = cyc.add(pre("A"));
        let b = cyc.add(pre("B"));
        let m = cyc.add(model("M"));
        cyc.connect(d, a);
        cyc.connect(a, b);
        cyc.connect(b, a);
        cyc.connect(a, m);
        assert_eq!(cyc.validate(), Err(PipelineViolation::Cyclic));

        let bad_sink = PipelineGraph::chain(&[pre("scaler")]);
        assert_eq!(bad_sink.validate(), Err(PipelineViolation::SinkNotPredictive("scaler".into())));
    }

    #[test]
    fn validation_rejects_other_shapes() {
        assert_eq!(PipelineGraph::new().validate(), Err(PipelineViolation::Empty));

        let mut two_sinks = PipelineGraph::chain(&[model("M")]);
        two_sinks.add(model("N"));
        assert_eq!(two_sinks.validate(), Err(PipelineViolation::SinkCount(2)));

        let mut headless = PipelineGraph::new();
        let a = headless.add(pre("A"));
        let m = headless.add(model("M"));
        headless.connect(a, m);
        assert_eq!(headless.validate(), Err(PipelineViolation::SourceNotData("A".into())));

        // one data node feeding two consumers
        let mut shared = PipelineGraph::new();
        let d = shared.add(Primitive::data());
        let a = shared.add(pre("A"));
        let m = shared.add(model("M"));
        shared.connect(d, a);
        shared.connect(a, m);
        shared.connect(d, m);
        assert!(matches!(shared.validate(), Err(PipelineViolation::NotInTree { .. })));

        let mut dangling = PipelineGraph::chain(&[model("M")]);
        dangling.connect(0, 99);
        assert_eq!(dangling.validate(), Err(PipelineViolation::UnknownNode(99)));

        let misuse = PipelineGraph::chain(&[prim("data", Family::DataPreprocessing), model("M")]);
        assert!(matches!(misuse.validate(), Err(PipelineViolation::ReservedName { .. })));
        let blank = PipelineGraph::chain(&[Primitive::blank(), model("M")]);
        assert_eq!(blank.validate(), Err(PipelineViolation::BlankNode));
    }

    #[test]
    fn encode_rejects_long_or_invalid() {
        let g = combiner_graph();
        assert_eq!(encode_pipeline(&g, 5), Err(EncodeError::TooLong { nodes: 6, slots: 5 }));
        let bad = PipelineGraph::chain(&[pre("x")]);
        assert!(matches!(encode_pipeline(&bad, 5), Err(EncodeError::Invalid(_))));
    }

    #[test]
    fn max_length_examples() {
        let chain = PipelineGraph::chain(&[pre("P"), model("M")]);
        assert_eq!(max_pipeline_length([&chain, &combiner_graph()]), Ok(6));
        let two = PipelineGraph::chain(&[model("M")]);
        assert_eq!(max_pipeline_length([&two]), Ok(2));
        assert_eq!(max_pipeline_length(std::iter::empty()), Err(EmptyPipelineList));
    }

    #[test]
    fn featurize_chain_with_padding() {
        let g = PipelineGraph::chain(&[model("M")]);
        let vocab = PrimitiveVocabulary::from_pipelines([&g, &PipelineGraph::chain(&[model("K")])]);
        assert_eq!(vocab.len(), 4);
        let s = encode_pipeline(&g, 4).unwrap();
        let f = featurize_sequence(&s, &vocab);
        let m = vocab.lookup(Token::of("M")).unwrap().0 as f64;
        assert_eq!(f.len(), 2 * 4 + 4);
        assert_eq!(&f[..8], &[m, 4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // blank, data, K, M
        assert_eq!(&f[8..], &[2.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn topology_changes_slots_but_not_bag() {
        let a = PipelineGraph::chain(&[pre("X"), pre("Y"), model("M")]);
        let b = PipelineGraph::chain(&[pre("Y"), pre("X"), model("M")]);
        let fz = SequenceFeaturizer::from_pipelines([&a, &b]).unwrap();
        let (fa, fb) = (fz.featurize(&a).unwrap(), fz.featurize(&b).unwrap());
        let split = 2 * fz.slots;
        assert_ne!(fa[..split], fb[..split]);
        assert_eq!(fa[split..], fb[split..]);
    }

    #[test]
    fn combiner_bag_sums_to_six() {
        let g = combiner_graph();
        let fz = SequenceFeaturizer::from_pipelines([&g]).unwrap();
        let f = fz.featurize(&g).unwrap();
        assert_eq!(f[2 * fz.slots..].iter().sum::<f64>(), 6.0);
    }

    #[test]
    fn unknown_primitive_maps_to_blank() {
        let known = PipelineGraph::chain(&[model("M")]);
        let vocab = PrimitiveVocabulary::from_pipelines([&known]);
        let novel = PipelineGraph::chain(&[model("Novel")]);
        let f = featurize_sequence(&encode_pipeline(&novel, 2).unwrap(), &vocab);
        assert_eq!(&f[..4], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&f[4..], &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn token_is_pinned_xxh64() {
        // xxHash64 of the empty input with seed 0
        assert_eq!(Token::of("").0, 0xef46db3751d8e999);
        assert_eq!(Token::of("data"), Token::data());
        assert_ne!(Token::data(), Token::blank());
    }

    #[test]
    fn json_format() {
        let text = r#"{"nodes":[{"id":0,"name":"data","family":"special"},{"id":1,"name":"LogisticRegression","family":"predictive_model"}],"edges":[[0,1]]}"#;
        let g = PipelineGraph::from_json(text).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.to_json(), text);
        assert!(PipelineGraph::from_json(r#"{"nodes":[{"id":0,"name":"x","family":"weird"}],"edges":[]}"#).is_err());
    }

    #[test]
    fn vocabulary_serde_checks_reserved() {
        let v = PrimitiveVocabulary::from_pipelines([&PipelineGraph::chain(&[model("M")])]);
        let json = serde_json::to_string(&v).unwrap();
        let back: PrimitiveVocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<PrimitiveVocabulary>(r#"[{"name":"M","family":"predictive_model"}]"#).is_err());
    }
}

//! The artifact library: registration, retrieval planning and lexical match
//! scoring.
//!
//! Scores are cosine similarities between term-frequency vectors of
//! lowercased alphanumeric tokens. Retrieval ranks by score, breaking ties by
//! the lexicographically smaller id, so the result never depends on the order
//! entries were registered in.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::SchemaRegistry;
use crate::task::{ResourceKind, TaskSpecification};
use crate::text::{split_clauses, tokens};

/// Entries returned per query when a plan does not say otherwise.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Resource,
    Skill,
    Tool,
    ExternalAgent,
    ReferenceGraph,
}

impl EntryKind {
    pub const ALL: [EntryKind; 5] =
        [Self::Resource, Self::Skill, Self::Tool, Self::ExternalAgent, Self::ReferenceGraph];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Resource => "resource",
            Self::Skill => "skill",
            Self::Tool => "tool",
            Self::ExternalAgent => "external_agent",
            Self::ReferenceGraph => "reference_graph",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryEntry {
    pub id: String,
    pub kind: EntryKind,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<String>,
    #[serde(default = "builtin_provenance")]
    pub provenance: String,
}

fn builtin_provenance() -> String {
    "builtin".into()
}

impl LibraryEntry {
    pub fn new(id: impl Into<String>, kind: EntryKind, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            description: description.into(),
            input_schema: None,
            output_schema: None,
            provenance: builtin_provenance(),
        }
    }

    pub fn with_schemas(mut self, input: impl Into<String>, output: impl Into<String>) -> Self {
        self.input_schema = Some(input.into());
        self.output_schema = Some(output.into());
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Text the scorer compares queries against.
    pub fn match_text(&self) -> String {
        let mut text = self.description.clone();
        for schema in [&self.input_schema, &self.output_schema].into_iter().flatten() {
            text.push(' ');
            text.push_str(schema);
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error("DuplicateId: {0}")]
    DuplicateId(String),
    #[error("MissingSchema: {0} needs both input_schema and output_schema")]
    MissingSchema(String),
    #[error("InvalidId: `{0}` (use letters, digits, `_`, `-` or `.`)")]
    InvalidId(String),
}

/// Identifiers double as file names in the on-disk library layout.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Library {
    entries: BTreeMap<String, LibraryEntry>,
    /// Artifact schemas and rename rules the entries refer to.
    pub schemas: SchemaRegistry,
}

impl Library {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entry: LibraryEntry) -> Result<String, LibraryError> {
        if !is_valid_id(&entry.id) {
            return Err(LibraryError::InvalidId(entry.id));
        }
        if self.entries.contains_key(&entry.id) {
            return Err(LibraryError::DuplicateId(entry.id));
        }
        let needs_schemas = matches!(entry.kind, EntryKind::Tool | EntryKind::ExternalAgent);
        if needs_schemas && (entry.input_schema.is_none() || entry.output_schema.is_none()) {
            return Err(LibraryError::MissingSchema(entry.id));
        }
        let id = entry.id.clone();
        self.entries.insert(id.clone(), entry);
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<&LibraryEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in id order.
    pub fn entries(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values()
    }

    pub fn of_kind(&self, kind: EntryKind) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.values().filter(move |e| e.kind == kind)
    }

    /// Top `k` entries of `kind` for `query`.
    pub fn top_k(&self, query: &str, kind: EntryKind, k: usize) -> Vec<Hit> {
        let mut hits: Vec<Hit> = self
            .of_kind(kind)
            .map(|e| Hit { id: e.id.clone(), score: score_match(query, e) })
            .collect();
        hits.sort_by(Hit::rank_order);
        hits.truncate(k);
        hits
    }
}

/// Term-frequency vector over lowercased alphanumeric tokens.
fn term_frequencies(text: &str) -> BTreeMap<String, u64> {
    let mut tf = BTreeMap::new();
    for t in tokens(text) {
        *tf.entry(t).or_insert(0) += 1;
    }
    tf
}

/// Cosine similarity of two texts' term-frequency vectors, in `[0, 1]`.
pub fn cosine_similarity(a: &str, b: &str) -> f64 {
    let ta = term_frequencies(a);
    let tb = term_frequencies(b);
    let norm = |tf: &BTreeMap<String, u64>| tf.values().map(|c| c * c).sum::<u64>();
    let (na, nb) = (norm(&ta), norm(&tb));
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let dot: u64 = ta.iter().filter_map(|(t, c)| tb.get(t).map(|d| c * d)).sum();
    // sqrt of the product keeps identical vectors at exactly 1.0
    let score = dot as f64 / libm::sqrt(na as f64 * nb as f64);
    score.clamp(0.0, 1.0)
}

/// Score `entry` against `query`: cosine over the entry's description plus
/// its schema ids.
pub fn score_match(query: &str, entry: &LibraryEntry) -> f64 {
    cosine_similarity(query, &entry.match_text())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

impl Hit {
    /// Descending score, then ascending id.
    pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
        b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub target: EntryKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPlan {
    pub queries: Vec<RetrievalQuery>,
    pub per_kind_k: BTreeMap<EntryKind, usize>,
}

impl RetrievalPlan {
    pub fn k_for(&self, kind: EntryKind) -> usize {
        self.per_kind_k.get(&kind).copied().unwrap_or(DEFAULT_TOP_K)
    }
}

/// Decide what to look up before synthesis.
///
/// Each goal clause asks for skills and tools; a non-empty context asks for
/// reference resources; every repository asks for a wrapped external agent
/// and every reference graph for its library counterpart.
pub fn formulate_retrieval_plan(spec: &TaskSpecification) -> RetrievalPlan {
    let mut queries = Vec::new();
    for (_, clause) in split_clauses(&spec.goal) {
        for target in [EntryKind::Skill, EntryKind::Tool] {
            queries.push(RetrievalQuery { target, text: clause.clone() });
        }
    }
    if !spec.context.trim().is_empty() {
        queries.push(RetrievalQuery { target: EntryKind::Resource, text: spec.context.clone() });
    }
    for r in &spec.resources {
        let target = match r.kind {
            ResourceKind::Repository => EntryKind::ExternalAgent,
            ResourceKind::ReferenceGraph => EntryKind::ReferenceGraph,
            _ => continue,
        };
        let mut text = r.description.clone();
        text.push(' ');
        text.push_str(&r.id);
        queries.push(RetrievalQuery { target, text: text.trim().to_string() });
    }
    let per_kind_k = EntryKind::ALL.iter().map(|k| (*k, DEFAULT_TOP_K)).collect();
    RetrievalPlan { queries, per_kind_k }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: RetrievalQuery,
    pub hits: Vec<Hit>,
}

/// Run every query of `plan`. Only entries of the targeted kind are
/// considered; there is no cross-kind fallback.
pub fn retrieve(library: &Library, plan: &RetrievalPlan) -> Vec<RankedList> {
    plan.queries
        .iter()
        .map(|q| RankedList { query: q.clone(), hits: library.top_k(&q.text, q.target, plan.k_for(q.target)) })
        .collect()
}

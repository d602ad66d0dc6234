//! Workflow graph: roles, nodes, typed edges, attachments and the interface
//! protocol, plus validation, staging, patching and reference import.
//!
//! Graphs are plain values. Nothing in this module mutates a graph in place;
//! [`apply_patch`] returns a new one.

mod patch;
mod reference;
mod stages;
mod validate;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{ArtifactSchema, FieldMapping};
use crate::canonical::to_canonical_string;
use crate::report::ValidationReport;

pub use patch::{apply_patch, diff_graphs, AttachmentChange, EdgeChange, GraphPatch, NodeChange};
pub use reference::{import_reference_graph, GraphSkeleton, SkeletonNode};
pub use stages::{stage_index, topological_stages};
pub use validate::validate_graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Agent,
    Broker,
    Tool,
    External,
    Evaluator,
    Integrator,
}

/// What a node contributes to the workflow, used to label stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Profiling,
    SandboxConstruction,
    AgentRegistration,
    #[default]
    Execution,
    BrokerValidation,
    Evaluation,
    Integration,
    Reporting,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Profiling => "profiling",
            Self::SandboxConstruction => "sandbox",
            Self::AgentRegistration => "registration",
            Self::Execution => "execution",
            Self::BrokerValidation => "broker",
            Self::Evaluation => "evaluation",
            Self::Integration => "integration",
            Self::Reporting => "reporting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub instruction: String,
    pub executor_binding: String,
    #[serde(default)]
    pub phase: Phase,
    /// Schema this node expects on its inbound edges. `None` accepts any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_schema: Option<String>,
    /// Tool backend the executor should call, when several are attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_tool: Option<String>,
    /// Set on a parallel solver: the node whose work it duplicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_of: Option<String>,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
            instruction: String::new(),
            executor_binding: String::new(),
            phase: Phase::default(),
            input_schema: None,
            output_schema: None,
            active_tool: None,
            alternative_of: None,
        }
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = instruction.into();
        self
    }

    pub fn with_binding(mut self, binding: impl Into<String>) -> Self {
        self.executor_binding = binding.into();
        self
    }

    pub fn with_schemas(mut self, input: Option<&str>, output: Option<&str>) -> Self {
        self.input_schema = input.map(String::from);
        self.output_schema = output.map(String::from);
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// Solver group: the original node for a parallel solver, else itself.
    pub fn group(&self) -> &str {
        self.alternative_of.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub schema: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, schema: impl Into<String>) -> Self {
        Self { from: from.into(), to: to.into(), schema: schema.into() }
    }

    pub fn touches(&self, nodes: &BTreeSet<String>) -> bool {
        nodes.contains(&self.from) || nodes.contains(&self.to)
    }
}

/// Interface protocol: schemas carried on edges, broker field mappings, and
/// which attached entries are callable tools.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceProtocol {
    #[serde(default)]
    pub schemas: BTreeMap<String, ArtifactSchema>,
    /// broker node id -> mapping
    #[serde(default)]
    pub mappings: BTreeMap<String, FieldMapping>,
    #[serde(default)]
    pub tools: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// node id -> attached library entry ids
    #[serde(default)]
    pub attachments: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub protocol: InterfaceProtocol,
    /// node id -> role description
    #[serde(default)]
    pub roles: BTreeMap<String, String>,
}

/// Structural equality: node and edge order are irrelevant and an empty
/// attachment record equals no record.
impl PartialEq for WorkflowGraph {
    fn eq(&self, other: &Self) -> bool {
        let a = self.normalized();
        let b = other.normalized();
        let non_empty = |m: &BTreeMap<String, BTreeSet<String>>| {
            m.iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k.clone(), v.clone())).collect::<BTreeMap<_, _>>()
        };
        a.nodes == b.nodes
            && a.edges == b.edges
            && non_empty(&a.attachments) == non_empty(&b.attachments)
            && a.protocol == b.protocol
            && a.roles == b.roles
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("CyclicGraph: nodes {0:?} lie on a cycle")]
    CyclicGraph(Vec<String>),
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
    #[error("PatchOutOfLocality: {0}")]
    PatchOutOfLocality(String),
    #[error("PatchYieldsInvalidGraph: {0}")]
    PatchYieldsInvalidGraph(ValidationReport),
    #[error("InconsistentPatch: {0}")]
    InconsistentPatch(String),
    #[error("CyclicReference: {0}")]
    CyclicReference(String),
    #[error("EmptyGraph")]
    EmptyGraph,
}

impl GraphError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::CyclicGraph(_) => "CyclicGraph",
            Self::MalformedDocument(_) => "MalformedDocument",
            Self::PatchOutOfLocality(_) => "PatchOutOfLocality",
            Self::PatchYieldsInvalidGraph(_) => "PatchYieldsInvalidGraph",
            Self::InconsistentPatch(_) => "InconsistentPatch",
            Self::CyclicReference(_) => "CyclicReference",
            Self::EmptyGraph => "EmptyGraph",
        }
    }
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Nodes sorted by id, edges by (from, to, schema).
    pub fn normalized(&self) -> Self {
        let mut g = self.clone();
        g.normalize();
        g
    }

    pub fn normalize(&mut self) {
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.edges.sort();
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    pub fn in_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn out_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn add_node(&mut self, node: Node, role: impl Into<String>) {
        self.roles.insert(node.id.clone(), role.into());
        self.nodes.push(node);
    }

    pub fn add_edge(&mut self, from: &str, to: &str, schema: &str) {
        self.edges.push(Edge::new(from, to, schema));
    }

    pub fn role(&self, id: &str) -> &str {
        self.roles.get(id).map(String::as_str).unwrap_or("")
    }

    pub fn attachments_of(&self, id: &str) -> impl Iterator<Item = &String> {
        self.attachments.get(id).into_iter().flatten()
    }

    /// Mapping for a broker node; parallel solvers share their original's.
    pub fn mapping_for(&self, node: &Node) -> Option<&FieldMapping> {
        self.protocol.mappings.get(&node.id).or_else(|| self.protocol.mappings.get(node.group()))
    }

    /// `ids` plus everything reachable from them.
    pub fn descendants_inclusive(&self, ids: &BTreeSet<String>) -> BTreeSet<String> {
        let mut seen: BTreeSet<String> = ids.iter().filter(|i| self.contains(i)).cloned().collect();
        let mut stack: Vec<String> = seen.iter().cloned().collect();
        while let Some(id) = stack.pop() {
            for e in self.out_edges(&id) {
                if seen.insert(e.to.clone()) {
                    stack.push(e.to.clone());
                }
            }
        }
        seen
    }

    /// Canonical JSON: sorted keys, nodes and edges in canonical order.
    pub fn to_canonical(&self) -> String {
        to_canonical_string(&self.normalized()).expect("graph is always serializable")
    }

    pub fn from_json(document: &str) -> Result<Self, GraphError> {
        let mut g: Self =
            serde_json::from_str(document).map_err(|e| GraphError::MalformedDocument(e.to_string()))?;
        g.normalize();
        Ok(g)
    }
}

/// Canonical serialization of a graph.
pub fn serialize_graph(graph: &WorkflowGraph) -> String {
    graph.to_canonical()
}

pub fn deserialize_graph(document: &str) -> Result<WorkflowGraph, GraphError> {
    WorkflowGraph::from_json(document)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_document() {
        let g = deserialize_graph(r#"{"nodes":[],"edges":[]}"#).unwrap();
        assert!(g.nodes.is_empty());
        assert!(validate_graph(&g).is_empty());
        assert_eq!(
            serialize_graph(&g),
            r#"{"attachments":{},"edges":[],"nodes":[],"protocol":{"mappings":{},"schemas":{},"tools":[]},"roles":{}}"#
        );
    }

    #[test]
    fn unknown_node_kind_is_malformed() {
        let doc = r#"{"nodes":[{"id":"a","kind":"wizard","instruction":"","executor_binding":""}],"edges":[]}"#;
        assert_eq!(deserialize_graph(doc).unwrap_err().code(), "MalformedDocument");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let mut g = WorkflowGraph::new();
        g.add_node(Node::new("b", NodeKind::Agent).with_instruction("second"), "second role");
        g.add_node(Node::new("a", NodeKind::Tool).with_schemas(None, Some("free_text")), "first role");
        g.add_edge("a", "b", "free_text");
        g.attachments.entry("a".into()).or_default().insert("skill.x".into());
        let text = serialize_graph(&g);
        let back = deserialize_graph(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(serialize_graph(&back), text);
    }
}

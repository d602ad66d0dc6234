//! Import of externally produced agent graphs as structural skeletons.
//!
//! Accepted input: `{"nodes": [{"id", "role" | "label" | "operator"}],
//! "edges": [{"from", "to"}] | [["from", "to"]]}`. Loops are rejected;
//! iteration is left to runtime repair.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GraphError, Node, NodeKind, WorkflowGraph};
use crate::canonical::to_canonical_string;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonNode {
    pub id: String,
    pub role: String,
    pub kind: NodeKind,
}

/// Role nodes and edges only: no attachments, no protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSkeleton {
    pub nodes: Vec<SkeletonNode>,
    pub edges: Vec<(String, String)>,
}

impl GraphSkeleton {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("skeleton is always serializable")
    }

    pub fn from_json(document: &str) -> Result<Self, GraphError> {
        serde_json::from_str(document).map_err(|e| GraphError::MalformedDocument(e.to_string()))
    }

    /// The skeleton as a bare workflow graph (no schemas, no bindings).
    pub fn to_graph(&self) -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        for n in &self.nodes {
            g.add_node(Node::new(n.id.clone(), n.kind), n.role.clone());
        }
        for (a, b) in &self.edges {
            g.add_edge(a, b, "");
        }
        g.normalize();
        g
    }
}

#[derive(Deserialize)]
struct ExternalNode {
    id: String,
    #[serde(default)]
    role: Option<String>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    operator: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExternalEdge {
    Pair(String, String),
    Object { from: String, to: String },
}

#[derive(Deserialize)]
struct ExternalGraph {
    #[serde(default)]
    nodes: Vec<ExternalNode>,
    #[serde(default)]
    edges: Vec<ExternalEdge>,
}

/// One agent role node per external node, edges preserved.
pub fn import_reference_graph(document: &str) -> Result<GraphSkeleton, GraphError> {
    let ext: ExternalGraph =
        serde_json::from_str(document).map_err(|e| GraphError::MalformedDocument(e.to_string()))?;
    if ext.nodes.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let mut ids = BTreeSet::new();
    let mut nodes = Vec::with_capacity(ext.nodes.len());
    for n in ext.nodes {
        if !ids.insert(n.id.clone()) {
            return Err(GraphError::MalformedDocument(format!("duplicate node `{}`", n.id)));
        }
        let role = n.role.or(n.label).or(n.operator).unwrap_or_else(|| n.id.clone());
        nodes.push(SkeletonNode { id: n.id, role, kind: NodeKind::Agent });
    }
    let mut edges = Vec::with_capacity(ext.edges.len());
    let mut seen = BTreeSet::new();
    for e in ext.edges {
        let (from, to) = match e {
            ExternalEdge::Pair(a, b) | ExternalEdge::Object { from: a, to: b } => (a, b),
        };
        if from == to {
            return Err(GraphError::CyclicReference(format!("self-loop on `{from}`")));
        }
        for end in [&from, &to] {
            if !ids.contains(end) {
                return Err(GraphError::MalformedDocument(format!("edge names unknown node `{end}`")));
            }
        }
        if seen.insert((from.clone(), to.clone())) {
            edges.push((from, to));
        }
    }
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    edges.sort();
    let skeleton = GraphSkeleton { nodes, edges };
    if let Err(cycle) = super::stages::depths(&skeleton.to_graph()) {
        return Err(GraphError::CyclicReference(format!("cycle through {}", cycle.join(", "))));
    }
    Ok(skeleton)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_reference() {
        let doc = r#"{"nodes":[{"id":"gen","operator":"generate"},{"id":"test","label":"test"},{"id":"refine","role":"refine"}],
                      "edges":[["gen","test"],{"from":"test","to":"refine"}]}"#;
        let sk = import_reference_graph(doc).unwrap();
        assert_eq!(sk.nodes.len(), 3);
        assert_eq!(sk.nodes.iter().find(|n| n.id == "gen").unwrap().role, "generate");
        assert!(sk.nodes.iter().all(|n| n.kind == NodeKind::Agent));
        assert_eq!(sk.edges, alloc::vec![("gen".into(), "test".into()), ("test".into(), "refine".into())]);
        assert_eq!(GraphSkeleton::from_json(&sk.to_canonical()).unwrap(), sk);
    }

    #[test]
    fn empty_and_loops() {
        assert_eq!(import_reference_graph(r#"{"nodes":[],"edges":[]}"#).unwrap_err(), GraphError::EmptyGraph);
        let self_loop = r#"{"nodes":[{"id":"a"}],"edges":[["a","a"]]}"#;
        assert_eq!(import_reference_graph(self_loop).unwrap_err().code(), "CyclicReference");
        let cycle = r#"{"nodes":[{"id":"a"},{"id":"b"}],"edges":[["a","b"],["b","a"]]}"#;
        assert_eq!(import_reference_graph(cycle).unwrap_err().code(), "CyclicReference");
    }
}

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{validate_graph, Edge, GraphError, Node, WorkflowGraph};
use crate::canonical::to_canonical_string;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeChange {
    Add { node: Node, role: String },
    Remove { id: String },
    Modify { node: Node, role: String },
}

impl NodeChange {
    pub fn node_id(&self) -> &str {
        match self {
            Self::Add { node, .. } | Self::Modify { node, .. } => &node.id,
            Self::Remove { id } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EdgeChange {
    Add { edge: Edge },
    Remove { edge: Edge },
}

impl EdgeChange {
    pub fn edge(&self) -> &Edge {
        match self {
            Self::Add { edge } | Self::Remove { edge } => edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttachmentChange {
    Add { node: String, entry: String },
    Remove { node: String, entry: String },
}

impl AttachmentChange {
    pub fn node_id(&self) -> &str {
        match self {
            Self::Add { node, .. } | Self::Remove { node, .. } => node,
        }
    }
}

/// A delta confined to `target_nodes`: node and attachment changes must name
/// a target, edge changes must touch one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphPatch {
    pub target_nodes: BTreeSet<String>,
    #[serde(default)]
    pub node_changes: Vec<NodeChange>,
    #[serde(default)]
    pub edge_changes: Vec<EdgeChange>,
    #[serde(default)]
    pub attachment_changes: Vec<AttachmentChange>,
}

impl GraphPatch {
    pub fn is_empty(&self) -> bool {
        self.node_changes.is_empty() && self.edge_changes.is_empty() && self.attachment_changes.is_empty()
    }

    /// First change that reaches outside `closure`, if any.
    pub fn escape_from(&self, closure: &BTreeSet<String>) -> Option<String> {
        if let Some(c) = self.node_changes.iter().find(|c| !closure.contains(c.node_id())) {
            return Some(format!("node change on `{}`", c.node_id()));
        }
        if let Some(c) = self.edge_changes.iter().find(|c| !c.edge().touches(closure)) {
            let e = c.edge();
            return Some(format!("edge change on {} -> {}", e.from, e.to));
        }
        self.attachment_changes
            .iter()
            .find(|c| !closure.contains(c.node_id()))
            .map(|c| format!("attachment change on `{}`", c.node_id()))
    }

    /// True when every change stays within the closure of `nodes`.
    pub fn is_local_to(&self, nodes: &BTreeSet<String>) -> bool {
        self.escape_from(nodes).is_none()
    }

    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("patch is always serializable")
    }
}

/// Apply `patch` to a copy of `graph`.
///
/// Removing a node also drops its role and attachment record; its edges must
/// be removed explicitly. The result must validate cleanly.
pub fn apply_patch(graph: &WorkflowGraph, patch: &GraphPatch) -> Result<WorkflowGraph, GraphError> {
    if let Some(escape) = patch.escape_from(&patch.target_nodes) {
        return Err(GraphError::PatchOutOfLocality(escape));
    }
    let mut g = graph.clone();

    for change in &patch.node_changes {
        match change {
            NodeChange::Add { node, role } => {
                if g.contains(&node.id) {
                    return Err(GraphError::InconsistentPatch(format!("node `{}` already exists", node.id)));
                }
                g.add_node(node.clone(), role.clone());
            }
            NodeChange::Remove { id } => {
                let before = g.nodes.len();
                g.nodes.retain(|n| &n.id != id);
                if g.nodes.len() == before {
                    return Err(GraphError::InconsistentPatch(format!("cannot remove unknown node `{id}`")));
                }
                g.roles.remove(id);
                g.attachments.remove(id);
            }
            NodeChange::Modify { node, role } => {
                let slot = g
                    .node_mut(&node.id)
                    .ok_or_else(|| GraphError::InconsistentPatch(format!("cannot modify unknown node `{}`", node.id)))?;
                *slot = node.clone();
                g.roles.insert(node.id.clone(), role.clone());
            }
        }
    }

    for change in &patch.edge_changes {
        match change {
            EdgeChange::Add { edge } => {
                if g.edges.iter().any(|e| e.from == edge.from && e.to == edge.to) {
                    return Err(GraphError::InconsistentPatch(format!("edge {} -> {} already exists", edge.from, edge.to)));
                }
                g.edges.push(edge.clone());
            }
            EdgeChange::Remove { edge } => {
                let pos = g.edges.iter().position(|e| e == edge).ok_or_else(|| {
                    GraphError::InconsistentPatch(format!("cannot remove unknown edge {} -> {}", edge.from, edge.to))
                })?;
                g.edges.remove(pos);
            }
        }
    }

    for change in &patch.attachment_changes {
        match change {
            AttachmentChange::Add { node, entry } => {
                g.attachments.entry(node.clone()).or_default().insert(entry.clone());
            }
            AttachmentChange::Remove { node, entry } => {
                let removed = g.attachments.get_mut(node).is_some_and(|set| set.remove(entry));
                if !removed {
                    return Err(GraphError::InconsistentPatch(format!("`{entry}` is not attached to `{node}`")));
                }
            }
        }
    }

    g.normalize();
    let report = validate_graph(&g);
    if !report.is_empty() {
        return Err(GraphError::PatchYieldsInvalidGraph(report));
    }
    Ok(g)
}

/// Smallest patch turning `before` into `after`.
///
/// Targets are the nodes whose own record, role or attachments change. An
/// edge change between two untouched nodes adds its source to the targets.
pub fn diff_graphs(before: &WorkflowGraph, after: &WorkflowGraph) -> GraphPatch {
    let mut patch = GraphPatch::default();
    let old: BTreeMap<&str, &Node> = before.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let new: BTreeMap<&str, &Node> = after.nodes.iter().map(|n| (n.id.as_str(), n)).collect();

    for (id, node) in &old {
        match new.get(id) {
            None => patch.node_changes.push(NodeChange::Remove { id: String::from(*id) }),
            Some(n) if n != node || before.role(id) != after.role(id) => {
                patch.node_changes.push(NodeChange::Modify { node: (*n).clone(), role: String::from(after.role(id)) })
            }
            Some(_) => {}
        }
    }
    for (id, node) in &new {
        if !old.contains_key(id) {
            patch.node_changes.push(NodeChange::Add { node: (*node).clone(), role: String::from(after.role(id)) });
        }
    }

    let empty = BTreeSet::new();
    let ids: BTreeSet<&str> = old.keys().chain(new.keys()).copied().collect();
    for id in ids {
        let a = before.attachments.get(id).unwrap_or(&empty);
        let b = after.attachments.get(id).unwrap_or(&empty);
        if new.contains_key(id) {
            for entry in a.difference(b) {
                patch.attachment_changes.push(AttachmentChange::Remove { node: String::from(id), entry: entry.clone() });
            }
        }
        for entry in b.difference(a) {
            patch.attachment_changes.push(AttachmentChange::Add { node: String::from(id), entry: entry.clone() });
        }
    }

    let old_edges: BTreeSet<&Edge> = before.edges.iter().collect();
    let new_edges: BTreeSet<&Edge> = after.edges.iter().collect();
    // removals first so a schema change on one edge applies cleanly
    for e in old_edges.difference(&new_edges) {
        patch.edge_changes.push(EdgeChange::Remove { edge: (*e).clone() });
    }
    for e in new_edges.difference(&old_edges) {
        patch.edge_changes.push(EdgeChange::Add { edge: (*e).clone() });
    }

    patch.target_nodes.extend(patch.node_changes.iter().map(|c| String::from(c.node_id())));
    patch.target_nodes.extend(patch.attachment_changes.iter().map(|c| String::from(c.node_id())));
    for c in &patch.edge_changes {
        let e = c.edge();
        if !e.touches(&patch.target_nodes) {
            patch.target_nodes.insert(e.from.clone());
        }
    }
    patch
}

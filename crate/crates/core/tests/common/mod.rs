#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use weave_core::artifact::{builtin_schemas, FREE_TEXT_SCHEMA};
use weave_core::graph::{Node, NodeKind, WorkflowGraph};

/// Raw material for a random DAG: edges only run from lower to higher index.
#[derive(Debug, Clone)]
pub struct DagSeed {
    pub nodes: usize,
    pub edge_bits: Vec<bool>,
    pub tool_counts: Vec<u8>,
}

pub fn dag_seed(max_nodes: usize) -> impl Strategy<Value = DagSeed> {
    (1..=max_nodes).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (Just(n), prop::collection::vec(prop::bool::weighted(0.25), pairs), prop::collection::vec(0u8..4, n))
            .prop_map(|(nodes, edge_bits, tool_counts)| DagSeed { nodes, edge_bits, tool_counts })
    })
}

pub fn node_id(i: usize) -> String {
    format!("n{i:02}")
}

/// Agents `n00..` joined by free-text edges, each with `tool_counts[i]`
/// attached tools (the first one active).
pub fn build_dag(seed: &DagSeed) -> WorkflowGraph {
    let mut g = WorkflowGraph::new();
    for s in builtin_schemas() {
        g.protocol.schemas.insert(s.id.clone(), s);
    }
    for i in 0..seed.nodes {
        let id = node_id(i);
        let mut node = Node::new(id.clone(), NodeKind::Agent).with_instruction(format!("step {i}")).with_binding("agent");
        let tools: BTreeSet<String> = (0..seed.tool_counts[i]).map(|t| format!("tool_{i}_{t}")).collect();
        node.active_tool = tools.iter().next().cloned();
        g.protocol.tools.extend(tools.iter().cloned());
        if !tools.is_empty() {
            g.attachments.insert(id.clone(), tools);
        }
        g.add_node(node, format!("role {i}"));
    }
    let mut bit = 0;
    for a in 0..seed.nodes {
        for b in a + 1..seed.nodes {
            if seed.edge_bits[bit] {
                g.add_edge(&node_id(a), &node_id(b), FREE_TEXT_SCHEMA);
            }
            bit += 1;
        }
    }
    g.normalize();
    g
}

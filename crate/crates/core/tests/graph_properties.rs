mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{build_dag, dag_seed, node_id};
use proptest::prelude::*;
use weave_core::graph::{apply_patch, diff_graphs, stage_index, topological_stages, validate_graph, WorkflowGraph};
use weave_core::review::{repair, RepairAction};
use weave_core::runtime::{CostLedger, Evidence, EvidenceSignal, ExecutionTrace, Outcome, Severity};

const ACTIONS: [RepairAction; 4] = [
    RepairAction::RetryWithUpdatedInstruction,
    RepairAction::ReformatUpstreamOutput,
    RepairAction::SwapToolBackend,
    RepairAction::AddParallelSolver,
];

fn empty_trace() -> ExecutionTrace {
    ExecutionTrace {
        messages: Vec::new(),
        signals: Vec::new(),
        ledger: CostLedger::new(),
        node_results: BTreeMap::new(),
        outcome: Outcome::Failure,
    }
}

/// Node ids, edges and attachments that differ between two graphs, counted
/// by plain set comparison.
fn touched(before: &WorkflowGraph, after: &WorkflowGraph) -> (BTreeSet<String>, Vec<(String, String)>) {
    let mut nodes = BTreeSet::new();
    let ids: BTreeSet<&String> = before.nodes.iter().chain(after.nodes.iter()).map(|n| &n.id).collect();
    for id in ids {
        let a = before.nodes.iter().find(|n| &n.id == id);
        let b = after.nodes.iter().find(|n| &n.id == id);
        if a != b || before.roles.get(id) != after.roles.get(id) {
            nodes.insert(id.clone());
        }
        let att = |g: &WorkflowGraph| g.attachments.get(id).cloned().unwrap_or_default();
        if att(before) != att(after) {
            nodes.insert(id.clone());
        }
    }
    let ea: BTreeSet<(String, String, String)> =
        before.edges.iter().map(|e| (e.from.clone(), e.to.clone(), e.schema.clone())).collect();
    let eb: BTreeSet<(String, String, String)> =
        after.edges.iter().map(|e| (e.from.clone(), e.to.clone(), e.schema.clone())).collect();
    let edges = ea.symmetric_difference(&eb).map(|(f, t, _)| (f.clone(), t.clone())).collect();
    (nodes, edges)
}

/// Longest path from any root, by repeated relaxation.
fn longest_path_depths(g: &WorkflowGraph) -> BTreeMap<String, usize> {
    let mut depth: BTreeMap<String, usize> = g.nodes.iter().map(|n| (n.id.clone(), 0)).collect();
    for _ in 0..g.nodes.len() {
        for e in &g.edges {
            let d = depth[&e.from] + 1;
            if depth[&e.to] < d {
                depth.insert(e.to.clone(), d);
            }
        }
    }
    depth
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn repair_patches_stay_inside_their_targets(seed in dag_seed(20), pick in any::<prop::sample::Index>(), action in 0usize..4, up in any::<prop::sample::Index>()) {
        let g = build_dag(&seed);
        let node = node_id(pick.index(seed.nodes));
        let mut trace = empty_trace();
        let parents: Vec<String> = g.in_edges(&node).map(|e| e.from.clone()).collect();
        if !parents.is_empty() {
            let upstream = parents[up.index(parents.len())].clone();
            trace.signals.push(EvidenceSignal::new(node.clone(), Severity::Fail, Evidence::Interface {
                upstream: Some(upstream),
                schema: "free_text".into(),
                field: "text".into(),
                reason: "missing".into(),
            }));
        }
        let Ok(patch) = repair(&g, &node, ACTIONS[action], &trace) else {
            // only a swap on a node with fewer than two tools may be refused
            prop_assert_eq!(ACTIONS[action], RepairAction::SwapToolBackend);
            prop_assert!(g.attachments_of(&node).count() < 2);
            return Ok(());
        };
        let after = apply_patch(&g, &patch).unwrap();
        prop_assert!(validate_graph(&after).is_empty());

        let mut allowed: BTreeSet<String> = parents.into_iter().collect();
        allowed.insert(node.clone());
        let added: BTreeSet<String> = after.node_ids().difference(&g.node_ids()).cloned().collect();
        allowed.extend(added.iter().cloned());
        prop_assert!(patch.target_nodes.is_subset(&allowed), "targets {:?} outside {:?}", patch.target_nodes, allowed);

        let (nodes, edges) = touched(&g, &after);
        prop_assert!(nodes.is_subset(&patch.target_nodes), "changed {:?} vs targets {:?}", nodes, patch.target_nodes);
        for (from, to) in &edges {
            prop_assert!(patch.target_nodes.contains(from) || patch.target_nodes.contains(to));
        }
        prop_assert!(diff_graphs(&g, &after).escape_from(&patch.target_nodes).is_none());
    }

    #[test]
    fn diff_then_apply_reproduces_the_target(seed in dag_seed(12), other in dag_seed(12)) {
        let a = build_dag(&seed);
        let mut b = build_dag(&other);
        // patches never touch the protocol
        b.protocol = a.protocol.clone();
        let patch = diff_graphs(&a, &b);
        prop_assert_eq!(apply_patch(&a, &patch).unwrap(), b);
        prop_assert!(diff_graphs(&a, &a).is_empty());
    }

    #[test]
    fn stages_are_longest_path_depths(seed in dag_seed(20)) {
        let g = build_dag(&seed);
        let stages = topological_stages(&g).unwrap();
        let index = stage_index(&stages);
        prop_assert_eq!(index.len(), g.nodes.len());
        prop_assert!(stages.iter().all(|s| !s.is_empty()));
        for e in &g.edges {
            prop_assert!(index[&e.from] < index[&e.to]);
        }
        let depths = longest_path_depths(&g);
        for (id, d) in &depths {
            prop_assert_eq!(index[id], *d);
        }
    }

    #[test]
    fn canonical_graph_text_round_trips(seed in dag_seed(20)) {
        let g = build_dag(&seed);
        let text = g.to_canonical();
        let back = WorkflowGraph::from_json(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(back.to_canonical(), text);
    }
}

//! Detect, decide, repair: the bounded local-repair loop.
//!
//! After every execution pass the reviewer folds the trace's signals into
//! per-node summaries, flags nodes that cross a threshold, picks the first
//! matching repair policy for the earliest flagged node, and applies the
//! resulting patch to a private copy of the graph. Only the patched nodes
//! and what lies downstream of them are re-executed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::graph::{
    apply_patch, stage_index, topological_stages, AttachmentChange, EdgeChange, GraphError, GraphPatch, Node,
    NodeChange, WorkflowGraph,
};
use crate::runtime::{
    Evidence, EvidenceSummary, ExecutionTrace, ExecutorRegistry, NodeResult, Outcome, Runtime, RuntimeError,
    Severity, SignalKind,
};
use crate::task::TaskSpecification;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReviewError {
    #[error("InvalidThresholds: {0}")]
    InvalidThresholds(String),
    #[error("DuplicatePolicyId: {0}")]
    DuplicatePolicyId(String),
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
    #[error("UnknownNode: {0}")]
    UnknownNode(String),
    #[error("EscalateNoAction: no repair for `{0}`")]
    Escalated(String),
    #[error("NoAlternativeTool: `{0}` has fewer than two attached tools")]
    NoAlternativeTool(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl ReviewError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidThresholds(_) => "InvalidThresholds",
            Self::DuplicatePolicyId(_) => "DuplicatePolicyId",
            Self::MalformedDocument(_) => "MalformedDocument",
            Self::UnknownNode(_) => "UnknownNode",
            Self::Escalated(_) => "EscalateNoAction",
            Self::NoAlternativeTool(_) => "NoAlternativeTool",
            Self::Graph(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub min_output_confidence: f64,
    pub max_test_fail_ratio: f64,
    pub max_tool_errors: u64,
    pub budget_warn_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { min_output_confidence: 0.5, max_test_fail_ratio: 0.4, max_tool_errors: 2, budget_warn_ratio: 0.9 }
    }
}

impl Thresholds {
    pub fn check(&self) -> Result<(), ReviewError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.min_output_confidence) {
            return Err(ReviewError::InvalidThresholds(format!("min_output_confidence {} outside [0,1]", self.min_output_confidence)));
        }
        if !unit(self.max_test_fail_ratio) {
            return Err(ReviewError::InvalidThresholds(format!("max_test_fail_ratio {} outside [0,1]", self.max_test_fail_ratio)));
        }
        if !(self.budget_warn_ratio > 0.0 && self.budget_warn_ratio <= 1.0) {
            return Err(ReviewError::InvalidThresholds(format!("budget_warn_ratio {} outside (0,1]", self.budget_warn_ratio)));
        }
        Ok(())
    }

    pub fn from_json(document: &str) -> Result<Self, ReviewError> {
        let t: Self = serde_json::from_str(document).map_err(|e| ReviewError::MalformedDocument(e.to_string()))?;
        t.check()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairAction {
    RetryWithUpdatedInstruction,
    AddParallelSolver,
    SwapToolBackend,
    ReformatUpstreamOutput,
    EscalateNoAction,
}

impl RepairAction {
    pub const ALL: [RepairAction; 5] = [
        Self::RetryWithUpdatedInstruction,
        Self::AddParallelSolver,
        Self::SwapToolBackend,
        Self::ReformatUpstreamOutput,
        Self::EscalateNoAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RetryWithUpdatedInstruction => "retry_with_updated_instruction",
            Self::AddParallelSolver => "add_parallel_solver",
            Self::SwapToolBackend => "swap_tool_backend",
            Self::ReformatUpstreamOutput => "reformat_upstream_output",
            Self::EscalateNoAction => "escalate_no_action",
        }
    }
}

/// Summary fields a policy pattern can look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryField {
    Confidence,
    TestsPassed,
    TestsFailed,
    TestFailRatio,
    TestFailStreak,
    ToolErrors,
    BudgetRatio,
    InterfaceViolations,
}

impl SummaryField {
    /// `None` when the summary has no value for the field (no output
    /// confidence reported, no budget set); such patterns never match.
    pub fn read(self, s: &EvidenceSummary) -> Option<f64> {
        match self {
            Self::Confidence => s.confidence,
            Self::TestsPassed => Some(s.tests_passed as f64),
            Self::TestsFailed => Some(s.tests_failed as f64),
            Self::TestFailRatio => Some(s.test_fail_ratio()),
            Self::TestFailStreak => Some(f64::from(s.test_fail_streak)),
            Self::ToolErrors => Some(s.tool_errors as f64),
            Self::BudgetRatio => s.budget_ratio,
            Self::InterfaceViolations => Some(s.interface_violations as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Self::Lt => lhs < rhs,
            Self::Le => lhs <= rhs,
            Self::Gt => lhs > rhs,
            Self::Ge => lhs >= rhs,
            Self::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pattern {
    pub field: SummaryField,
    pub comparator: Comparator,
    pub value: f64,
}

impl Pattern {
    pub fn matches(&self, summary: &EvidenceSummary) -> bool {
        self.field.read(summary).is_some_and(|v| self.comparator.holds(v, self.value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairPolicy {
    pub id: String,
    pub priority: i64,
    pub pattern: Pattern,
    pub action: RepairAction,
}

impl RepairPolicy {
    fn new(id: &str, priority: i64, field: SummaryField, comparator: Comparator, value: f64, action: RepairAction) -> Self {
        Self { id: id.to_string(), priority, pattern: Pattern { field, comparator, value }, action }
    }
}

/// The built-in policy set, in priority order.
pub fn default_policies() -> Vec<RepairPolicy> {
    use Comparator::*;
    use RepairAction::*;
    use SummaryField::*;
    alloc::vec![
        RepairPolicy::new("interface_violation", 10, InterfaceViolations, Ge, 1.0, ReformatUpstreamOutput),
        RepairPolicy::new("persistent_test_failure", 20, TestFailStreak, Ge, 2.0, AddParallelSolver),
        RepairPolicy::new("tool_errors", 30, ToolErrors, Gt, 2.0, SwapToolBackend),
        RepairPolicy::new("low_confidence", 40, Confidence, Lt, 0.5, RetryWithUpdatedInstruction),
        RepairPolicy::new("test_failures", 50, TestFailRatio, Gt, 0.4, RetryWithUpdatedInstruction),
    ]
}

/// Sort by (priority, id) and reject duplicate ids.
pub fn order_policies(mut policies: Vec<RepairPolicy>) -> Result<Vec<RepairPolicy>, ReviewError> {
    policies.sort_by(|a, b| (a.priority, &a.id).cmp(&(b.priority, &b.id)));
    let mut seen = BTreeSet::new();
    if let Some(p) = policies.iter().find(|p| !seen.insert(p.id.as_str())) {
        return Err(ReviewError::DuplicatePolicyId(p.id.clone()));
    }
    Ok(policies)
}

/// Parse a policy file: a JSON list of policies.
pub fn parse_policies(document: &str) -> Result<Vec<RepairPolicy>, ReviewError> {
    let policies: Vec<RepairPolicy> =
        serde_json::from_str(document).map_err(|e| ReviewError::MalformedDocument(e.to_string()))?;
    order_policies(policies)
}

/// Canonical form of a policy list, in the order given.
pub fn policies_to_canonical(policies: &[RepairPolicy]) -> String {
    to_canonical_string(policies).expect("policies are always serializable")
}

/// Flagged node ids with the signal kinds that tripped them.
pub type Flags = BTreeMap<String, BTreeSet<SignalKind>>;

/// Flag every node whose summary crosses a threshold.
pub fn detect(summaries: &BTreeMap<String, EvidenceSummary>, thresholds: &Thresholds) -> Flags {
    let mut flags = Flags::new();
    for (node, s) in summaries {
        let mut kinds = BTreeSet::new();
        if s.confidence.is_some_and(|c| c < thresholds.min_output_confidence) {
            kinds.insert(SignalKind::Output);
        }
        if s.test_fail_ratio() > thresholds.max_test_fail_ratio {
            kinds.insert(SignalKind::Test);
        }
        if s.tool_errors > thresholds.max_tool_errors {
            kinds.insert(SignalKind::Tool);
        }
        if s.interface_violations > 0 {
            kinds.insert(SignalKind::Interface);
        }
        if s.budget_ratio.is_some_and(|r| r > 1.0) {
            kinds.insert(SignalKind::Budget);
        }
        if !kinds.is_empty() {
            flags.insert(node.clone(), kinds);
        }
    }
    flags
}

/// Nodes whose spending has passed the warning ratio without exceeding the
/// budget. Reported, never repaired.
pub fn budget_warnings(summaries: &BTreeMap<String, EvidenceSummary>, thresholds: &Thresholds) -> Vec<String> {
    summaries
        .iter()
        .filter(|(_, s)| s.budget_ratio.is_some_and(|r| r >= thresholds.budget_warn_ratio && r <= 1.0))
        .map(|(n, _)| n.clone())
        .collect()
}

/// First policy, by (priority, id), whose pattern matches the node's
/// summary. No match, or no summary, escalates.
pub fn decide(node: &str, summaries: &BTreeMap<String, EvidenceSummary>, policies: &[RepairPolicy]) -> RepairAction {
    let Some(summary) = summaries.get(node) else {
        return RepairAction::EscalateNoAction;
    };
    let mut ordered: Vec<&RepairPolicy> = policies.iter().collect();
    ordered.sort_by(|a, b| (a.priority, &a.id).cmp(&(b.priority, &b.id)));
    ordered
        .into_iter()
        .find(|p| p.pattern.matches(summary))
        .map_or(RepairAction::EscalateNoAction, |p| p.action)
}

/// Build the patch that carries out `action` on `node`.
///
/// Reformatting targets the producer named by the node's latest interface
/// violation; a parallel solver adds one sibling wired to the node's
/// neighbours. Every patch is checked against the graph before it is
/// returned.
pub fn repair(
    graph: &WorkflowGraph,
    node: &str,
    action: RepairAction,
    trace: &ExecutionTrace,
) -> Result<GraphPatch, ReviewError> {
    let current = graph.node(node).ok_or_else(|| ReviewError::UnknownNode(node.to_string()))?;
    let mut patch = GraphPatch::default();
    match action {
        RepairAction::EscalateNoAction => return Err(ReviewError::Escalated(node.to_string())),
        RepairAction::RetryWithUpdatedInstruction => {
            let mut updated = current.clone();
            updated.instruction = append_note(&updated.instruction, &format!("previous attempt: {}", trace.failure_digest(node)));
            modify(&mut patch, graph, updated);
        }
        RepairAction::ReformatUpstreamOutput => {
            let violation = trace.signals.iter().rev().find_map(|s| match &s.evidence {
                Evidence::Interface { upstream, schema, field, reason } if s.node == node && s.severity == Severity::Fail => {
                    Some((upstream.clone(), schema.clone(), field.clone(), reason.clone()))
                }
                _ => None,
            });
            let (upstream, note) = match violation {
                Some((up, schema, field, reason)) => {
                    (up, format!("output rejected by `{node}`: schema `{schema}` field `{field}`: {reason}"))
                }
                None => (None, format!("output rejected by `{node}`")),
            };
            let target = upstream.as_deref().and_then(|u| graph.node(u)).unwrap_or(current);
            let mut updated = target.clone();
            updated.instruction = append_note(&updated.instruction, &format!("reformat output; {note}"));
            modify(&mut patch, graph, updated);
        }
        RepairAction::SwapToolBackend => {
            let tools: Vec<&String> = graph.attachments_of(node).filter(|e| graph.protocol.tools.contains(*e)).collect();
            if tools.len() < 2 {
                return Err(ReviewError::NoAlternativeTool(node.to_string()));
            }
            let next = match current.active_tool.as_ref().and_then(|t| tools.iter().position(|x| *x == t)) {
                Some(i) => tools[(i + 1) % tools.len()],
                None => tools[0],
            };
            let mut updated = current.clone();
            updated.active_tool = Some(next.clone());
            modify(&mut patch, graph, updated);
        }
        RepairAction::AddParallelSolver => {
            let group = current.group().to_string();
            let id = (1..)
                .map(|k| format!("{group}.alt{k}"))
                .find(|id| !graph.contains(id))
                .expect("unbounded search");
            let mut sibling = current.clone();
            sibling.id = id.clone();
            sibling.alternative_of = Some(group);
            patch.target_nodes.insert(node.to_string());
            patch.target_nodes.insert(id.clone());
            for e in graph.in_edges(node) {
                let mut edge = e.clone();
                edge.to = id.clone();
                patch.edge_changes.push(EdgeChange::Add { edge });
            }
            for e in graph.out_edges(node) {
                let mut edge = e.clone();
                edge.from = id.clone();
                patch.edge_changes.push(EdgeChange::Add { edge });
            }
            for entry in graph.attachments_of(node) {
                patch.attachment_changes.push(AttachmentChange::Add { node: id.clone(), entry: entry.clone() });
            }
            patch.node_changes.push(NodeChange::Add { node: sibling, role: graph.role(node).to_string() });
        }
    }
    apply_patch(graph, &patch)?;
    Ok(patch)
}

fn modify(patch: &mut GraphPatch, graph: &WorkflowGraph, node: Node) {
    patch.target_nodes.insert(node.id.clone());
    let role = graph.role(&node.id).to_string();
    patch.node_changes.push(NodeChange::Modify { node, role });
}

fn append_note(instruction: &str, note: &str) -> String {
    if instruction.is_empty() {
        format!("[repair] {note}")
    } else {
        format!("{instruction}\n[repair] {note}")
    }
}

/// Nodes whose own behaviour a patch changes: modified or added nodes,
/// nodes gaining or losing attachments, and the consumers of changed edges.
pub fn patch_seeds(patch: &GraphPatch) -> BTreeSet<String> {
    let mut seeds: BTreeSet<String> = patch.node_changes.iter().map(|c| c.node_id().to_string()).collect();
    seeds.extend(patch.attachment_changes.iter().map(|c| c.node_id().to_string()));
    seeds.extend(patch.edge_changes.iter().map(|c| c.edge().to.clone()));
    seeds
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ValidationSucceeded,
    BudgetExhausted,
    MaxRoundsReached,
    NoMatchingPolicy,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ValidationSucceeded => "validation_succeeded",
            Self::BudgetExhausted => "budget_exhausted",
            Self::MaxRoundsReached => "max_rounds_reached",
            Self::NoMatchingPolicy => "no_matching_policy",
        }
    }
}

/// One decision taken by the loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairDecision {
    pub round: u32,
    pub node: String,
    pub triggers: BTreeSet<SignalKind>,
    pub action: RepairAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub rounds_used: u32,
    pub patches: Vec<GraphPatch>,
    pub decisions: Vec<RepairDecision>,
    pub final_trace: ExecutionTrace,
    pub stop_reason: StopReason,
}

/// Execute `graph` and repair it until it validates or a bound is hit.
///
/// `graph` itself is never modified; patches apply to a private copy that
/// is dropped on return.
pub fn review_loop(
    graph: &WorkflowGraph,
    spec: &TaskSpecification,
    executors: &ExecutorRegistry,
    policies: &[RepairPolicy],
    thresholds: &Thresholds,
) -> Result<RepairOutcome, RuntimeError> {
    review_with(&mut Runtime::new(executors), graph, spec, policies, thresholds)
}

/// [`review_loop`] on a caller-provided runtime.
pub fn review_with(
    runtime: &mut Runtime<'_>,
    graph: &WorkflowGraph,
    spec: &TaskSpecification,
    policies: &[RepairPolicy],
    thresholds: &Thresholds,
) -> Result<RepairOutcome, RuntimeError> {
    let max_rounds = spec.constraints.repair_rounds();
    let mut instance = graph.clone();
    let mut trace = runtime.execute(&instance, spec)?;
    let mut fresh = instance.node_ids();
    let mut streaks: BTreeMap<String, u32> = BTreeMap::new();
    let mut patches = Vec::new();
    let mut decisions = Vec::new();

    let stop_reason = loop {
        if trace.outcome == Outcome::BudgetExhausted {
            break StopReason::BudgetExhausted;
        }
        let mut summaries = trace.summaries();
        for (node, s) in summaries.iter_mut() {
            let streak = streaks.entry(node.clone()).or_insert(0);
            if fresh.contains(node) {
                *streak = if s.test_fail_ratio() > thresholds.max_test_fail_ratio { *streak + 1 } else { 0 };
            }
            s.test_fail_streak = *streak;
        }
        let mut flags = detect(&summaries, thresholds);
        let flagged: BTreeSet<String> = flags.keys().cloned().collect();
        flags.retain(|node, _| !resolved_by_sibling(&instance, &trace, &flagged, node));

        let Some(node) = earliest(&instance, &flags) else {
            break if trace.outcome == Outcome::Success {
                StopReason::ValidationSucceeded
            } else {
                StopReason::NoMatchingPolicy
            };
        };
        if patches.len() as u32 >= max_rounds {
            break StopReason::MaxRoundsReached;
        }
        let action = decide(&node, &summaries, policies);
        decisions.push(RepairDecision {
            round: patches.len() as u32 + 1,
            node: node.clone(),
            triggers: flags[&node].clone(),
            action,
        });
        let Ok(patch) = repair(&instance, &node, action, &trace) else {
            break StopReason::NoMatchingPolicy;
        };
        let Ok(patched) = apply_patch(&instance, &patch) else {
            break StopReason::NoMatchingPolicy;
        };
        instance = patched;
        let seeds = patch_seeds(&patch);
        patches.push(patch);
        fresh = instance.descendants_inclusive(&seeds);
        trace = runtime.resume(&instance, spec, &trace, &seeds)?;
    };

    Ok(RepairOutcome { rounds_used: patches.len() as u32, patches, decisions, final_trace: trace, stop_reason })
}

/// A flagged solver needs no repair once another member of its group has
/// produced an artifact without being flagged itself.
fn resolved_by_sibling(graph: &WorkflowGraph, trace: &ExecutionTrace, flagged: &BTreeSet<String>, node: &str) -> bool {
    let Some(group) = graph.node(node).map(Node::group) else {
        return false;
    };
    graph.nodes.iter().any(|n| {
        n.id != node
            && n.group() == group
            && !flagged.contains(&n.id)
            && matches!(trace.node_results.get(&n.id), Some(NodeResult::Ok { .. }))
    })
}

/// Flagged node in the earliest stage, ties broken by id.
fn earliest(graph: &WorkflowGraph, flags: &Flags) -> Option<String> {
    let stages = topological_stages(graph).ok()?;
    let index = stage_index(&stages);
    flags.keys().min_by_key(|id| (index.get(*id).copied().unwrap_or(usize::MAX), (*id).clone())).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::{builtin_schemas, FREE_TEXT_SCHEMA};
    use crate::graph::NodeKind;
    use crate::runtime::{Behavior, Script, ScriptedExecutor};
    use crate::task::Constraints;
    use alloc::sync::Arc;
    use alloc::vec;

    fn summary(f: impl FnOnce(&mut EvidenceSummary)) -> BTreeMap<String, EvidenceSummary> {
        let mut s = EvidenceSummary::default();
        f(&mut s);
        [("n".to_string(), s)].into_iter().collect()
    }

    fn chain(ids: &[&str]) -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        for s in builtin_schemas() {
            g.protocol.schemas.insert(s.id.clone(), s);
        }
        for id in ids {
            let node = Node::new(*id, NodeKind::Agent)
                .with_binding("scripted")
                .with_schemas(Some(FREE_TEXT_SCHEMA), Some(FREE_TEXT_SCHEMA));
            g.add_node(node, *id);
        }
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1], FREE_TEXT_SCHEMA);
        }
        g.normalize();
        g
    }

    fn spec(rounds: i64) -> TaskSpecification {
        TaskSpecification {
            goal: "g".into(),
            context: String::new(),
            constraints: Constraints { max_repair_rounds: rounds, ..Constraints::default() },
            resources: Vec::new(),
        }
    }

    fn run(g: &WorkflowGraph, script: Script, rounds: i64) -> RepairOutcome {
        let mut reg = ExecutorRegistry::new();
        reg.bind("scripted", Arc::new(ScriptedExecutor::new(script)));
        review_loop(g, &spec(rounds), &reg, &default_policies(), &Thresholds::default()).unwrap()
    }

    #[test]
    fn low_confidence_is_flagged() {
        let flags = detect(&summary(|s| s.confidence = Some(0.3)), &Thresholds::default());
        assert_eq!(flags["n"], [SignalKind::Output].into_iter().collect());
        assert!(detect(&summary(|_| {}), &Thresholds::default()).is_empty());
    }

    #[test]
    fn all_failing_tests_are_flagged() {
        let flags = detect(&summary(|s| s.tests_failed = 5), &Thresholds::default());
        assert!(flags["n"].contains(&SignalKind::Test));
    }

    #[test]
    fn threshold_edges_are_strict() {
        let t = Thresholds::default();
        assert!(detect(&summary(|s| s.confidence = Some(0.5)), &t).is_empty());
        assert!(detect(&summary(|s| s.tool_errors = 2), &t).is_empty());
        assert!(!detect(&summary(|s| s.tool_errors = 3), &t).is_empty());
        assert!(detect(&summary(|s| s.budget_ratio = Some(1.0)), &t).is_empty());
        assert_eq!(budget_warnings(&summary(|s| s.budget_ratio = Some(0.95)), &t), vec!["n".to_string()]);
    }

    #[test]
    fn thresholds_out_of_range_are_rejected() {
        assert!(Thresholds { budget_warn_ratio: 0.0, ..Thresholds::default() }.check().is_err());
        assert!(Thresholds { min_output_confidence: 1.5, ..Thresholds::default() }.check().is_err());
        assert!(Thresholds::from_json(r#"{"max_tool_errors": 4}"#).unwrap().max_tool_errors == 4);
    }

    #[test]
    fn default_policies_pick_expected_actions() {
        let p = default_policies();
        assert_eq!(decide("n", &summary(|s| s.confidence = Some(0.2)), &p), RepairAction::RetryWithUpdatedInstruction);
        let persistent = summary(|s| {
            s.tests_failed = 5;
            s.test_fail_streak = 2;
        });
        assert_eq!(decide("n", &persistent, &p), RepairAction::AddParallelSolver);
        assert_eq!(decide("n", &summary(|s| s.interface_violations = 1), &p), RepairAction::ReformatUpstreamOutput);
        assert_eq!(decide("n", &summary(|s| s.tool_errors = 3), &p), RepairAction::SwapToolBackend);
        assert_eq!(decide("n", &summary(|s| s.budget_ratio = Some(2.0)), &p), RepairAction::EscalateNoAction);
        assert_eq!(decide("missing", &summary(|_| {}), &p), RepairAction::EscalateNoAction);
    }

    #[test]
    fn duplicate_policy_ids_are_rejected() {
        let mut p = default_policies();
        p.push(p[0].clone());
        assert_eq!(order_policies(p), Err(ReviewError::DuplicatePolicyId("interface_violation".into())));
    }

    #[test]
    fn policy_file_round_trips() {
        let text = policies_to_canonical(&default_policies());
        assert_eq!(parse_policies(&text).unwrap(), default_policies());
        assert!(text.contains(r#""comparator":"ge""#));
    }

    #[test]
    fn retry_only_touches_the_node() {
        let g = chain(&["a", "b"]);
        let trace = crate::runtime::execute(&g, &spec(3), &{
            let mut r = ExecutorRegistry::new();
            r.bind("scripted", Arc::new(ScriptedExecutor::new(Script::default())));
            r
        })
        .unwrap();
        let patch = repair(&g, "b", RepairAction::RetryWithUpdatedInstruction, &trace).unwrap();
        assert_eq!(patch.target_nodes, ["b".to_string()].into_iter().collect());
        let after = apply_patch(&g, &patch).unwrap();
        assert!(after.node("b").unwrap().instruction.starts_with("[repair] previous attempt"));
        assert_eq!(after.node("a"), g.node("a"));
    }

    #[test]
    fn swap_rotates_between_attached_tools() {
        let mut g = chain(&["a"]);
        for t in ["t1", "t2"] {
            g.attachments.entry("a".into()).or_default().insert(t.into());
            g.protocol.tools.insert(t.into());
        }
        g.node_mut("a").unwrap().active_tool = Some("t1".into());
        let trace = ExecutionTrace::from_json(
            r#"{"messages":[],"signals":[],"ledger":{"per_node":{},"total":0},"node_results":{},"outcome":"failure"}"#,
        )
        .unwrap();
        let patch = repair(&g, "a", RepairAction::SwapToolBackend, &trace).unwrap();
        let after = apply_patch(&g, &patch).unwrap();
        assert_eq!(after.node("a").unwrap().active_tool.as_deref(), Some("t2"));
        g.attachments.get_mut("a").unwrap().remove("t2");
        assert_eq!(repair(&g, "a", RepairAction::SwapToolBackend, &trace), Err(ReviewError::NoAlternativeTool("a".into())));
    }

    #[test]
    fn parallel_solver_mirrors_neighbours() {
        let g = chain(&["a", "b", "c"]);
        let trace = ExecutionTrace::from_json(
            r#"{"messages":[],"signals":[],"ledger":{"per_node":{},"total":0},"node_results":{},"outcome":"failure"}"#,
        )
        .unwrap();
        let patch = repair(&g, "b", RepairAction::AddParallelSolver, &trace).unwrap();
        assert_eq!(patch.node_changes.len(), 1);
        assert_eq!(patch.edge_changes.len(), 2);
        let after = apply_patch(&g, &patch).unwrap();
        assert_eq!(after.node("b.alt1").unwrap().alternative_of.as_deref(), Some("b"));
        assert_eq!(patch_seeds(&patch), ["b.alt1".to_string(), "c".to_string()].into_iter().collect());
    }

    #[test]
    fn clean_run_needs_no_rounds() {
        let out = run(&chain(&["a", "b"]), Script::default(), 3);
        assert_eq!((out.rounds_used, out.stop_reason), (0, StopReason::ValidationSucceeded));
    }

    #[test]
    fn one_retry_fixes_a_flaky_node() {
        let script = Script::default().node("b", [Behavior::failing("flaky", 1), Behavior::ok(1)]);
        let out = run(&chain(&["a", "b", "c"]), script, 3);
        assert_eq!((out.rounds_used, out.stop_reason), (1, StopReason::ValidationSucceeded));
        assert_eq!(out.decisions[0].action, RepairAction::RetryWithUpdatedInstruction);
        assert_eq!(out.final_trace.outcome, Outcome::Success);
    }

    #[test]
    fn always_failing_node_uses_every_round() {
        let g = chain(&["a", "b"]);
        let before = g.to_canonical();
        let script = Script::default().node("b", [Behavior::failing("broken", 1)]);
        let out = run(&g, script, 3);
        assert_eq!((out.rounds_used, out.stop_reason), (3, StopReason::MaxRoundsReached));
        assert_eq!(g.to_canonical(), before);
    }

    #[test]
    fn persistent_test_failures_add_a_solver() {
        let failing = Behavior { tests: Some((0, 5)), ..Behavior::default() };
        let mut script = Script::default().node("b", [failing]);
        script.nodes.insert("b.alt1".into(), crate::runtime::NodeScript { attempts: vec![Behavior::ok(0)], ..Default::default() });
        let out = run(&chain(&["a", "b", "c"]), script, 5);
        let actions: Vec<_> = out.decisions.iter().map(|d| d.action).collect();
        assert_eq!(actions, vec![RepairAction::RetryWithUpdatedInstruction, RepairAction::AddParallelSolver]);
        assert_eq!(out.stop_reason, StopReason::ValidationSucceeded);
        assert_eq!(out.final_trace.outcome, Outcome::Success);
    }

    #[test]
    fn budget_overrun_stops_the_loop() {
        let mut s = spec(3);
        s.constraints.budget = Some(10);
        let mut reg = ExecutorRegistry::new();
        reg.bind("scripted", Arc::new(ScriptedExecutor::new(Script::default().node("a", [Behavior::ok(100)]))));
        let out = review_loop(&chain(&["a", "b"]), &s, &reg, &default_policies(), &Thresholds::default()).unwrap();
        assert_eq!((out.rounds_used, out.stop_reason), (0, StopReason::BudgetExhausted));
    }

    #[test]
    fn escalation_ends_with_no_matching_policy() {
        let script = Script::default().node("a", [Behavior { tool_errors: Some(5), ..Behavior::default() }]);
        let out = run(&chain(&["a"]), script, 3);
        assert_eq!(out.stop_reason, StopReason::NoMatchingPolicy);
        assert_eq!(out.rounds_used, 0);
    }
}

//! Stage-by-stage execution of a validated workflow graph.
//!
//! Nodes of one stage are handed to a [`StageRunner`] together, so they may
//! run concurrently; their results are committed to the trace one at a time
//! in node-id order, which keeps traces identical whatever the runner. Every
//! inbound artifact is validated against its edge schema before the consumer
//! runs, and each validated transfer is recorded as a [`Message`]. Execution
//! stops the first time the ledger total exceeds the task budget.

mod evidence;
mod executor;
mod ledger;
mod trace;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

pub use evidence::{aggregate_signals, Evidence, EvidenceSignal, EvidenceSummary, Severity, SignalDraft, SignalKind};
pub use executor::{
    Behavior, ExecutionRequest, Executor, ExecutorOutput, ExecutorRegistry, NodeJob, NodeRun, NodeScript,
    PlaceholderExecutor, Script, ScriptedExecutor, SequentialRunner, StageRunner,
};
pub use ledger::{record_cost, CostLedger, LedgerError};
pub use trace::{ExecutionTrace, Message, NodeResult, Outcome};

use crate::artifact::{broker_transform, validate_artifact, Artifact};
use crate::graph::{topological_stages, validate_graph, Edge, GraphError, Node, NodeKind, WorkflowGraph};
use crate::report::ValidationReport;
use crate::task::TaskSpecification;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("InvalidGraph: {0}")]
    InvalidGraph(ValidationReport),
    #[error("UnresolvedExecutor: node `{node}` is bound to `{binding}`")]
    UnresolvedExecutor { node: String, binding: String },
    #[error("ProtocolViolation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Executes graphs against an executor registry.
///
/// A `Runtime` remembers how often each node has run, so scripted executors
/// can answer retries differently; use one per task instance.
pub struct Runtime<'a> {
    registry: &'a ExecutorRegistry,
    runner: &'a dyn StageRunner,
    invocations: BTreeMap<String, u32>,
}

impl core::fmt::Debug for Runtime<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Runtime").field("registry", self.registry).field("invocations", &self.invocations).finish()
    }
}

/// Run `graph` once with sequential stages.
pub fn execute(
    graph: &WorkflowGraph,
    spec: &TaskSpecification,
    registry: &ExecutorRegistry,
) -> Result<ExecutionTrace, RuntimeError> {
    Runtime::new(registry).execute(graph, spec)
}

enum Prepared {
    Blocked { reason: String, signals: Vec<EvidenceSignal> },
    Ready { messages: Vec<Message> },
}

impl<'a> Runtime<'a> {
    pub fn new(registry: &'a ExecutorRegistry) -> Self {
        Self::with_runner(registry, &SequentialRunner)
    }

    pub fn with_runner(registry: &'a ExecutorRegistry, runner: &'a dyn StageRunner) -> Self {
        Self { registry, runner, invocations: BTreeMap::new() }
    }

    pub fn invocations(&self, node: &str) -> u32 {
        self.invocations.get(node).copied().unwrap_or(0)
    }

    pub fn execute(&mut self, graph: &WorkflowGraph, spec: &TaskSpecification) -> Result<ExecutionTrace, RuntimeError> {
        self.run(graph, spec, None)
    }

    /// Re-run `changed` nodes and everything downstream of them, reusing the
    /// results, messages and signals of `prior` for the rest. The ledger
    /// carries over, so spending accumulates across rounds.
    pub fn resume(
        &mut self,
        graph: &WorkflowGraph,
        spec: &TaskSpecification,
        prior: &ExecutionTrace,
        changed: &BTreeSet<String>,
    ) -> Result<ExecutionTrace, RuntimeError> {
        self.run(graph, spec, Some((prior, changed)))
    }

    fn run(
        &mut self,
        graph: &WorkflowGraph,
        spec: &TaskSpecification,
        resume: Option<(&ExecutionTrace, &BTreeSet<String>)>,
    ) -> Result<ExecutionTrace, RuntimeError> {
        let report = validate_graph(graph);
        if !report.is_empty() {
            return Err(RuntimeError::InvalidGraph(report));
        }
        let stages = topological_stages(graph)?;
        for n in graph.nodes.iter().filter(|n| n.kind != NodeKind::Broker) {
            if self.registry.resolve(&n.executor_binding).is_none() {
                return Err(RuntimeError::UnresolvedExecutor { node: n.id.clone(), binding: n.executor_binding.clone() });
            }
        }

        let mut trace = ExecutionTrace {
            messages: Vec::new(),
            signals: Vec::new(),
            ledger: CostLedger::new(),
            node_results: BTreeMap::new(),
            outcome: Outcome::Success,
        };
        let rerun = match resume {
            None => graph.node_ids(),
            Some((prior, changed)) => {
                let mut seeds = changed.clone();
                // receivers of reused messages whose edge no longer exists
                for m in &prior.messages {
                    if !has_edge(graph, &m.sender, &m.receiver) {
                        seeds.insert(m.receiver.clone());
                    }
                }
                let rerun = graph.descendants_inclusive(&seeds);
                let keep = |id: &String| graph.contains(id) && !rerun.contains(id);
                trace.ledger = prior.ledger.clone();
                trace.node_results =
                    prior.node_results.iter().filter(|(id, _)| keep(id)).map(|(k, v)| (k.clone(), v.clone())).collect();
                trace.messages = prior.messages.iter().filter(|m| keep(&m.receiver)).cloned().collect();
                trace.signals = prior.signals.iter().filter(|s| keep(&s.node)).cloned().collect();
                rerun
            }
        };
        let budget = spec.constraints.budget_units();

        'stages: for stage in &stages {
            let mut prepared: Vec<(&Node, Prepared)> = Vec::new();
            let mut jobs: Vec<NodeJob<'_>> = Vec::new();
            for id in stage.iter().filter(|id| rerun.contains(*id)) {
                let node = graph.node(id).expect("stage ids come from the graph");
                let (inputs, prep) = gather_inputs(graph, node, &trace.node_results);
                if matches!(prep, Prepared::Ready { .. }) {
                    let attempt = self.invocations(id);
                    jobs.push(self.job(graph, node, inputs, attempt));
                }
                prepared.push((node, prep));
            }

            let mut runs = self.runner.run_stage(jobs).into_iter();
            for (node, prep) in prepared {
                match prep {
                    Prepared::Blocked { reason, signals } => {
                        trace.signals.extend(signals);
                        trace.node_results.insert(node.id.clone(), NodeResult::Skipped { reason });
                    }
                    Prepared::Ready { messages } => {
                        let run = runs.next().expect("one run per ready node");
                        debug_assert_eq!(run.node, node.id);
                        *self.invocations.entry(node.id.clone()).or_insert(0) += 1;
                        trace.messages.extend(messages);
                        trace.ledger.record_units(&node.id, run.cost)?;
                        trace.signals.extend(run.signals.into_iter().map(|s| s.attribute(node.id.clone())));
                        if let NodeResult::Ok { artifact } = &run.result {
                            check_sink_output(graph, node, artifact, &mut trace.signals);
                        }
                        trace.node_results.insert(node.id.clone(), run.result);
                        if let Some(limit) = budget {
                            let spent = trace.ledger.total;
                            let over = spent > limit;
                            let severity = if over { Severity::Fail } else { Severity::Info };
                            trace.signals.push(EvidenceSignal::new(
                                node.id.clone(),
                                severity,
                                Evidence::Budget { spent, budget: limit },
                            ));
                            if over {
                                trace.outcome = Outcome::BudgetExhausted;
                                break 'stages;
                            }
                        }
                    }
                }
            }
        }

        if trace.outcome != Outcome::BudgetExhausted {
            // a solver group succeeds when any of its members does
            let ok_groups: BTreeSet<&str> = graph
                .nodes
                .iter()
                .filter(|n| trace.node_results.get(&n.id).is_some_and(NodeResult::is_ok))
                .map(Node::group)
                .collect();
            let all_ok = graph.nodes.iter().all(|n| ok_groups.contains(n.group()));
            trace.outcome = if all_ok { Outcome::Success } else { Outcome::Failure };
        }
        if let Some(m) = trace.messages.iter().find(|m| !has_edge(graph, &m.sender, &m.receiver)) {
            return Err(RuntimeError::ProtocolViolation(format!("message {} -> {} has no edge", m.sender, m.receiver)));
        }
        Ok(trace)
    }

    fn job<'g>(&self, graph: &'g WorkflowGraph, node: &'g Node, inputs: BTreeMap<String, Artifact>, attempt: u32) -> NodeJob<'g>
    where
        'a: 'g,
    {
        if node.kind == NodeKind::Broker {
            return Box::new(move || run_broker(graph, node, inputs));
        }
        let executor = self.registry.resolve(&node.executor_binding).expect("bindings checked before running");
        let role = graph.role(&node.id);
        let attachments: Vec<String> = graph.attachments_of(&node.id).cloned().collect();
        let output_schema = node.output_schema.as_ref().and_then(|s| graph.protocol.schemas.get(s));
        Box::new(move || {
            let request = ExecutionRequest { node, role, attachments, inputs, output_schema, attempt };
            let out = executor.run(&request);
            let mut signals = out.signals;
            let result = match out.result {
                Ok(artifact) => NodeResult::Ok { artifact },
                Err(reason) => {
                    signals.push(SignalDraft {
                        severity: Severity::Fail,
                        evidence: Evidence::Tool { errors: 1, message: reason.clone() },
                    });
                    signals.push(SignalDraft {
                        severity: Severity::Fail,
                        evidence: Evidence::Output { confidence: Some(0.0), note: "node failed".into() },
                    });
                    NodeResult::Failed { reason }
                }
            };
            NodeRun { node: node.id.clone(), result, signals, cost: out.cost }
        })
    }
}

fn has_edge(graph: &WorkflowGraph, from: &str, to: &str) -> bool {
    graph.edges.iter().any(|e| e.from == from && e.to == to)
}

/// Pick one valid artifact per inbound solver group (first valid in
/// producer-id order) and record a message for each.
fn gather_inputs(
    graph: &WorkflowGraph,
    node: &Node,
    results: &BTreeMap<String, NodeResult>,
) -> (BTreeMap<String, Artifact>, Prepared) {
    let mut groups: BTreeMap<&str, Vec<&Edge>> = BTreeMap::new();
    for e in graph.in_edges(&node.id) {
        let group = graph.node(&e.from).map_or(e.from.as_str(), Node::group);
        groups.entry(group).or_default().push(e);
    }

    let mut inputs = BTreeMap::new();
    let mut messages = Vec::new();
    let mut blocked: Vec<String> = Vec::new();
    let mut signals = Vec::new();
    for (group, mut edges) in groups {
        edges.sort_by(|a, b| a.from.cmp(&b.from));
        let mut chosen = None;
        let mut violation = None;
        for e in &edges {
            let Some(artifact) = results.get(&e.from).and_then(NodeResult::artifact) else {
                continue;
            };
            let schema = graph.protocol.schemas.get(&e.schema).expect("edge schemas validated");
            match validate_artifact(artifact, schema) {
                Ok(()) => {
                    chosen = Some((*e, artifact));
                    break;
                }
                Err(v) => {
                    violation.get_or_insert((e.from.clone(), v));
                }
            }
        }
        match (chosen, violation) {
            (Some((e, artifact)), _) => {
                messages.push(handoff_message(e, artifact));
                inputs.insert(e.from.clone(), artifact.clone());
            }
            (None, Some((upstream, v))) => {
                blocked.push(format!("input from `{upstream}` violates {v}"));
                signals.push(EvidenceSignal::new(
                    node.id.clone(),
                    Severity::Fail,
                    Evidence::Interface { upstream: Some(upstream), schema: v.schema, field: v.field, reason: v.reason },
                ));
            }
            (None, None) => blocked.push(format!("no input from `{group}`")),
        }
    }
    if blocked.is_empty() {
        (inputs, Prepared::Ready { messages })
    } else {
        (BTreeMap::new(), Prepared::Blocked { reason: blocked.join("; "), signals })
    }
}

fn handoff_message(edge: &Edge, artifact: &Artifact) -> Message {
    let fields: Vec<&str> = artifact.as_object().map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default();
    Message {
        sender: edge.from.clone(),
        receiver: edge.to.clone(),
        summary: format!("{} artifact from {} to {}", edge.schema, edge.from, edge.to),
        body: format!("fields: {}", fields.join(", ")),
        artifact_ref: Some(format!("artifacts/{}.json", edge.from)),
    }
}

fn run_broker(graph: &WorkflowGraph, node: &Node, inputs: BTreeMap<String, Artifact>) -> NodeRun {
    let fail = |reason: String, upstream: Option<String>, schema: String| NodeRun {
        node: node.id.clone(),
        result: NodeResult::Failed { reason: reason.clone() },
        signals: alloc::vec![SignalDraft {
            severity: Severity::Fail,
            evidence: Evidence::Interface { upstream, schema, field: "<mapping>".into(), reason },
        }],
        cost: 0,
    };
    let Some(mapping) = graph.mapping_for(node) else {
        return fail("broker has no mapping".into(), None, String::new());
    };
    let Some(target) = graph.protocol.schemas.get(&mapping.target_schema) else {
        return fail("unknown target schema".into(), None, mapping.target_schema.clone());
    };
    let Some((upstream, artifact)) = inputs.into_iter().next() else {
        return fail("broker received no input".into(), None, mapping.source_schema.clone());
    };
    match broker_transform(&artifact, mapping, target) {
        Ok(out) => {
            let signals = out
                .empty_lists
                .iter()
                .map(|field| SignalDraft {
                    severity: Severity::Warn,
                    evidence: Evidence::Output { confidence: None, note: format!("list `{field}` is empty") },
                })
                .collect();
            NodeRun { node: node.id.clone(), result: NodeResult::Ok { artifact: out.artifact }, signals, cost: 0 }
        }
        Err(e) => fail(e.to_string(), Some(upstream), mapping.target_schema.clone()),
    }
}

/// Outputs that leave the graph are checked against the node's own schema.
fn check_sink_output(graph: &WorkflowGraph, node: &Node, artifact: &Artifact, signals: &mut Vec<EvidenceSignal>) {
    if graph.out_edges(&node.id).next().is_some() {
        return;
    }
    let Some(schema) = node.output_schema.as_ref().and_then(|s| graph.protocol.schemas.get(s)) else {
        return;
    };
    if let Err(v) = validate_artifact(artifact, schema) {
        signals.push(EvidenceSignal::new(
            node.id.clone(),
            Severity::Fail,
            Evidence::Interface { upstream: None, schema: v.schema, field: v.field, reason: v.reason },
        ));
    }
}

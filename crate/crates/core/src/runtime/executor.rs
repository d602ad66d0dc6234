//! The executor contract, executor lookup, stage runners and the scripted
//! executor used by fixtures.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::evidence::{Evidence, Severity, SignalDraft};
use super::trace::NodeResult;
use crate::artifact::{Artifact, ArtifactSchema};
use crate::graph::Node;

/// What an executor is asked to do for one node.
#[derive(Debug)]
pub struct ExecutionRequest<'a> {
    pub node: &'a Node,
    pub role: &'a str,
    pub attachments: Vec<String>,
    /// Producer id -> artifact, one per inbound solver group.
    pub inputs: BTreeMap<String, Artifact>,
    pub output_schema: Option<&'a ArtifactSchema>,
    /// How many times this node already ran in the current instance.
    pub attempt: u32,
}

impl ExecutionRequest<'_> {
    pub fn instruction(&self) -> &str {
        &self.node.instruction
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorOutput {
    pub result: Result<Artifact, String>,
    pub signals: Vec<SignalDraft>,
    /// Cost units consumed, reported even on failure.
    pub cost: u64,
}

pub trait Executor: Send + Sync {
    fn run(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput;
}

/// Executors by binding id, with an optional catch-all.
#[derive(Clone, Default)]
pub struct ExecutorRegistry {
    bindings: BTreeMap<String, Arc<dyn Executor>>,
    fallback: Option<Arc<dyn Executor>>,
}

impl fmt::Debug for ExecutorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecutorRegistry")
            .field("bindings", &self.bindings.keys().collect::<Vec<_>>())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl ExecutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry that resolves every binding to `executor`.
    pub fn with_fallback(executor: Arc<dyn Executor>) -> Self {
        Self { bindings: BTreeMap::new(), fallback: Some(executor) }
    }

    pub fn bind(&mut self, binding: impl Into<String>, executor: Arc<dyn Executor>) {
        self.bindings.insert(binding.into(), executor);
    }

    pub fn resolve(&self, binding: &str) -> Option<&dyn Executor> {
        self.bindings.get(binding).or(self.fallback.as_ref()).map(|e| e.as_ref())
    }
}

/// Outcome of one node job, before it is committed to the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRun {
    pub node: String,
    pub result: NodeResult,
    pub signals: Vec<SignalDraft>,
    pub cost: u64,
}

pub type NodeJob<'a> = Box<dyn FnOnce() -> NodeRun + Send + 'a>;

/// Runs the jobs of one stage. Results come back in job order.
pub trait StageRunner {
    fn run_stage<'a>(&self, jobs: Vec<NodeJob<'a>>) -> Vec<NodeRun>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequentialRunner;

impl StageRunner for SequentialRunner {
    fn run_stage<'a>(&self, jobs: Vec<NodeJob<'a>>) -> Vec<NodeRun> {
        jobs.into_iter().map(|job| job()).collect()
    }
}

/// Scripted behaviour of one invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Behavior {
    /// Artifact to return; defaults to the smallest valid one for the
    /// node's output schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<Artifact>,
    /// Fail with this message instead of returning an artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
    #[serde(default)]
    pub cost: u64,
    /// Shorthand for an output signal carrying this confidence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Shorthand for a test signal: `[passed, failed]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<(u64, u64)>,
    /// Shorthand for a tool signal with this many errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_errors: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signals: Vec<SignalDraft>,
}

impl Behavior {
    pub fn ok(cost: u64) -> Self {
        Self { cost, ..Self::default() }
    }

    pub fn failing(message: impl Into<String>, cost: u64) -> Self {
        Self { fail: Some(message.into()), cost, ..Self::default() }
    }

    fn output(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput {
        let mut signals = self.signals.clone();
        if let Some(c) = self.confidence {
            let severity = if c < 0.5 { Severity::Warn } else { Severity::Info };
            signals.push(SignalDraft { severity, evidence: Evidence::Output { confidence: Some(c), note: String::new() } });
        }
        if let Some((passed, failed)) = self.tests {
            let severity = if failed > 0 { Severity::Fail } else { Severity::Info };
            signals.push(SignalDraft { severity, evidence: Evidence::Test { passed, failed, note: String::new() } });
        }
        if let Some(errors) = self.tool_errors.filter(|e| *e > 0) {
            signals.push(SignalDraft {
                severity: Severity::Fail,
                evidence: Evidence::Tool { errors, message: "scripted tool error".to_string() },
            });
        }
        let result = match &self.fail {
            Some(msg) => Err(msg.clone()),
            None => Ok(self.artifact.clone().unwrap_or_else(|| match request.output_schema {
                Some(schema) => schema.placeholder(),
                None => json!({ "text": "" }),
            })),
        };
        ExecutorOutput { result, signals, cost: self.cost }
    }
}

/// Per-node script: `attempts[i]` answers the i-th invocation (the last one
/// repeats); `by_tool` overrides it when the node's active tool matches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeScript {
    #[serde(default)]
    pub attempts: Vec<Behavior>,
    #[serde(default)]
    pub by_tool: BTreeMap<String, Behavior>,
}

/// Fixture script keyed by node id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub default: Behavior,
    #[serde(default)]
    pub nodes: BTreeMap<String, NodeScript>,
}

impl Script {
    pub fn from_json(document: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(document)
    }

    pub fn node(mut self, id: impl Into<String>, attempts: impl IntoIterator<Item = Behavior>) -> Self {
        self.nodes.entry(id.into()).or_default().attempts.extend(attempts);
        self
    }

    /// Behaviour for `node` on its `attempt`-th run. Parallel solvers without
    /// a script of their own follow their original's.
    pub fn behavior(&self, node: &Node, attempt: u32) -> &Behavior {
        let script = self.nodes.get(&node.id).or_else(|| node.alternative_of.as_ref().and_then(|o| self.nodes.get(o)));
        let Some(script) = script else {
            return &self.default;
        };
        if let Some(b) = node.active_tool.as_ref().and_then(|t| script.by_tool.get(t)) {
            return b;
        }
        match script.attempts.len() {
            0 => &self.default,
            n => &script.attempts[(attempt as usize).min(n - 1)],
        }
    }
}

/// Executor that replays a [`Script`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedExecutor {
    script: Script,
}

impl ScriptedExecutor {
    pub fn new(script: Script) -> Self {
        Self { script }
    }
}

impl Executor for ScriptedExecutor {
    fn run(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput {
        self.script.behavior(request.node, request.attempt).output(request)
    }
}

/// Returns the smallest valid artifact for the node's output schema at zero
/// cost. Enough to check a graph's plumbing.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlaceholderExecutor;

impl Executor for PlaceholderExecutor {
    fn run(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput {
        let artifact = match request.output_schema {
            Some(schema) => schema.placeholder(),
            None => Value::Object(serde_json::Map::new()),
        };
        ExecutorOutput { result: Ok(artifact), signals: Vec::new(), cost: 0 }
    }
}

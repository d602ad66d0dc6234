//! Wrapping external repositories as executor bindings.
//!
//! A sandbox spec is drafted from repository metadata, built on a
//! [`BuildBackend`], and revised from the build log until it builds or the
//! round bound is hit. The only revision rule: tokens after a
//! `missing dependency:` marker are appended to the dependency list. Other
//! failure logs are kept as unhandled notes.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::graph::WorkflowGraph;
use crate::runtime::Evidence;

/// Build rounds used when the caller does not say.
pub const DEFAULT_BUILD_ROUNDS: u32 = 3;

const MISSING_MARKER: &str = "missing dependency:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandboxError {
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
    #[error("InvalidRounds: max_rounds must be positive")]
    InvalidRounds,
    #[error("BuildExhausted: no successful build in {} rounds", .0.1.rounds.len())]
    BuildExhausted(Box<(SandboxSpec, BuildReport)>),
    #[error("UnbuiltSandbox: {0}")]
    UnbuiltSandbox(String),
    #[error("UnknownNode: {0}")]
    UnknownNode(String),
}

impl SandboxError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::MalformedDocument(_) => "MalformedDocument",
            Self::InvalidRounds => "InvalidRounds",
            Self::BuildExhausted(_) => "BuildExhausted",
            Self::UnbuiltSandbox(_) => "UnbuiltSandbox",
            Self::UnknownNode(_) => "UnknownNode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryProfile {
    pub locator: String,
    pub declared_dependencies: Vec<String>,
    pub entry_points: Vec<String>,
    pub test_commands: Vec<String>,
    pub docs_excerpts: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    locator: String,
    #[serde(default)]
    dependencies: Vec<String>,
    #[serde(default)]
    entry_points: Vec<String>,
    #[serde(default)]
    tests: Vec<String>,
    #[serde(default)]
    docs: Vec<String>,
}

/// Read repository metadata (`locator`, `dependencies`, `entry_points`,
/// `tests`, `docs`). Missing lists are empty; the locator is required.
pub fn profile_repository(metadata: &str) -> Result<RepositoryProfile, SandboxError> {
    let m: Metadata = serde_json::from_str(metadata).map_err(|e| SandboxError::MalformedDocument(e.to_string()))?;
    if m.locator.trim().is_empty() {
        return Err(SandboxError::MalformedDocument("locator is empty".into()));
    }
    Ok(RepositoryProfile {
        locator: m.locator,
        declared_dependencies: m.dependencies,
        entry_points: m.entry_points,
        test_commands: m.tests,
        docs_excerpts: m.docs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxSpec {
    pub base_environment: String,
    pub dependency_list: Vec<String>,
    pub build_commands: Vec<String>,
    pub revision: u32,
}

impl SandboxSpec {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("spec is always serializable")
    }

    fn install_command(&self, dependency: &str) -> String {
        if self.base_environment == "r-base" {
            format!("Rscript -e 'install.packages(\"{dependency}\")'")
        } else {
            format!("pip install {dependency}")
        }
    }

    fn push_dependency(&mut self, dependency: &str) {
        self.dependency_list.push(dependency.to_string());
        let cmd = self.install_command(dependency);
        self.build_commands.push(cmd);
    }
}

/// First spec for a profile, revision 0. R entry points or tests select an
/// R base image; anything else gets Python.
pub fn draft_spec(profile: &RepositoryProfile) -> SandboxSpec {
    let uses_r = profile
        .entry_points
        .iter()
        .chain(&profile.test_commands)
        .any(|c| c.starts_with("Rscript") || c.starts_with("R "));
    let mut spec = SandboxSpec {
        base_environment: if uses_r { "r-base" } else { "python" }.to_string(),
        dependency_list: Vec::new(),
        build_commands: alloc::vec![format!("fetch {}", profile.locator)],
        revision: 0,
    };
    let mut seen = BTreeSet::new();
    for d in &profile.declared_dependencies {
        if seen.insert(d.as_str()) {
            spec.push_dependency(d);
        }
    }
    spec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRound {
    pub revision: u32,
    pub outcome: BuildOutcome,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub rounds: Vec<BuildRound>,
    pub final_outcome: BuildOutcome,
    /// Failure logs the revision rule could not act on.
    #[serde(default)]
    pub unhandled: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoke: Option<SmokeResult>,
}

impl BuildReport {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("report is always serializable")
    }
}

/// Where sandboxes are built and commands run.
pub trait BuildBackend {
    fn build(&mut self, spec: &SandboxSpec) -> (BuildOutcome, String);
    fn run(&mut self, spec: &SandboxSpec, command: &str) -> (BuildOutcome, String);
}

/// Dependency names following `missing dependency:` markers, in log order.
pub fn missing_dependencies(log: &str) -> Vec<String> {
    let lower = log.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut rest = lower.as_str();
    let mut offset = 0;
    while let Some(pos) = rest.find(MISSING_MARKER) {
        let start = offset + pos + MISSING_MARKER.len();
        let tail = log[start..].trim_start().trim_start_matches(['\'', '"', '`']);
        let token: String = tail
            .chars()
            .take_while(|c| !c.is_whitespace() && !matches!(c, ',' | ';' | '\'' | '"' | '`'))
            .collect();
        let token = token.trim_end_matches('.').to_string();
        if !token.is_empty() && !out.contains(&token) {
            out.push(token);
        }
        offset = start;
        rest = &lower[start..];
    }
    out
}

/// Build, read the log, revise, rebuild: at most `max_rounds` builds. A
/// successful build is followed by a smoke test of the profile's tests.
pub fn synthesize_sandbox(
    profile: &RepositoryProfile,
    backend: &mut dyn BuildBackend,
    max_rounds: u32,
) -> Result<(SandboxSpec, BuildReport), SandboxError> {
    if max_rounds == 0 {
        return Err(SandboxError::InvalidRounds);
    }
    let mut spec = draft_spec(profile);
    let mut report = BuildReport { rounds: Vec::new(), final_outcome: BuildOutcome::Failure, unhandled: Vec::new(), smoke: None };
    for round in 0..max_rounds {
        let (outcome, log) = backend.build(&spec);
        report.rounds.push(BuildRound { revision: spec.revision, outcome, log: log.clone() });
        if outcome == BuildOutcome::Success {
            report.final_outcome = BuildOutcome::Success;
            report.smoke = Some(smoke_test(&spec, profile, backend));
            return Ok((spec, report));
        }
        if round + 1 == max_rounds {
            break;
        }
        let fresh: Vec<String> =
            missing_dependencies(&log).into_iter().filter(|d| !spec.dependency_list.contains(d)).collect();
        if fresh.is_empty() {
            report.unhandled.push(log);
        }
        for d in &fresh {
            spec.push_dependency(d);
        }
        spec.revision += 1;
    }
    Err(SandboxError::BuildExhausted(Box::new((spec, report))))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmokeResult {
    pub passed: u64,
    pub failed: u64,
    pub note: String,
}

impl SmokeResult {
    pub fn evidence(&self) -> Evidence {
        Evidence::Test { passed: self.passed, failed: self.failed, note: self.note.clone() }
    }
}

/// Run the profile's test commands inside the built sandbox.
pub fn smoke_test(spec: &SandboxSpec, profile: &RepositoryProfile, backend: &mut dyn BuildBackend) -> SmokeResult {
    if profile.test_commands.is_empty() {
        return SmokeResult { passed: 0, failed: 0, note: "no tests".into() };
    }
    let mut result = SmokeResult { passed: 0, failed: 0, note: String::new() };
    let mut failures = Vec::new();
    for cmd in &profile.test_commands {
        match backend.run(spec, cmd).0 {
            BuildOutcome::Success => result.passed += 1,
            BuildOutcome::Failure => {
                result.failed += 1;
                failures.push(cmd.as_str());
            }
        }
    }
    if !failures.is_empty() {
        result.note = format!("failed: {}", failures.join(", "));
    }
    result
}

/// One scripted build answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBuild {
    pub outcome: BuildOutcome,
    #[serde(default)]
    pub log: String,
}

/// Backend that replays a script: `builds[i]` answers the i-th build (the
/// last one repeats; an empty script always succeeds) and commands listed
/// in `failing_commands` fail.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBackend {
    #[serde(default)]
    pub builds: Vec<ScriptedBuild>,
    #[serde(default)]
    pub failing_commands: BTreeSet<String>,
    #[serde(skip)]
    pub build_calls: u32,
    #[serde(skip)]
    pub run_calls: u32,
}

impl ScriptedBackend {
    pub fn new(builds: impl IntoIterator<Item = (BuildOutcome, &'static str)>) -> Self {
        Self {
            builds: builds.into_iter().map(|(outcome, log)| ScriptedBuild { outcome, log: log.to_string() }).collect(),
            ..Self::default()
        }
    }

    pub fn from_json(document: &str) -> Result<Self, SandboxError> {
        serde_json::from_str(document).map_err(|e| SandboxError::MalformedDocument(e.to_string()))
    }
}

impl BuildBackend for ScriptedBackend {
    fn build(&mut self, _spec: &SandboxSpec) -> (BuildOutcome, String) {
        let i = self.build_calls as usize;
        self.build_calls += 1;
        match self.builds.get(i).or(self.builds.last()) {
            Some(b) => (b.outcome, b.log.clone()),
            None => (BuildOutcome::Success, "built".into()),
        }
    }

    fn run(&mut self, _spec: &SandboxSpec, command: &str) -> (BuildOutcome, String) {
        self.run_calls += 1;
        if self.failing_commands.contains(command) {
            (BuildOutcome::Failure, format!("{command}: exit 1"))
        } else {
            (BuildOutcome::Success, format!("{command}: ok"))
        }
    }
}

/// Built sandboxes and the bindings that use them. Several bindings may
/// share one spec.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxRegistry {
    pub specs: Vec<SandboxSpec>,
    /// binding id -> index into `specs`
    pub bindings: BTreeMap<String, usize>,
}

impl SandboxRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spec_for(&self, binding: &str) -> Option<&SandboxSpec> {
        self.bindings.get(binding).map(|i| &self.specs[*i])
    }

    /// Bind `node` to the sandbox built from `spec` and return the binding
    /// id. Refuses sandboxes whose build did not succeed.
    pub fn register_executor(
        &mut self,
        graph: &mut WorkflowGraph,
        node: &str,
        spec: &SandboxSpec,
        report: &BuildReport,
    ) -> Result<String, SandboxError> {
        if report.final_outcome != BuildOutcome::Success {
            return Err(SandboxError::UnbuiltSandbox(format!("sandbox for `{node}` did not build")));
        }
        let slot = graph.node_mut(node).ok_or_else(|| SandboxError::UnknownNode(node.to_string()))?;
        let index = match self.specs.iter().position(|s| s == spec) {
            Some(i) => i,
            None => {
                self.specs.push(spec.clone());
                self.specs.len() - 1
            }
        };
        let binding = format!("sandbox:{node}");
        self.bindings.insert(binding.clone(), index);
        slot.executor_binding = binding.clone();
        Ok(binding)
    }
}

/// Attach a single-entry-point repository to an existing node as a tool
/// rather than giving it a node of its own. Returns the tool id.
pub fn attach_entry_point(graph: &mut WorkflowGraph, node: &str, repository: &str) -> Result<String, SandboxError> {
    if !graph.contains(node) {
        return Err(SandboxError::UnknownNode(node.to_string()));
    }
    let tool = format!("repo:{repository}");
    graph.attachments.entry(node.to_string()).or_default().insert(tool.clone());
    graph.protocol.tools.insert(tool.clone());
    Ok(tool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Node, NodeKind};
    use BuildOutcome::*;

    fn profile() -> RepositoryProfile {
        profile_repository(r#"{"locator":"https://example.org/tissue","dependencies":["numpy","scanpy"],"tests":["pytest -q"]}"#)
            .unwrap()
    }

    #[test]
    fn metadata_fields_map_onto_the_profile() {
        let p = profile();
        assert_eq!(p.declared_dependencies, ["numpy", "scanpy"]);
        assert_eq!(p.test_commands, ["pytest -q"]);
        assert!(p.entry_points.is_empty() && p.docs_excerpts.is_empty());
        assert_eq!(profile_repository(r#"{"locator":""}"#).unwrap_err().code(), "MalformedDocument");
        assert_eq!(profile_repository("not json").unwrap_err().code(), "MalformedDocument");
    }

    #[test]
    fn missing_dependency_tokens() {
        let log = "step 3\nERROR missing dependency: anndata\nMissing dependency: 'leidenalg'. abort";
        assert_eq!(missing_dependencies(log), ["anndata", "leidenalg"]);
        assert!(missing_dependencies("segfault").is_empty());
    }

    #[test]
    fn fail_once_then_pass() {
        let mut backend = ScriptedBackend::new([(Failure, "missing dependency: anndata"), (Success, "ok")]);
        let (spec, report) = synthesize_sandbox(&profile(), &mut backend, 3).unwrap();
        assert_eq!(report.rounds.len(), 2);
        assert_eq!(backend.build_calls, 2);
        assert_eq!(spec.revision, 1);
        assert_eq!(spec.dependency_list.last().map(String::as_str), Some("anndata"));
        assert_eq!(report.smoke.as_ref().unwrap().passed, 1);
    }

    #[test]
    fn immediate_success() {
        let mut backend = ScriptedBackend::default();
        let (spec, report) = synthesize_sandbox(&profile(), &mut backend, 3).unwrap();
        assert_eq!((report.rounds.len(), spec.revision), (1, 0));
        assert_eq!(report.final_outcome, Success);
    }

    #[test]
    fn always_failing_exhausts() {
        let mut backend = ScriptedBackend::new([(Failure, "compiler crashed")]);
        let err = synthesize_sandbox(&profile(), &mut backend, 3).unwrap_err();
        let SandboxError::BuildExhausted(inner) = err else { panic!("expected exhaustion") };
        let (spec, report) = *inner;
        assert_eq!(report.rounds.len(), 3);
        assert_eq!(report.final_outcome, Failure);
        assert!(report.rounds.iter().all(|r| r.log == "compiler crashed"));
        assert_eq!(report.unhandled.len(), 2);
        assert_eq!(spec.revision, 2);
        assert_eq!(synthesize_sandbox(&profile(), &mut backend, 0).unwrap_err(), SandboxError::InvalidRounds);
    }

    #[test]
    fn smoke_counts() {
        let spec = draft_spec(&profile());
        let mut p = profile();
        p.test_commands = alloc::vec!["t1".into(), "t2".into(), "t3".into()];
        let mut backend = ScriptedBackend::default();
        backend.failing_commands.insert("t2".into());
        let r = smoke_test(&spec, &p, &mut backend);
        assert_eq!((r.passed, r.failed), (2, 1));
        p.test_commands.clear();
        assert_eq!(smoke_test(&spec, &p, &mut backend).note, "no tests");
    }

    #[test]
    fn r_repositories_get_an_r_image() {
        let p = profile_repository(r#"{"locator":"x","dependencies":["Seurat"],"entry_points":["Rscript run.R"]}"#).unwrap();
        let spec = draft_spec(&p);
        assert_eq!(spec.base_environment, "r-base");
        assert!(spec.build_commands[1].contains("install.packages(\"Seurat\")"));
    }

    #[test]
    fn bindings_share_specs() {
        let mut g = WorkflowGraph::new();
        for id in ["a", "b"] {
            g.add_node(Node::new(id, NodeKind::External), id);
        }
        let (spec, report) = synthesize_sandbox(&profile(), &mut ScriptedBackend::default(), 3).unwrap();
        let mut reg = SandboxRegistry::new();
        let ba = reg.register_executor(&mut g, "a", &spec, &report).unwrap();
        let bb = reg.register_executor(&mut g, "b", &spec, &report).unwrap();
        assert_ne!(ba, bb);
        assert_eq!(reg.specs.len(), 1);
        assert_eq!(reg.spec_for(&ba), reg.spec_for(&bb));
        assert_eq!(g.node("a").unwrap().executor_binding, ba);

        let failed = BuildReport { final_outcome: Failure, ..report };
        assert_eq!(reg.register_executor(&mut g, "a", &spec, &failed).unwrap_err().code(), "UnbuiltSandbox");
    }

    #[test]
    fn entry_point_becomes_a_tool() {
        let mut g = WorkflowGraph::new();
        g.add_node(Node::new("a", NodeKind::Agent), "a");
        let tool = attach_entry_point(&mut g, "a", "celltypist").unwrap();
        assert!(g.protocol.tools.contains(&tool));
        assert!(g.attachments_of("a").any(|t| *t == tool));
    }
}

//! Executor for the setup chain synthesized in front of external nodes:
//! repository profiling, sandbox construction and agent registration.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use weave_core::runtime::{Evidence, ExecutionRequest, Executor, ExecutorOutput, Severity, SignalDraft};
use weave_core::sandbox::{profile_repository, synthesize_sandbox, RepositoryProfile, SandboxError, ScriptedBackend};
use weave_core::synthesis::{external_binding, PROFILE_BINDING, REGISTER_BINDING, SANDBOX_BINDING};
use weave_core::task::{ResourceKind, TaskSpecification};

/// Runs the three builtin setup bindings against a build backend script
/// (the default script builds everything on the first try).
#[derive(Debug, Clone)]
pub struct SetupExecutor {
    /// (resource id, locator) of every repository in the task.
    repositories: Vec<(String, String)>,
    /// Metadata documents keyed by locator.
    metadata: BTreeMap<String, String>,
    backend: ScriptedBackend,
    max_rounds: u32,
}

impl SetupExecutor {
    pub fn new(spec: &TaskSpecification, backend: ScriptedBackend, max_rounds: u32) -> Self {
        let repositories =
            spec.resources_of(ResourceKind::Repository).map(|r| (r.id.clone(), r.locator.clone())).collect();
        Self { repositories, metadata: BTreeMap::new(), backend, max_rounds }
    }

    /// Use `document` as the metadata of the repository at `locator`.
    pub fn with_metadata(mut self, locator: impl Into<String>, document: impl Into<String>) -> Self {
        self.metadata.insert(locator.into(), document.into());
        self
    }

    pub fn bindings() -> [&'static str; 3] {
        [PROFILE_BINDING, SANDBOX_BINDING, REGISTER_BINDING]
    }

    fn profile(&self, locator: &str) -> Result<RepositoryProfile, SandboxError> {
        match self.metadata.get(locator) {
            Some(doc) => profile_repository(doc),
            None => profile_repository(&json!({ "locator": locator }).to_string()),
        }
    }

    fn profiles(&self) -> ExecutorOutput {
        let mut profiles = Vec::new();
        for (_, locator) in &self.repositories {
            match self.profile(locator) {
                Ok(p) => profiles.push(serde_json::to_value(p).expect("profiles serialize")),
                Err(e) => return failed(e.to_string()),
            }
        }
        ok(json!({ "profiles": profiles }), Vec::new())
    }

    fn sandboxes(&self, inputs: &BTreeMap<String, Value>) -> ExecutorOutput {
        let profiles = inputs.values().filter_map(|a| a.get("profiles")).filter_map(Value::as_array).flatten();
        let mut sandboxes = Vec::new();
        let mut signals = Vec::new();
        for p in profiles {
            let profile: RepositoryProfile = match serde_json::from_value(p.clone()) {
                Ok(p) => p,
                Err(e) => return failed(format!("bad profile: {e}")),
            };
            let mut backend = self.backend.clone();
            match synthesize_sandbox(&profile, &mut backend, self.max_rounds) {
                Ok((spec, report)) => {
                    if let Some(smoke) = &report.smoke {
                        let severity = if smoke.failed > 0 { Severity::Fail } else { Severity::Info };
                        signals.push(SignalDraft { severity, evidence: smoke.evidence() });
                    }
                    sandboxes.push(json!({ "locator": profile.locator, "spec": spec, "rounds": report.rounds.len() }));
                }
                Err(e) => return failed(format!("{}: {e}", profile.locator)),
            }
        }
        ok(json!({ "sandboxes": sandboxes }), signals)
    }

    fn registrations(&self) -> ExecutorOutput {
        let bindings: Vec<Value> = self
            .repositories
            .iter()
            .map(|(id, locator)| json!({ "binding": external_binding(id), "locator": locator }))
            .collect();
        ok(json!({ "bindings": bindings }), Vec::new())
    }
}

fn ok(artifact: Value, signals: Vec<SignalDraft>) -> ExecutorOutput {
    ExecutorOutput { result: Ok(artifact), signals, cost: 0 }
}

fn failed(reason: String) -> ExecutorOutput {
    let signals = vec![SignalDraft { severity: Severity::Fail, evidence: Evidence::Tool { errors: 1, message: reason.clone() } }];
    ExecutorOutput { result: Err(reason), signals, cost: 0 }
}

impl Executor for SetupExecutor {
    fn run(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput {
        match request.node.executor_binding.as_str() {
            PROFILE_BINDING => self.profiles(),
            SANDBOX_BINDING => self.sandboxes(&request.inputs),
            REGISTER_BINDING => self.registrations(),
            other => failed(format!("not a setup binding: {other}")),
        }
    }
}

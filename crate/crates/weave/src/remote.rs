//! Executor backed by a remote text-generation endpoint.
//!
//! Each node invocation is one `POST` of a JSON request to the endpoint.
//! The endpoint answers with `{"artifact": ..., "signals": [...], "cost": n}`
//! or `{"error": "...", "cost": n}`.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use weave_core::artifact::ArtifactSchema;
use weave_core::runtime::{ExecutionRequest, Executor, ExecutorOutput, SignalDraft};

/// Environment variable holding the endpoint URL.
pub const ENDPOINT_ENV: &str = "WEAVE_EXECUTOR_URL";

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    node: &'a str,
    instruction: &'a str,
    role: &'a str,
    attachments: &'a [String],
    inputs: &'a BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_schema: Option<&'a ArtifactSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_tool: Option<&'a str>,
    attempt: u32,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    #[serde(default)]
    artifact: Option<Value>,
    #[serde(default)]
    error: Option<String>,
    #[serde(default)]
    signals: Vec<SignalDraft>,
    #[serde(default)]
    cost: u64,
}

#[derive(Debug)]
pub struct RemoteExecutor {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteExecutor {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().new_agent();
        Self { endpoint: endpoint.into(), agent }
    }

    /// Endpoint from [`ENDPOINT_ENV`], if set.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        std::env::var(ENDPOINT_ENV).ok().filter(|u| !u.is_empty()).map(|u| Self::new(u, timeout))
    }

    fn call(&self, request: &ExecutionRequest<'_>) -> Result<RemoteResponse, String> {
        let body = RemoteRequest {
            node: &request.node.id,
            instruction: request.instruction(),
            role: request.role,
            attachments: &request.attachments,
            inputs: &request.inputs,
            output_schema: request.output_schema,
            active_tool: request.node.active_tool.as_deref(),
            attempt: request.attempt,
        };
        let mut response = self.agent.post(&self.endpoint).send_json(&body).map_err(|e| e.to_string())?;
        response.body_mut().read_json::<RemoteResponse>().map_err(|e| e.to_string())
    }
}

impl Executor for RemoteExecutor {
    fn run(&self, request: &ExecutionRequest<'_>) -> ExecutorOutput {
        match self.call(request) {
            Ok(r) => {
                let result = match (r.error, r.artifact) {
                    (Some(e), _) => Err(e),
                    (None, Some(a)) => Ok(a),
                    (None, None) => Err("endpoint returned neither artifact nor error".into()),
                };
                ExecutorOutput { result, signals: r.signals, cost: r.cost }
            }
            Err(e) => ExecutorOutput { result: Err(format!("endpoint unreachable: {e}")), signals: Vec::new(), cost: 0 },
        }
    }
}

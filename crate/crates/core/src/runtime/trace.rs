use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::evidence::{aggregate_signals, EvidenceSignal, EvidenceSummary};
use super::ledger::CostLedger;
use crate::artifact::Artifact;
use crate::canonical::to_canonical_string;

/// One validated artifact transfer along an edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub sender: String,
    pub receiver: String,
    pub summary: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NodeResult {
    Ok { artifact: Artifact },
    Failed { reason: String },
    /// The node did not run: an input was missing or failed validation.
    Skipped { reason: String },
}

impl NodeResult {
    pub fn artifact(&self) -> Option<&Artifact> {
        match self {
            Self::Ok { artifact } => Some(artifact),
            _ => None,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionTrace {
    pub messages: Vec<Message>,
    pub signals: Vec<EvidenceSignal>,
    pub ledger: CostLedger,
    pub node_results: BTreeMap<String, NodeResult>,
    pub outcome: Outcome,
}

impl ExecutionTrace {
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("trace is always serializable")
    }

    pub fn from_json(document: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(document)
    }

    pub fn summaries(&self) -> BTreeMap<String, EvidenceSummary> {
        aggregate_signals(&self.signals)
    }

    /// Messages whose sender is one of `nodes`.
    pub fn messages_from<'a>(&'a self, nodes: &'a [&'a str]) -> impl Iterator<Item = &'a Message> + 'a {
        self.messages.iter().filter(move |m| nodes.contains(&m.sender.as_str()))
    }

    pub fn ran(&self, node: &str) -> bool {
        self.node_results.contains_key(node)
    }

    pub fn failure_digest(&self, node: &str) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(NodeResult::Failed { reason } | NodeResult::Skipped { reason }) = self.node_results.get(node) {
            parts.push(reason.clone());
        }
        if let Some(s) = self.summaries().get(node) {
            if let Some(c) = s.confidence {
                parts.push(alloc::format!("confidence {c}"));
            }
            if s.tests_passed + s.tests_failed > 0 {
                parts.push(alloc::format!("tests {} passed / {} failed", s.tests_passed, s.tests_failed));
            }
            if s.tool_errors > 0 {
                parts.push(alloc::format!("{} tool errors", s.tool_errors));
            }
            if s.interface_violations > 0 {
                parts.push(alloc::format!("{} interface violations", s.interface_violations));
            }
        }
        if parts.is_empty() {
            "no evidence recorded".to_string()
        } else {
            parts.join("; ")
        }
    }
}

//! Evidence signals and their per-node aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Output,
    Test,
    Tool,
    Budget,
    Interface,
}

/// Kind-specific payload; the kind is the tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Evidence {
    Output {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        confidence: Option<f64>,
        #[serde(default)]
        note: String,
    },
    Test {
        passed: u64,
        failed: u64,
        #[serde(default)]
        note: String,
    },
    Tool {
        errors: u64,
        #[serde(default)]
        message: String,
    },
    Budget {
        spent: u64,
        budget: u64,
    },
    Interface {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upstream: Option<String>,
        schema: String,
        field: String,
        reason: String,
    },
}

impl Evidence {
    pub fn kind(&self) -> SignalKind {
        match self {
            Self::Output { .. } => SignalKind::Output,
            Self::Test { .. } => SignalKind::Test,
            Self::Tool { .. } => SignalKind::Tool,
            Self::Budget { .. } => SignalKind::Budget,
            Self::Interface { .. } => SignalKind::Interface,
        }
    }
}

/// A signal as an executor reports it, before it is attributed to a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDraft {
    pub severity: Severity,
    #[serde(flatten)]
    pub evidence: Evidence,
}

impl SignalDraft {
    pub fn attribute(self, node: impl Into<String>) -> EvidenceSignal {
        EvidenceSignal { node: node.into(), severity: self.severity, evidence: self.evidence }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSignal {
    pub node: String,
    pub severity: Severity,
    #[serde(flatten)]
    pub evidence: Evidence,
}

impl EvidenceSignal {
    pub fn new(node: impl Into<String>, severity: Severity, evidence: Evidence) -> Self {
        Self { node: node.into(), severity, evidence }
    }

    pub fn kind(&self) -> SignalKind {
        self.evidence.kind()
    }
}

/// Everything the reviewer needs to know about one node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    /// Latest reported output confidence.
    pub confidence: Option<f64>,
    pub tests_passed: u64,
    pub tests_failed: u64,
    pub tool_errors: u64,
    /// Latest accumulated cost over budget.
    pub budget_ratio: Option<f64>,
    /// Fail-severity interface signals.
    pub interface_violations: u64,
    /// Producer named by the latest interface violation.
    pub violating_upstream: Option<String>,
    /// Consecutive review rounds with the test fail ratio over threshold.
    /// Filled in by the review loop; aggregation leaves it at zero.
    pub test_fail_streak: u32,
}

impl EvidenceSummary {
    pub fn test_fail_ratio(&self) -> f64 {
        let total = self.tests_passed + self.tests_failed;
        if total == 0 {
            0.0
        } else {
            self.tests_failed as f64 / total as f64
        }
    }

    fn absorb(&mut self, signal: &EvidenceSignal) {
        match &signal.evidence {
            Evidence::Output { confidence, .. } => {
                if confidence.is_some() {
                    self.confidence = *confidence;
                }
            }
            Evidence::Test { passed, failed, .. } => {
                self.tests_passed += passed;
                self.tests_failed += failed;
            }
            Evidence::Tool { errors, .. } => self.tool_errors += errors,
            Evidence::Budget { spent, budget } => {
                if *budget > 0 {
                    self.budget_ratio = Some(*spent as f64 / *budget as f64);
                }
            }
            Evidence::Interface { upstream, .. } => {
                if signal.severity == Severity::Fail {
                    self.interface_violations += 1;
                    self.violating_upstream = upstream.clone();
                }
            }
        }
    }
}

/// Fold signals, in order, into one summary per node that has any.
pub fn aggregate_signals<'a>(signals: impl IntoIterator<Item = &'a EvidenceSignal>) -> BTreeMap<String, EvidenceSummary> {
    let mut out: BTreeMap<String, EvidenceSummary> = BTreeMap::new();
    for s in signals {
        out.entry(s.node.clone()).or_default().absorb(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn signal_json_shape() {
        let s = EvidenceSignal::new("n", Severity::Warn, Evidence::Test { passed: 1, failed: 2, note: String::new() });
        let text = crate::canonical::to_canonical_string(&s).unwrap();
        assert_eq!(text, r#"{"kind":"test","node":"n","payload":{"failed":2,"note":"","passed":1},"severity":"warn"}"#);
        let back: EvidenceSignal = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn tool_errors_add_up() {
        let sig = |e| EvidenceSignal::new("n", Severity::Fail, Evidence::Tool { errors: e, message: String::new() });
        let summaries = aggregate_signals(&vec![sig(1), sig(1)]);
        assert_eq!(summaries["n"].tool_errors, 2);
        assert!(aggregate_signals(&vec![]).is_empty());
    }
}

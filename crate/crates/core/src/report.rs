//! Violation lists shared by constraint and graph validation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Category of a single violation. The string form is the first word of the
/// printed line, so `weave validate` output can be grepped for `cycle`,
/// `interface` and friends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Budget,
    MaxRepairRounds,
    MaxRuntime,
    DuplicateNode,
    DuplicateEdge,
    DanglingEdge,
    Cycle,
    UnknownSchema,
    Interface,
    BrokerDegree,
    BrokerMapping,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Budget => "budget",
            Self::MaxRepairRounds => "max_repair_rounds",
            Self::MaxRuntime => "max_runtime",
            Self::DuplicateNode => "duplicate_node",
            Self::DuplicateEdge => "duplicate_edge",
            Self::DanglingEdge => "dangling_edge",
            Self::Cycle => "cycle",
            Self::UnknownSchema => "unknown_schema",
            Self::Interface => "interface",
            Self::BrokerDegree => "broker_degree",
            Self::BrokerMapping => "broker_mapping",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

/// Zero or more violations. Empty means the checked value is usable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub(crate) fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation { kind, message: message.into() });
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

//! Typed task specification: goal, context, operational constraints and the
//! resources handed to the engine.
//!
//! Task files are UTF-8 JSON with the top-level keys `goal`, `context`,
//! `constraints` and `resources`. Anything else is rejected.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::canonical::to_canonical_string;
use crate::report::{ValidationReport, ViolationKind};
use crate::{DEFAULT_MAX_REPAIR_ROUNDS, MAX_REPAIR_ROUNDS_CAP};

/// Output format meaning "no schema, plain text".
pub const FREE_TEXT: &str = "free_text";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskSpecification {
    pub goal: String,
    pub context: String,
    pub constraints: Constraints,
    pub resources: Vec<ResourceRef>,
}

/// Operational constraints.
///
/// Numeric fields are signed so that a hand-built value with a negative
/// budget can still be checked by [`validate_constraints`]; the parser never
/// produces one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Constraints {
    /// Total cost units for one task instance. `None` means no cap was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<i64>,
    /// Wall-clock seconds. `None` is unbounded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_runtime: Option<i64>,
    pub environment_requirements: Vec<String>,
    pub output_format: String,
    pub max_repair_rounds: i64,
}

impl Default for Constraints {
    fn default() -> Self {
        Self {
            budget: None,
            max_runtime: None,
            environment_requirements: Vec::new(),
            output_format: String::from(FREE_TEXT),
            max_repair_rounds: DEFAULT_MAX_REPAIR_ROUNDS as i64,
        }
    }
}

impl Constraints {
    /// Budget in cost units, if a positive one is set.
    pub fn budget_units(&self) -> Option<u64> {
        self.budget.and_then(|b| u64::try_from(b).ok())
    }

    /// Repair round bound, clamped into `0..=16`.
    pub fn repair_rounds(&self) -> u32 {
        self.max_repair_rounds.clamp(0, MAX_REPAIR_ROUNDS_CAP as i64) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Document,
    Dataset,
    Repository,
    Tool,
    ExternalAgent,
    ReferenceGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRef {
    pub id: String,
    pub kind: ResourceKind,
    pub locator: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("MissingGoal: goal is absent or empty")]
    MissingGoal,
    #[error("InvalidBudget: budget must be a positive integer, got {0}")]
    InvalidBudget(i64),
    #[error("InvalidConstraint: {0}")]
    InvalidConstraint(String),
    #[error("DuplicateResourceId: {0}")]
    DuplicateResourceId(String),
    #[error("InvalidLocator: resource {0} needs a non-empty locator without whitespace")]
    InvalidLocator(String),
    #[error("MalformedDocument: {0}")]
    MalformedDocument(String),
}

impl TaskError {
    /// Stable error code, printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Self::MissingGoal => "MissingGoal",
            Self::InvalidBudget(_) => "InvalidBudget",
            Self::InvalidConstraint(_) => "InvalidConstraint",
            Self::DuplicateResourceId(_) => "DuplicateResourceId",
            Self::InvalidLocator(_) => "InvalidLocator",
            Self::MalformedDocument(_) => "MalformedDocument",
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 4] = ["goal", "context", "constraints", "resources"];
const CONSTRAINT_KEYS: [&str; 5] =
    ["budget", "max_runtime", "environment_requirements", "output_format", "max_repair_rounds"];

fn malformed(msg: impl Into<String>) -> TaskError {
    TaskError::MalformedDocument(msg.into())
}

fn reject_unknown(map: &Map<String, Value>, allowed: &[&str], what: &str) -> Result<(), TaskError> {
    match map.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(malformed(format!("unknown {what} key `{k}`"))),
        None => Ok(()),
    }
}

/// Parse a task document. Fields are checked in declaration order and the
/// first violation is returned.
pub fn parse_task_spec(document: &str) -> Result<TaskSpecification, TaskError> {
    let value: Value = serde_json::from_str(document).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(malformed("task document must be a JSON object"));
    };
    reject_unknown(&map, &TOP_LEVEL_KEYS, "top-level")?;

    let goal = match map.get("goal") {
        None | Some(Value::Null) => return Err(TaskError::MissingGoal),
        Some(Value::String(s)) if s.trim().is_empty() => return Err(TaskError::MissingGoal),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("goal must be a string")),
    };

    let context = match map.get("context") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("context must be a string")),
    };

    let constraints = match map.get("constraints") {
        None | Some(Value::Null) => Constraints::default(),
        Some(Value::Object(c)) => parse_constraints(c)?,
        Some(_) => return Err(malformed("constraints must be an object")),
    };

    let resources = match map.get("resources") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => parse_resources(items)?,
        Some(_) => return Err(malformed("resources must be a list")),
    };

    Ok(TaskSpecification { goal, context, constraints, resources })
}

fn int_field(map: &Map<String, Value>, key: &str) -> Result<Option<i64>, TaskError> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_i64()
            .map(Some)
            .ok_or_else(|| malformed(format!("{key} must be an integer"))),
    }
}

fn parse_constraints(map: &Map<String, Value>) -> Result<Constraints, TaskError> {
    reject_unknown(map, &CONSTRAINT_KEYS, "constraints")?;
    let mut out = Constraints { budget: int_field(map, "budget")?, ..Constraints::default() };
    if let Some(b) = out.budget {
        if b <= 0 {
            return Err(TaskError::InvalidBudget(b));
        }
    }

    out.max_runtime = int_field(map, "max_runtime")?;
    if let Some(r) = out.max_runtime {
        if r <= 0 {
            return Err(TaskError::InvalidConstraint(format!("max_runtime must be positive, got {r}")));
        }
    }

    match map.get("environment_requirements") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for item in items {
                let s = item
                    .as_str()
                    .ok_or_else(|| malformed("environment_requirements must be a list of strings"))?;
                out.environment_requirements.push(s.to_string());
            }
        }
        Some(_) => return Err(malformed("environment_requirements must be a list of strings")),
    }

    match map.get("output_format") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) if !s.trim().is_empty() => out.output_format = s.clone(),
        Some(_) => return Err(malformed("output_format must be a non-empty string")),
    }

    if let Some(rounds) = int_field(map, "max_repair_rounds")? {
        out.max_repair_rounds = rounds;
    }
    let report = validate_constraints(&out);
    if let Some(v) = report.first() {
        return Err(TaskError::InvalidConstraint(v.message.clone()));
    }
    Ok(out)
}

fn parse_resources(items: &[Value]) -> Result<Vec<ResourceRef>, TaskError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let r: ResourceRef =
            serde_json::from_value(item.clone()).map_err(|e| malformed(format!("resource: {e}")))?;
        if !seen.insert(r.id.clone()) {
            return Err(TaskError::DuplicateResourceId(r.id));
        }
        let needs_locator = matches!(r.kind, ResourceKind::Repository | ResourceKind::ReferenceGraph);
        if needs_locator && !locator_is_resolvable(&r.locator) {
            return Err(TaskError::InvalidLocator(r.id));
        }
        out.push(r);
    }
    Ok(out)
}

/// Syntactic check only: non-empty and free of whitespace and control chars.
pub fn locator_is_resolvable(locator: &str) -> bool {
    !locator.is_empty() && !locator.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Check `constraints` against the type invariants. Violations are data.
pub fn validate_constraints(constraints: &Constraints) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Some(b) = constraints.budget {
        if b <= 0 {
            report.push(ViolationKind::Budget, format!("budget must be positive, got {b}"));
        }
    }
    if let Some(r) = constraints.max_runtime {
        if r <= 0 {
            report.push(ViolationKind::MaxRuntime, format!("max_runtime must be positive, got {r}"));
        }
    }
    if constraints.max_repair_rounds < 0 {
        report.push(ViolationKind::MaxRepairRounds, "max_repair_rounds must be non-negative");
    } else if constraints.max_repair_rounds > MAX_REPAIR_ROUNDS_CAP as i64 {
        report.push(
            ViolationKind::MaxRepairRounds,
            format!("max_repair_rounds exceeds cap {MAX_REPAIR_ROUNDS_CAP}"),
        );
    }
    report
}

impl TaskSpecification {
    /// Canonical JSON (sorted keys, compact).
    pub fn to_canonical(&self) -> String {
        to_canonical_string(self).expect("task specification is always serializable")
    }

    pub fn resources_of(&self, kind: ResourceKind) -> impl Iterator<Item = &ResourceRef> {
        self.resources.iter().filter(move |r| r.kind == kind)
    }
}

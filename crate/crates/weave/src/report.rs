//! Plain-text summary of one `weave run`.

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use weave_core::review::{RepairDecision, StopReason};
use weave_core::runtime::Outcome;

#[derive(Debug, Clone)]
pub struct RunReport {
    pub task_id: String,
    pub outcome: Outcome,
    pub stop_reason: StopReason,
    pub rounds_used: u32,
    pub total_cost: u64,
    pub stage_timings: Vec<Duration>,
    pub decisions: Vec<RepairDecision>,
    pub budget_warnings: Vec<String>,
    pub graph_path: PathBuf,
    pub trace_path: PathBuf,
    pub patches_path: PathBuf,
}

/// The serialized tag of a unit enum variant.
fn tag<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task: {}", self.task_id)?;
        writeln!(f, "outcome: {}", tag(&self.outcome))?;
        writeln!(f, "stop_reason: {}", self.stop_reason.as_str())?;
        writeln!(f, "rounds_used: {}", self.rounds_used)?;
        writeln!(f, "total_cost: {}", self.total_cost)?;
        let timings: Vec<String> = self.stage_timings.iter().map(|d| format!("{:.3}", d.as_secs_f64())).collect();
        writeln!(f, "stage_seconds: [{}]", timings.join(", "))?;
        for d in &self.decisions {
            let triggers: Vec<String> = d.triggers.iter().map(tag).collect();
            writeln!(f, "round {}: {} on {} ({})", d.round, d.action.as_str(), d.node, triggers.join(", "))?;
        }
        for n in &self.budget_warnings {
            writeln!(f, "budget warning: {n}")?;
        }
        writeln!(f, "graph: {}", self.graph_path.display())?;
        writeln!(f, "trace: {}", self.trace_path.display())?;
        writeln!(f, "patches: {}", self.patches_path.display())
    }
}

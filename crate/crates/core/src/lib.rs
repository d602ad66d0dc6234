//! Synthesis, typed execution and evidence-guided local repair of
//! multi-agent workflow graphs.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network, threads or a clock lives in the `weave` companion
//! crate; here the engine talks to the outside world through a handful of
//! traits ([`runtime::Executor`], [`runtime::StageRunner`],
//! [`sandbox::BuildBackend`]).
//!
//! The pipeline, in order:
//!
//! 1. [`task`] parses and validates a [`task::TaskSpecification`].
//! 2. [`library`] holds reusable entries and ranks them against queries.
//! 3. [`synthesis`] turns a task plus a library snapshot into a
//!    [`graph::WorkflowGraph`].
//! 4. [`sandbox`] wraps external repositories as executor bindings.
//! 5. [`runtime`] executes a graph stage by stage and records an
//!    [`runtime::ExecutionTrace`].
//! 6. [`review`] inspects the evidence and applies bounded, local patches to a
//!    per-run copy of the graph.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod artifact;
pub mod canonical;
pub mod graph;
pub mod library;
pub mod metrics;
pub mod report;
pub mod review;
pub mod runtime;
pub mod sandbox;
pub mod synthesis;
pub mod task;
mod text;

pub use artifact::{ArtifactSchema, FieldKind, FieldMapping, SchemaRegistry};
pub use graph::{Edge, GraphPatch, Node, NodeKind, WorkflowGraph};
pub use library::{EntryKind, Library, LibraryEntry};
pub use report::{ValidationReport, Violation};
pub use task::{Constraints, ResourceKind, ResourceRef, TaskSpecification};

/// Maximum number of repair rounds any task may request.
pub const MAX_REPAIR_ROUNDS_CAP: u32 = 16;

/// Repair rounds used when a task does not say.
pub const DEFAULT_MAX_REPAIR_ROUNDS: u32 = 3;

//! Std companion to `weave-core`: the on-disk library format, a threaded
//! stage runner, the remote and setup executors, and the `weave` command
//! line.

pub mod cli;
pub mod remote;
pub mod report;
pub mod runner;
pub mod setup;
pub mod store;

pub use weave_core;

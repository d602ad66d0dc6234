//! Stage runner that gives every node of a stage its own thread.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use weave_core::runtime::{NodeJob, NodeRun, StageRunner};

/// Runs the jobs of a stage on scoped threads and records how long each
/// stage took. Results come back in job order, so traces match the
/// sequential runner's.
#[derive(Debug, Default)]
pub struct ThreadedRunner {
    timings: Mutex<Vec<Duration>>,
}

impl ThreadedRunner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wall-clock duration of every stage run so far, in call order.
    pub fn stage_timings(&self) -> Vec<Duration> {
        self.timings.lock().expect("timings lock poisoned").clone()
    }
}

impl StageRunner for ThreadedRunner {
    fn run_stage<'a>(&self, jobs: Vec<NodeJob<'a>>) -> Vec<NodeRun> {
        let start = Instant::now();
        let runs = if jobs.len() <= 1 {
            jobs.into_iter().map(|job| job()).collect()
        } else {
            thread::scope(|scope| {
                let handles: Vec<_> = jobs.into_iter().map(|job| scope.spawn(job)).collect();
                handles.into_iter().map(|h| h.join().expect("node job panicked")).collect()
            })
        };
        self.timings.lock().expect("timings lock poisoned").push(start.elapsed());
        runs
    }
}

//! Command-line companion to the simulator core: scenario file parsing,
//! CSV/summary reporting, calibration checks, and the shipped default
//! scenarios with their recorded calibration anchors.

use std::fmt;

pub mod calibrate;
pub mod commands;
pub mod config;
pub mod report;
pub mod scenarios;

/// CLI failure split by exit code: configuration and usage problems exit 2,
/// runtime failures (simulation or IO) exit 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fedhpc_core::Error> for CliError {
    fn from(e: fedhpc_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Runs `f` over `items` on up to `jobs` worker threads, preserving input
/// order in the results. Each item is independent, so scheduling cannot
/// affect the output.
pub fn parallel_map<T, R, F>(items: Vec<T>, jobs: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let queue = std::sync::Mutex::new(items.into_iter().enumerate().collect::<Vec<_>>());
    let results = std::sync::Mutex::new((0..n).map(|_| None).collect::<Vec<Option<R>>>());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop();
                let Some((i, item)) = next else { break };
                let r = f(item);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("worker filled slot")).collect()
}

/// Default worker count for seed sweeps.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8)
}

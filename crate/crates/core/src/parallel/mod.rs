//! Asynchronous execution: a team of worker threads claiming step indices
//! from a shared counter and updating a shared iterate, either lock-free
//! (per-coordinate compare-and-swap, inconsistent reads) or locked
//! (reads of `x` under a shared lock, writes exclusive).

mod atomic;
mod barrier;
mod runtime;
mod sgd;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use atomic::{apply_update_lockfree, AtomicF64, SharedParams};
pub use barrier::{BarrierError, EpochBarrier};
pub use runtime::{run_async, run_async_observed};
pub use sgd::{run_sgd, run_sgd_observed, SgdConfig, StepSize};

use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockMode {
    LockFree,
    Locked,
}

impl std::str::FromStr for LockMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "lock-free" | "lock_free" | "lockfree" => Ok(LockMode::LockFree),
            "locked" => Ok(LockMode::Locked),
            other => Err(crate::error::Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for LockMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            LockMode::LockFree => "lock-free",
            LockMode::Locked => "locked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncConfig {
    pub threads: usize,
    pub mode: LockMode,
    pub base: SolverConfig,
    /// Abort when a step's measured staleness exceeds this.
    #[serde(default)]
    pub tau_cap: Option<u64>,
    /// Synchronize all workers at every epoch end.
    #[serde(default = "default_true")]
    pub barrier: bool,
    #[serde(default = "default_watchdog_ms")]
    pub watchdog_ms: u64,
    /// Read `x` and the anchor gradient together. When false the anchor
    /// gradient is read after the gradient at `x` has been computed.
    #[serde(default = "default_true")]
    pub joint_read: bool,
    /// Keep every claimed step index (for auditing the counter).
    #[serde(default)]
    pub record_claims: bool,
}

fn default_true() -> bool {
    true
}

fn default_watchdog_ms() -> u64 {
    60_000
}

impl AsyncConfig {
    pub fn new(threads: usize, mode: LockMode, base: SolverConfig) -> Self {
        AsyncConfig {
            threads,
            mode,
            base,
            tau_cap: None,
            barrier: true,
            watchdog_ms: default_watchdog_ms(),
            joint_read: true,
            record_claims: false,
        }
    }

    pub fn watchdog(&self) -> Duration {
        Duration::from_millis(self.watchdog_ms)
    }
}

/// Measured staleness `t - D(t)`, where `D(t)` is the number of fully
/// applied steps observed when step `t` starts reading.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StalenessTrace {
    /// `histogram[s]` counts steps with staleness `s`; the last bucket also
    /// holds everything above [`StalenessTrace::HISTOGRAM_LEN`].
    pub histogram: Vec<u64>,
    pub max: u64,
    pub samples: u64,
    /// Steps whose read saw fewer than `km` applied steps.
    pub barrier_violations: u64,
    pub cas_retries: u64,
    pub claims: Option<Vec<u64>>,
}

impl StalenessTrace {
    pub const HISTOGRAM_LEN: usize = 4096;

    pub(crate) fn record(&mut self, staleness: u64) {
        let b = (staleness as usize).min(Self::HISTOGRAM_LEN - 1);
        if self.histogram.len() <= b {
            self.histogram.resize(b + 1, 0);
        }
        self.histogram[b] += 1;
        self.max = self.max.max(staleness);
        self.samples += 1;
    }

    pub(crate) fn merge(&mut self, other: StalenessTrace) {
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.max = self.max.max(other.max);
        self.samples += other.samples;
        self.barrier_violations += other.barrier_violations;
        self.cas_retries += other.cas_retries;
        if let Some(c) = other.claims {
            self.claims.get_or_insert_with(Vec::new).extend(c);
        }
    }

    pub fn mean(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        let s: f64 = self.histogram.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
        s / self.samples as f64
    }
}

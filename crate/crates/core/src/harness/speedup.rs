use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::parallel::{run_async_observed, AsyncConfig, LockMode};
use crate::solver::{Control, Reference};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub mode: LockMode,
    pub threads: usize,
    /// Median time to target over seeds, counting unreached runs as
    /// infinite. `None` when the median run did not reach the target.
    pub median_seconds: Option<f64>,
    /// `median_seconds(P = 1) / median_seconds(P)` for the same mode.
    pub speedup: Option<f64>,
    pub median_epochs: Option<f64>,
    pub max_staleness: u64,
    pub reached_runs: usize,
    pub total_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupTable {
    pub target: f64,
    pub rows: Vec<SpeedupRow>,
}

impl SpeedupTable {
    pub fn row(&self, mode: LockMode, threads: usize) -> Option<&SpeedupRow> {
        self.rows.iter().find(|r| r.mode == mode && r.threads == threads)
    }
}

/// Median with `None` ordered above every value.
fn median(mut v: Vec<Option<f64>>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        Some((v[k / 2 - 1]? + v[k / 2]?) / 2.0)
    }
}

/// Runs `base` at every thread count (ascending, starting at 1) and mode for
/// every seed, stopping each run at the first epoch whose suboptimality is
/// at most `target`. The target must be reached at `P = 1`.
pub fn measure_speedup(
    p: &Problem,
    base: &AsyncConfig,
    modes: &[LockMode],
    threads: &[usize],
    seeds: &[u64],
    target: f64,
    reference: Reference<'_>,
) -> Result<SpeedupTable> {
    if seeds.is_empty() || modes.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed and one mode".into()));
    }
    let mut grid: Vec<usize> = threads.to_vec();
    grid.push(1);
    grid.sort_unstable();
    grid.dedup();
    if grid[0] == 0 {
        return Err(Error::InvalidArgument("thread counts must be positive".into()));
    }
    let x0 = vec![0.0; p.dim()];
    let mut rows = Vec::new();
    for &mode in modes {
        let mut single: Option<f64> = None;
        for &t in &grid {
            let mut times = Vec::new();
            let mut epochs = Vec::new();
            let mut max_staleness = 0;
            for &seed in seeds {
                let mut cfg = base.clone();
                cfg.threads = t;
                cfg.mode = mode;
                cfg.base.seed = seed;
                let (_, trace, st) = run_async_observed(p, &cfg, &x0, Some(reference), |row| {
                    if row.suboptimality.is_some_and(|s| s <= target) {
                        Control::Stop
                    } else {
                        Control::Continue
                    }
                })?;
                times.push(trace.seconds_to(target));
                epochs.push(trace.epochs_to(target).map(|e| e as f64));
                max_staleness = max_staleness.max(st.max);
            }
            let reached = times.iter().filter(|t| t.is_some()).count();
            let med = median(times);
            if t == 1 {
                if med.is_none() {
                    return Err(Error::TargetNotReached {
                        target,
                        epochs: base.base.epochs,
                    });
                }
                single = med;
            }
            rows.push(SpeedupRow {
                mode,
                threads: t,
                median_seconds: med,
                speedup: if t == 1 {
                    Some(1.0)
                } else {
                    med.zip(single).map(|(m, s)| s / m)
                },
                median_epochs: median(epochs),
                max_staleness,
                reached_runs: reached,
                total_runs: seeds.len(),
            });
        }
    }
    Ok(SpeedupTable { target, rows })
}

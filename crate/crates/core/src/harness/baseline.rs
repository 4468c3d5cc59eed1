use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::parallel::{run_sgd_observed, SgdConfig, StepSize};
use crate::solver::{Control, ConvergenceTrace, Reference};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Constant step size.
    Csgd,
    /// `eta0 * sqrt(sigma0 / (t + sigma0))`.
    Dsgd,
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Baseline::Csgd => "csgd",
            Baseline::Dsgd => "dsgd",
        })
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csgd" => Ok(Baseline::Csgd),
            "dsgd" => Ok(Baseline::Dsgd),
            other => Err(Error::InvalidArgument(format!("unknown baseline {other:?}"))),
        }
    }
}

pub fn step_size(variant: Baseline, eta0: f64, sigma0: f64) -> StepSize {
    match variant {
        Baseline::Csgd => StepSize::Constant { eta: eta0 },
        Baseline::Dsgd => StepSize::Decaying { eta0, sigma0 },
    }
}

/// Lock-free SGD with one trace row per `n` steps. Stops early once the
/// suboptimality reaches `stop_at`.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline_sgd(
    p: &Problem,
    variant: Baseline,
    eta0: f64,
    sigma0: f64,
    threads: usize,
    seed: u64,
    epochs: usize,
    reference: Option<Reference<'_>>,
    stop_at: Option<f64>,
) -> Result<ConvergenceTrace> {
    if !(eta0 > 0.0) || (variant == Baseline::Dsgd && !(sigma0 > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "{variant} needs eta0 > 0{}",
            if variant == Baseline::Dsgd { " and sigma0 > 0" } else { "" }
        )));
    }
    let cfg = SgdConfig::new(threads, step_size(variant, eta0, sigma0), epochs, seed);
    let (_, mut trace) = run_sgd_observed(p, &cfg, &vec![0.0; p.dim()], reference, |row| {
        match (stop_at, row.suboptimality) {
            (Some(t), Some(s)) if s <= t => Control::Stop,
            _ => Control::Continue,
        }
    })?;
    trace.flags.push(variant.to_string());
    Ok(trace)
}

/// Logarithmic step-size grid: `eta0 = c / L` for `c` in `eta_multipliers`,
/// and (DSGD only) `sigma0 = s * n` for `s` in `sigma_multipliers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepGrid {
    pub eta_multipliers: Vec<f64>,
    pub sigma_multipliers: Vec<f64>,
}

impl Default for StepGrid {
    fn default() -> Self {
        StepGrid {
            eta_multipliers: vec![0.01, 0.03, 0.1, 0.3, 1.0, 3.0],
            sigma_multipliers: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta0: f64,
    pub sigma0: f64,
    /// Final suboptimality, `None` on divergence.
    pub final_suboptimality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedBaseline {
    pub variant: Baseline,
    pub grid: StepGrid,
    pub evaluated: Vec<GridPoint>,
    pub eta0: f64,
    pub sigma0: f64,
    pub trace: ConvergenceTrace,
}

/// Runs every grid point for `epochs` epochs and keeps the one with the
/// lowest final suboptimality. Diverging points are recorded and skipped.
pub fn tune_baseline(
    p: &Problem,
    variant: Baseline,
    grid: &StepGrid,
    threads: usize,
    seed: u64,
    epochs: usize,
    reference: Reference<'_>,
) -> Result<TunedBaseline> {
    let l = p.smoothness();
    let n = p.n() as f64;
    let sigmas: Vec<f64> = match variant {
        Baseline::Csgd => vec![n],
        Baseline::Dsgd => grid.sigma_multipliers.iter().map(|s| s * n).collect(),
    };
    let mut evaluated = Vec::new();
    let mut best: Option<(f64, f64, f64, ConvergenceTrace)> = None;
    for &c in &grid.eta_multipliers {
        for &sigma0 in &sigmas {
            let eta0 = c / l;
            let score = match run_baseline_sgd(p, variant, eta0, sigma0, threads, seed, epochs, Some(reference), None) {
                Ok(trace) => {
                    let s = trace.rows.last().and_then(|r| r.suboptimality).filter(|s| s.is_finite());
                    if let Some(s) = s {
                        if best.as_ref().is_none_or(|b| s < b.0) {
                            best = Some((s, eta0, sigma0, trace));
                        }
                    }
                    s
                }
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            evaluated.push(GridPoint {
                eta0,
                sigma0,
                final_suboptimality: score,
            });
        }
    }
    let (_, eta0, sigma0, trace) =
        best.ok_or_else(|| Error::Infeasible(format!("every {variant} step size in the grid diverged")))?;
    Ok(TunedBaseline {
        variant,
        grid: grid.clone(),
        evaluated,
        eta0,
        sigma0,
        trace,
    })
}

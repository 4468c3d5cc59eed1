//! Experiment orchestration: reference optima, SGD baselines, speedup
//! measurement, and CSV/JSON output.

pub mod baseline;
pub mod emit;
pub mod plan;
pub mod reference;
pub mod speedup;

pub use baseline::{run_baseline_sgd, tune_baseline, Baseline, StepGrid, TunedBaseline};
pub use emit::{emit_speedup, emit_trace, Format};
pub use plan::{run_plan, DataSource, ExperimentPlan, PlanEntry, PlanReport, Size, SolverKind, SpeedupPlan, Step};
pub use reference::{reference_optimum, ReferenceOptimum, CACHE_DIR_ENV};
pub use speedup::{measure_speedup, SpeedupRow, SpeedupTable};

//! Run a small experiment plan from JSON: traces, speedup table, resolved
//! plan and certificates land in the output directory.
//!
//! ```text
//! cargo run --release --example plan -- out/plan-demo
//! ```

use vrsgd::harness::{run_plan, ExperimentPlan};

const PLAN: &str = r#"{
  "data": { "source": "synthetic", "n": 2000, "d": 1000, "nnz_per_row": 5, "seed": 1 },
  "seeds": [1, 2, 3],
  "output_dir": "out/plan-demo",
  "entries": [
    { "name": "svrg", "solver": "serial", "schedule": "svrg", "m": "2n", "eta": "0.1/L", "epochs": 40, "jit": true },
    { "name": "saga", "solver": "serial", "schedule": "saga", "m": "n", "epochs": 40 },
    { "name": "hsag", "solver": "serial", "schedule": "hsag", "hsag_set": 0.25, "epochs": 40 },
    { "name": "async", "solver": "async", "schedule": "svrg", "threads": 2, "epochs": 40, "jit": true },
    { "name": "dsgd", "solver": "dsgd", "epochs": 40 }
  ],
  "speedup": { "entry": "async", "threads": [1, 2] }
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut plan: ExperimentPlan = serde_json::from_str(PLAN)?;
    if let Some(dir) = std::env::args().nth(1) {
        plan.output_dir = dir.into();
    }
    let report = run_plan(&plan)?;
    for (name, trace) in &report.traces {
        let last = trace.rows.last().unwrap();
        let reached = trace.epochs_to(plan.target_accuracy).map_or("-".to_string(), |k| k.to_string());
        println!(
            "{name:<6} target reached at epoch {reached:>3}, final mean f - f* = {:.2e}",
            last.suboptimality.unwrap_or(f64::NAN)
        );
    }
    for w in &report.resolved.warnings {
        println!("warning: {w}");
    }
    println!("artifacts in {}", plan.output_dir.display());
    Ok(())
}

//! Tuned constant- and decaying-step SGD against SVRG on an ill-conditioned
//! problem.
//!
//! ```text
//! cargo run --release --example baselines
//! ```

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::{reference_optimum, tune_baseline, Baseline, StepGrid};
use vrsgd::objective::Problem;
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{solve_observed, Control, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_synthetic(&SyntheticSpec { n: 1000, d: 200, nnz_per_row: 5, label_model: Default::default(), seed: 7 })?;
    let n = ds.n();
    let p = Problem::new(ds, 0.1 / n as f64)?;
    let r = reference_optimum(&p, 1e-12, None)?;
    let epochs = 40;

    let mut cfg = SolverConfig::new(0.1 / p.smoothness(), epochs, ScheduleSpec::svrg(2 * n));
    cfg.jit = true;
    let (_, svrg) = solve_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |_| Control::Continue)?;
    println!("svrg: final f - f* = {:.2e}", svrg.rows.last().unwrap().suboptimality.unwrap());

    let grid = StepGrid::default();
    for variant in [Baseline::Csgd, Baseline::Dsgd] {
        let tuned = tune_baseline(&p, variant, &grid, 1, 1, epochs, r.as_reference())?;
        println!(
            "{variant}: eta0 = {:.3e}, sigma0 = {:.0}, final f - f* = {:.2e} ({} grid points)",
            tuned.eta0,
            tuned.sigma0,
            tuned.trace.rows.last().unwrap().suboptimality.unwrap(),
            tuned.evaluated.len()
        );
    }
    Ok(())
}

//! Serial SVRG on a synthetic problem, printing suboptimality per epoch.
//!
//! ```text
//! cargo run --release --example serial_solve
//! ```

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::reference_optimum;
use vrsgd::objective::Problem;
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{solve_observed, Control, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_synthetic(&SyntheticSpec { n: 2000, d: 400, nnz_per_row: 8, label_model: Default::default(), seed: 3 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    let r = reference_optimum(&p, 1e-12, None)?;
    println!("L = {:.4}, mu = {:.2e}, f* = {:.12}", p.smoothness(), p.strong_convexity(), r.f_star);

    let cfg = SolverConfig::new(0.1 / p.smoothness(), 30, ScheduleSpec::svrg(2 * n));
    let (_, trace) = solve_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |row| {
        println!("epoch {:>3}  f - f* = {:.3e}", row.epoch, row.suboptimality.unwrap());
        if row.suboptimality.unwrap() <= 1e-10 {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    println!("gradient evaluations: {}", trace.setup_grad_evals + trace.rows.iter().map(|r| r.grad_evals).sum::<u64>());
    Ok(())
}

//! Every schedule on the same problem: epochs, gradient evaluations and
//! memory representation needed to reach `1e-8`.
//!
//! ```text
//! cargo run --release --example schedules
//! ```

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::reference_optimum;
use vrsgd::objective::Problem;
use vrsgd::schedule::{Frequency, ScheduleSpec};
use vrsgd::solver::{solve_observed, Control, SerialSolver, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_synthetic(&SyntheticSpec { n: 1000, d: 300, nnz_per_row: 6, label_model: Default::default(), seed: 5 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    let r = reference_optimum(&p, 1e-12, None)?;
    let target = 1e-8;

    // half the examples keep a table entry, the rest share one snapshot
    let half: Vec<usize> = (0..n).step_by(2).collect();
    let runs = [
        ("svrg", ScheduleSpec::svrg(2 * n), 0.1),
        ("saga", ScheduleSpec::saga(n), 0.1),
        ("sag", ScheduleSpec::sag(n), 0.05),
        ("gd", ScheduleSpec::gd(1), 1.0),
        ("hsag", ScheduleSpec::hsag(2 * n, half, Some(Frequency::Every(2 * n as u64))), 0.1),
    ];
    println!("{:<6} {:>7} {:>12} {:>8}  representation", "", "epochs", "grad evals", "biased");
    for (name, spec, c) in runs {
        let biased = spec.is_biased();
        let epochs = if name == "gd" { 3000 } else { 200 };
        let cfg = SolverConfig::new(c / p.smoothness(), epochs, spec);
        let repr = SerialSolver::new(&p, cfg.clone(), &vec![0.0; p.dim()])?.state().representation();
        let (_, tr) = solve_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |row| {
            if row.suboptimality.is_some_and(|s| s <= target) {
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let evals = tr.setup_grad_evals + tr.rows.iter().map(|r| r.grad_evals).sum::<u64>();
        let k = tr.epochs_to(target).map_or("-".to_string(), |k| k.to_string());
        println!("{name:<6} {k:>7} {evals:>12} {biased:>8}  {repr:?}");
    }
    Ok(())
}

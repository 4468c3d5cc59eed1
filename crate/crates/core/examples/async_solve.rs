//! Lock-free and locked asynchronous SVRG with a staleness summary.
//!
//! ```text
//! cargo run --release --example async_solve -- 4
//! ```

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::reference_optimum;
use vrsgd::objective::Problem;
use vrsgd::parallel::{run_async_observed, AsyncConfig, LockMode};
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{Control, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let threads: usize = std::env::args().nth(1).map_or(Ok(4), |s| s.parse())?;
    let ds = generate_synthetic(&SyntheticSpec { n: 4000, d: 2000, nnz_per_row: 5, label_model: Default::default(), seed: 2 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    let r = reference_optimum(&p, 1e-12, None)?;
    println!("delta = {:.4}, threads = {threads}", p.data().delta());

    let mut base = SolverConfig::new(0.1 / p.smoothness(), 60, ScheduleSpec::svrg(2 * n));
    base.jit = true;
    for mode in [LockMode::LockFree, LockMode::Locked] {
        let cfg = AsyncConfig::new(threads, mode, base.clone());
        let (_, tr, st) = run_async_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |row| {
            if row.suboptimality.is_some_and(|s| s <= 1e-10) {
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let last = tr.rows.last().unwrap();
        println!(
            "{mode:<9} epochs {:>3}  f - f* = {:.2e}  {:.3}s  staleness mean {:.2} max {}  cas retries {}",
            last.epoch,
            last.suboptimality.unwrap(),
            last.wall_seconds,
            st.mean(),
            st.max,
            st.cas_retries
        );
    }
    Ok(())
}

//! Time-to-accuracy speedup table for both locking modes, written as CSV.
//!
//! ```text
//! cargo run --release --example speedup -- speedup.csv
//! ```

use std::fs::File;

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::emit::write_speedup_csv;
use vrsgd::harness::{measure_speedup, reference_optimum};
use vrsgd::objective::Problem;
use vrsgd::parallel::{AsyncConfig, LockMode};
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "speedup.csv".into());
    let ds = generate_synthetic(&SyntheticSpec { n: 5000, d: 5000, nnz_per_row: 5, label_model: Default::default(), seed: 4 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    let r = reference_optimum(&p, 1e-12, None)?;

    let mut base = SolverConfig::new(0.1 / p.smoothness(), 100, ScheduleSpec::svrg(2 * n));
    base.jit = true;
    let cfg = AsyncConfig::new(1, LockMode::LockFree, base);
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let threads: Vec<usize> = [1, 2, 4, 8].into_iter().filter(|&t| t <= cores.max(2)).collect();
    let table = measure_speedup(&p, &cfg, &[LockMode::LockFree, LockMode::Locked], &threads, &[1, 2, 3], 1e-10, r.as_reference())?;

    for row in &table.rows {
        println!(
            "{:<9} P={:<2} {:>8} speedup {:>6}",
            row.mode,
            row.threads,
            row.median_seconds.map_or("-".into(), |s| format!("{s:.3}s")),
            row.speedup.map_or("-".into(), |s| format!("{s:.2}"))
        );
    }
    write_speedup_csv(&table, File::create(&out)?)?;
    println!("wrote {out}");
    Ok(())
}

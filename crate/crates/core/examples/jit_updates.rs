//! Just-in-time coordinate updates against the dense solver: same iterates,
//! less work per step on sparse data.
//!
//! ```text
//! cargo run --release --example jit_updates
//! ```

use std::time::Instant;

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::objective::Problem;
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{solve, SolverConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_synthetic(&SyntheticSpec { n: 5000, d: 20_000, nnz_per_row: 10, label_model: Default::default(), seed: 8 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    let mut cfg = SolverConfig::new(0.1 / p.smoothness(), 5, ScheduleSpec::svrg(2 * n));
    cfg.seed = 4;
    let x0 = vec![0.0; p.dim()];

    let t = Instant::now();
    let (dense, _) = solve(&p, &cfg, &x0)?;
    let dense_s = t.elapsed().as_secs_f64();

    cfg.jit = true;
    let t = Instant::now();
    let (jit, _) = solve(&p, &cfg, &x0)?;
    let jit_s = t.elapsed().as_secs_f64();

    let diff = dense.iter().zip(&jit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("dense {dense_s:.3}s, jit {jit_s:.3}s, max coordinate difference {diff:.2e}");
    Ok(())
}

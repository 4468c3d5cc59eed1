//! High-accuracy reference optimum with an on-disk cache.
//!
//! ```text
//! cargo run --release --example reference_optimum -- /tmp/vrsgd-cache
//! ```

use std::path::PathBuf;

use vrsgd::dataset::{generate_synthetic, SyntheticSpec};
use vrsgd::harness::reference::cache_key;
use vrsgd::harness::reference_optimum;
use vrsgd::objective::{norm2, Problem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("vrsgd-cache"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let ds = generate_synthetic(&SyntheticSpec { n: 3000, d: 800, nnz_per_row: 6, label_model: Default::default(), seed: 9 })?;
    let n = ds.n();
    let p = Problem::new(ds, 1.0 / n as f64)?;
    println!("cache key {}", cache_key(&p));

    for _ in 0..2 {
        let r = reference_optimum(&p, 1e-12, Some(&dir))?;
        println!(
            "f* = {:.15}, |grad| = {:.2e}, epochs = {}, from cache = {}",
            r.f_star, r.grad_norm, r.epochs, r.from_cache
        );
        assert!(norm2(&p.full_gradient(&r.x_star)) <= 1e-12);
    }
    Ok(())
}

//! Generate a synthetic sparse dataset, write it as LIBSVM text and read it
//! back.
//!
//! ```text
//! cargo run --example gen_data
//! ```

use std::io::BufReader;

use vrsgd::dataset::{generate_synthetic, load_libsvm, LabelModel, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_synthetic(&SyntheticSpec {
        n: 1000,
        d: 200,
        nnz_per_row: 5,
        label_model: LabelModel { flip_prob: 0.05 },
        seed: 1,
    })?;
    println!("n = {}, d = {}, nnz = {}, delta = {:.4}", ds.n(), ds.dim(), ds.total_nnz(), ds.delta());

    let mut text = Vec::new();
    ds.write_libsvm(&mut text)?;
    println!("first line: {}", String::from_utf8_lossy(&text).lines().next().unwrap_or(""));

    let back = load_libsvm(BufReader::new(text.as_slice()), Some(ds.dim()))?;
    println!("reloaded delta = {:.4}, same content: {}", back.delta(), back.content_hash() == ds.content_hash());
    Ok(())
}

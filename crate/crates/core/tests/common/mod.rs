#![allow(dead_code)]

use vrsgd::dataset::{generate_synthetic, LabelModel, SparseDataset, SparseExample, SyntheticSpec};
use vrsgd::objective::Problem;

pub fn synthetic(n: usize, d: usize, k: usize, seed: u64) -> SparseDataset {
    generate_synthetic(&SyntheticSpec {
        n,
        d,
        nnz_per_row: k,
        label_model: LabelModel::default(),
        seed,
    })
    .unwrap()
}

pub fn problem(n: usize, d: usize, k: usize, seed: u64) -> Problem {
    Problem::new(synthetic(n, d, k, seed), 1.0 / n as f64).unwrap()
}

/// One feature per example, all supports disjoint.
pub fn diagonal(n: usize) -> SparseDataset {
    let examples = (0..n)
        .map(|i| SparseExample::new(vec![i], vec![1.0], if i % 3 == 0 { -1.0 } else { 1.0 }).unwrap())
        .collect();
    SparseDataset::new(examples, Some(n)).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Problem whose default smoothness satisfies `L / mu = n` exactly.
///
/// With unit rows, `L = 0.25 + 2 n lambda r` where `r = max 1/d_j`, and
/// `mu = 2 lambda`, so `lambda = 0.125 / (n (1 - r))`.
pub fn conditioned(n: usize, d: usize, k: usize, seed: u64) -> Problem {
    let ds = synthetic(n, d, k, seed);
    let r = ds
        .col_counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| 1.0 / c as f64)
        .fold(0.0, f64::max);
    assert!(r < 1.0, "every column must appear at least twice");
    let lambda = 0.125 / (n as f64 * (1.0 - r));
    Problem::new(ds, lambda).unwrap()
}

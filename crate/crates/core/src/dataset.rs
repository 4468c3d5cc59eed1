//! Row-sparse labelled datasets.
//!
//! Examples are stored as sorted `(index, value)` lists with labels in
//! `{-1, +1}`. Construction computes the column occupancy counts `d_j` (the
//! number of examples whose support contains feature `j`) and the sparsity
//! constant `delta = max_j d_j / n`, which is exactly the smallest constant
//! with `E_i[|x|_{e_i}^2] <= delta * |x|^2` for every `x`.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A single labelled example with a sorted sparse feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample {
    indices: Vec<usize>,
    values: Vec<f64>,
    label: f64,
}

impl SparseExample {
    /// Builds an example, checking that indices are strictly increasing,
    /// values are finite and nonzero, and the label is `-1` or `+1`.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, label: f64) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "indices must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| **v == 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stored values must be finite and nonzero, got {v}"
            )));
        }
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidArgument(format!("label must be +-1, got {label}")));
        }
        Ok(SparseExample {
            indices,
            values,
            label,
        })
    }

    /// The support set `e_i` (sorted feature ids).
    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn label(&self) -> f64 {
        self.label
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sparse dot product against a dense vector.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| v * x[j])
            .sum()
    }
}

/// An immutable collection of examples with precomputed column statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    examples: Vec<SparseExample>,
    dim: usize,
    col_counts: Vec<usize>,
    delta: f64,
}

impl SparseDataset {
    /// Builds a dataset; `dim` defaults to `max index + 1`.
    pub fn new(examples: Vec<SparseExample>, dim: Option<usize>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let needed = examples
            .iter()
            .filter_map(|e| e.indices.last())
            .max()
            .map_or(0, |&j| j + 1);
        let dim = match dim {
            Some(d) if d < needed => {
                return Err(Error::InvalidArgument(format!(
                    "dimension {d} is smaller than max feature id + 1 = {needed}"
                )))
            }
            Some(d) => d,
            None => needed,
        };
        let mut col_counts = vec![0usize; dim];
        for e in &examples {
            for &j in &e.indices {
                col_counts[j] += 1;
            }
        }
        let mut ds = SparseDataset {
            examples,
            dim,
            col_counts,
            delta: 0.0,
        };
        ds.delta = ds.compute_delta();
        Ok(ds)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.examples.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn examples(&self) -> &[SparseExample] {
        &self.examples
    }

    #[inline]
    pub fn example(&self, i: usize) -> &SparseExample {
        &self.examples[i]
    }

    /// Column occupancy counts `d_j`.
    #[inline]
    pub fn col_counts(&self) -> &[usize] {
        &self.col_counts
    }

    /// Cached sparsity constant.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `max_j d_j / n`.
    pub fn compute_delta(&self) -> f64 {
        let max = self.col_counts.iter().copied().max().unwrap_or(0);
        max as f64 / self.n() as f64
    }

    pub fn total_nnz(&self) -> usize {
        self.examples.iter().map(SparseExample::nnz).sum()
    }

    /// Features that appear in no example. They are kept in the index space
    /// and contribute nothing to the objective.
    pub fn empty_columns(&self) -> Vec<usize> {
        self.col_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect()
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(mut self) -> Result<Self> {
        for (index, e) in self.examples.iter_mut().enumerate() {
            let norm = e.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroNormRow { index });
            }
            for v in &mut e.values {
                *v /= norm;
            }
        }
        Ok(self)
    }

    /// SHA-256 over the dataset contents (shape, supports, value bits, labels).
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for e in &self.examples {
            h.update(e.label.to_bits().to_le_bytes());
            h.update((e.nnz() as u64).to_le_bytes());
            for (&j, &v) in e.indices.iter().zip(&e.values) {
                h.update((j as u64).to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Writes the dataset in LIBSVM format (1-based ids, labels `+1`/`-1`).
    pub fn write_libsvm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.examples {
            write!(w, "{}", if e.label > 0.0 { "+1" } else { "-1" })?;
            for (&j, &v) in e.indices.iter().zip(&e.values) {
                write!(w, " {}:{}", j + 1, v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Parses LIBSVM text. Blank lines and lines starting with `#` are skipped;
/// trailing `# ...` comments on a data line are ignored.
pub fn load_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<SparseDataset> {
    let mut raw_labels: Vec<(usize, f64)> = Vec::new();
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };

        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(format!("invalid label {label_tok:?}")))?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(format!("expected idx:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(format!("invalid feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_err("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(format!("invalid feature value {val:?}")))?;
            if val == 0.0 {
                return Err(parse_err(format!("explicit zero stored for feature {idx}")));
            }
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite value for feature {idx}")));
            }
            let j = idx - 1;
            if indices.last().is_some_and(|&prev| prev >= j) {
                return Err(parse_err(format!("feature index {idx} is not increasing")));
            }
            indices.push(j);
            values.push(val);
        }
        raw_labels.push((line_no, label));
        rows.push((indices, values));
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let map = label_map(raw_labels.iter().map(|&(_, l)| l))?;
    let examples = rows
        .into_iter()
        .zip(raw_labels)
        .map(|((indices, values), (_, raw))| SparseExample {
            indices,
            values,
            label: map(raw),
        })
        .collect();
    SparseDataset::new(examples, dim)
}

/// Chooses the label mapping from the set of labels present.
fn label_map(labels: impl Iterator<Item = f64>) -> Result<fn(f64) -> f64> {
    let mut seen: Vec<f64> = Vec::new();
    for l in labels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    let within = |set: &[f64]| seen.iter().all(|l| set.contains(l));
    if within(&[-1.0, 1.0]) {
        Ok(|l| l)
    } else if within(&[0.0, 1.0]) {
        Ok(|l| if l == 0.0 { -1.0 } else { 1.0 })
    } else if within(&[1.0, 2.0]) {
        Ok(|l| if l == 1.0 { -1.0 } else { 1.0 })
    } else {
        Err(Error::LabelSet(seen.iter().map(|l| l.to_string()).collect()))
    }
}

/// How synthetic labels are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    /// Probability of flipping each planted label.
    pub flip_prob: f64,
}

impl Default for LabelModel {
    fn default() -> Self {
        LabelModel { flip_prob: 0.1 }
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub nnz_per_row: usize,
    #[serde(default)]
    pub label_model: LabelModel,
    pub seed: u64,
}

/// Generates a reproducible unit-normalized sparse dataset.
///
/// Supports are drawn from a stream of shuffled permutations of the feature
/// ids, so column counts stay balanced (about `n * nnz / d` each) and
/// `delta` is close to `nnz / d`. Labels follow a planted parameter `w`
/// under the loss `log(1 + exp(y z.x))`: `y = -sign(z.w)`, then flipped
/// with probability `flip_prob`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SparseDataset> {
    let SyntheticSpec {
        n,
        d,
        nnz_per_row: k,
        label_model,
        seed,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument("n and d must be positive".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "nnz_per_row must be in 1..={d}, got {k}"
        )));
    }
    if !(0.0..=1.0).contains(&label_model.flip_prob) {
        return Err(Error::InvalidArgument("flip_prob must be in [0, 1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();

    let mut pool: Vec<usize> = Vec::new();
    let mut deferred: Vec<usize> = Vec::new();
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut support: Vec<usize> = Vec::with_capacity(k);
        let mut carry = Vec::new();
        for j in deferred.drain(..) {
            if support.len() < k && !support.contains(&j) {
                support.push(j);
            } else {
                carry.push(j);
            }
        }
        while support.len() < k {
            if pool.is_empty() {
                pool.extend(0..d);
                pool.shuffle(&mut rng);
            }
            let j = pool.pop().expect("pool refilled");
            if support.contains(&j) {
                carry.push(j);
            } else {
                support.push(j);
            }
        }
        deferred = carry;
        support.sort_unstable();

        let mut values: Vec<f64> = Vec::with_capacity(k);
        for _ in 0..k {
            let mut v: f64 = StandardNormal.sample(&mut rng);
            while v == 0.0 {
                v = StandardNormal.sample(&mut rng);
            }
            values.push(v);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        let score: f64 = support.iter().zip(&values).map(|(&j, &v)| v * planted[j]).sum();
        let mut label = if score > 0.0 { -1.0 } else { 1.0 };
        if rng.random::<f64>() < label_model.flip_prob {
            label = -label;
        }
        examples.push(SparseExample {
            indices: support,
            values,
            label,
        });
    }
    SparseDataset::new(examples, Some(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SparseDataset> {
        load_libsvm(s.as_bytes(), None)
    }

    #[test]
    fn small_file_counts() {
        let ds = parse("+1 1:0.6 3:0.8\n-1 2:1.0").unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.col_counts(), &[1, 1, 1]);
        assert_eq!(ds.delta(), 0.5);
        assert_eq!(ds.example(0).indices(), &[0, 2]);
        assert_eq!(ds.example(1).label(), -1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse("# only a comment\n\n"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn shared_feature_gives_full_delta() {
        let text: String = (0..100)
            .map(|i| format!("{} 1:1.0 {}:0.5\n", if i % 2 == 0 { 1 } else { -1 }, i + 2))
            .collect();
        let ds = parse(&text).unwrap();
        assert_eq!(ds.col_counts()[0], 100);
        assert_eq!(ds.delta(), 1.0);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        match parse("+1 1:1\n+1 2-3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("+1 3:1 2:1\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("not increasing"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("+1 0:1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("+1 1:0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("+1 1:1 1:2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn label_sets() {
        let ds = parse("0 1:1\n1 1:1\n").unwrap();
        assert_eq!(ds.example(0).label(), -1.0);
        assert_eq!(ds.example(1).label(), 1.0);
        let ds = parse("1 1:1\n2 1:1\n").unwrap();
        assert_eq!(ds.example(0).label(), -1.0);
        assert_eq!(ds.example(1).label(), 1.0);
        assert!(matches!(parse("3 1:1\n1 1:1\n"), Err(Error::LabelSet(_))));
        assert!(matches!(parse("0 1:1\n2 1:1\n"), Err(Error::LabelSet(_))));
    }

    #[test]
    fn dim_override() {
        let ds = load_libsvm("+1 2:1\n".as_bytes(), Some(5)).unwrap();
        assert_eq!(ds.dim(), 5);
        assert_eq!(ds.empty_columns(), vec![0, 2, 3, 4]);
        assert!(load_libsvm("+1 7:1\n".as_bytes(), Some(5)).is_err());
    }

    #[test]
    fn comments_are_skipped() {
        let ds = parse("# header\n+1 1:2 # trailing\n\n-1 2:1\n").unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.example(0).values(), &[2.0]);
    }

    #[test]
    fn normalize_three_four() {
        let ds = parse("+1 1:3 2:4\n").unwrap().normalize_rows().unwrap();
        let v = ds.example(0).values();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_rows() {
        let ds = parse("+1 1:0.6 2:0.8\n-1 3:1\n").unwrap();
        let before = ds.clone();
        let after = ds.normalize_rows().unwrap();
        for (a, b) in before.examples().iter().zip(after.examples()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 1e-15);
            }
            assert_eq!(a.indices(), b.indices());
            assert_eq!(a.label(), b.label());
        }
        assert_eq!(before.col_counts(), after.col_counts());
        assert_eq!(before.delta(), after.delta());
    }

    #[test]
    fn empty_row_cannot_be_normalized() {
        let ds = parse("+1 1:1\n-1\n").unwrap();
        assert!(matches!(
            ds.normalize_rows(),
            Err(Error::ZeroNormRow { index: 1 })
        ));
    }

    #[test]
    fn diagonal_and_dense_delta() {
        let diag: Vec<SparseExample> = (0..6)
            .map(|i| SparseExample::new(vec![i], vec![1.0], 1.0).unwrap())
            .collect();
        assert_eq!(SparseDataset::new(diag, None).unwrap().delta(), 1.0 / 6.0);
        let dense: Vec<SparseExample> = (0..4)
            .map(|_| SparseExample::new(vec![0, 1, 2], vec![1.0, 2.0, 3.0], -1.0).unwrap())
            .collect();
        assert_eq!(SparseDataset::new(dense, None).unwrap().delta(), 1.0);
    }

    #[test]
    fn synthetic_permutation_support() {
        let spec = SyntheticSpec {
            n: 8,
            d: 8,
            nnz_per_row: 1,
            label_model: LabelModel::default(),
            seed: 7,
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!(ds.col_counts(), &[1; 8]);
        assert_eq!(ds.delta(), 1.0 / 8.0);
    }

    #[test]
    fn synthetic_full_rows_and_determinism() {
        let spec = SyntheticSpec {
            n: 4,
            d: 2,
            nnz_per_row: 2,
            label_model: LabelModel::default(),
            seed: 1,
        };
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.delta(), 1.0);
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        for e in a.examples() {
            assert!((e.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn synthetic_rejects_bad_sizes() {
        let mut spec = SyntheticSpec {
            n: 4,
            d: 2,
            nnz_per_row: 3,
            label_model: LabelModel::default(),
            seed: 1,
        };
        assert!(generate_synthetic(&spec).is_err());
        spec.nnz_per_row = 0;
        assert!(generate_synthetic(&spec).is_err());
        spec.nnz_per_row = 1;
        spec.n = 0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn synthetic_sparse_delta_is_small() {
        let spec = SyntheticSpec {
            n: 2000,
            d: 2000,
            nnz_per_row: 10,
            label_model: LabelModel::default(),
            seed: 3,
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert!(ds.delta() <= 0.01, "delta = {}", ds.delta());
        assert_eq!(ds.col_counts().iter().sum::<usize>(), ds.total_nnz());
    }
}

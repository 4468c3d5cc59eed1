//! l2-regularized logistic regression as a finite sum with a support-split
//! regularizer:
//!
//! ```text
//! f_i(x) = log(1 + exp(y_i z_i.x)) + n lambda * sum_{j in e_i} x_j^2 / d_j
//! f(x)   = (1/n) sum_i f_i(x)
//! ```
//!
//! The exponent is `+y_i z_i.x` (the sign used by the synthetic generator).
//! The factor `n` makes the average of the split regularizer equal to
//! `lambda * |x|^2` on every feature that occurs in the data, so `f` is
//! `2 lambda`-strongly convex on those coordinates and each `f_i` depends on
//! `x_{e_i}` only.

use crate::dataset::SparseDataset;
use crate::error::{Error, Result};

/// Number of examples per partial sum in [`Problem::gradient_sum`]. Fixed so
/// that the reduction order never depends on the number of threads.
pub const GRADIENT_BLOCK: usize = 64;

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Support-restricted gradient of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGradient<'a> {
    pub support: &'a [usize],
    pub values: Vec<f64>,
}

impl ComponentGradient<'_> {
    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (&j, &g) in self.support.iter().zip(&self.values) {
            out[j] = g;
        }
        out
    }
}

/// Which components a Bregman divergence is taken over.
#[derive(Debug, Clone, Copy)]
pub enum Components<'a> {
    All,
    Subset(&'a [usize]),
}

#[derive(Debug, Clone)]
pub struct Problem {
    data: SparseDataset,
    lambda: f64,
    smoothness: f64,
    strong_convexity: f64,
    /// `2 n lambda / d_j`, zero for empty columns.
    reg_coef: Vec<f64>,
}

impl Problem {
    /// Uses the default smoothness bound
    /// `0.25 * max_i |z_i|^2 + 2 n lambda * max_{j: d_j > 0} 1/d_j`.
    pub fn new(data: SparseDataset, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let scale = 2.0 * lambda * data.n() as f64;
        let reg_coef: Vec<f64> = data
            .col_counts()
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { scale / c as f64 })
            .collect();
        let max_row_sq = data
            .examples()
            .iter()
            .map(|e| e.values().iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        let max_reg = reg_coef.iter().copied().fold(0.0, f64::max);
        let smoothness = 0.25 * max_row_sq + max_reg;
        Ok(Problem {
            data,
            lambda,
            smoothness,
            strong_convexity: 2.0 * lambda,
            reg_coef,
        })
    }

    /// Overrides the smoothness constant (e.g. with the customary 0.25).
    pub fn with_smoothness(mut self, l: f64) -> Result<Self> {
        if !(l >= self.strong_convexity && l.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothness {l} must be finite and at least the strong convexity {}",
                self.strong_convexity
            )));
        }
        self.smoothness = l;
        Ok(self)
    }

    #[inline]
    pub fn data(&self) -> &SparseDataset {
        &self.data
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.n()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Regularization weight.
    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Smoothness constant `L`.
    #[inline]
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    /// Strong convexity modulus, `2 lambda`.
    #[inline]
    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    #[inline]
    pub fn support(&self, i: usize) -> &[usize] {
        self.data.example(i).indices()
    }

    /// `f_i` evaluated from the values of `x` on `e_i`.
    pub fn component_loss_on_support(&self, i: usize, xs: &[f64]) -> f64 {
        let e = self.data.example(i);
        debug_assert_eq!(xs.len(), e.nnz());
        let mut margin = 0.0;
        let mut reg = 0.0;
        for ((&j, &z), &xj) in e.indices().iter().zip(e.values()).zip(xs) {
            margin += z * xj;
            reg += self.reg_coef[j] * xj * xj;
        }
        softplus(e.label() * margin) + 0.5 * reg
    }

    /// Writes `grad f_i` on `e_i` into `out`, given the values of `x` on `e_i`.
    /// This is the kernel every solver uses.
    #[inline]
    pub fn component_gradient_on_support(&self, i: usize, xs: &[f64], out: &mut [f64]) {
        let e = self.data.example(i);
        debug_assert_eq!(xs.len(), e.nnz());
        debug_assert_eq!(out.len(), e.nnz());
        let y = e.label();
        let margin: f64 = e.values().iter().zip(xs).map(|(z, x)| z * x).sum();
        let scale = sigmoid(y * margin) * y;
        for (((o, &j), &z), &xj) in out.iter_mut().zip(e.indices()).zip(e.values()).zip(xs) {
            *o = scale * z + self.reg_coef[j] * xj;
        }
    }

    pub fn gather(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.support(i).iter().map(|&j| x[j]).collect()
    }

    pub fn component_loss(&self, i: usize, x: &[f64]) -> f64 {
        self.component_loss_on_support(i, &self.gather(i, x))
    }

    pub fn component_gradient(&self, i: usize, x: &[f64]) -> ComponentGradient<'_> {
        let xs = self.gather(i, x);
        let mut values = vec![0.0; xs.len()];
        self.component_gradient_on_support(i, &xs, &mut values);
        ComponentGradient {
            support: self.support(i),
            values,
        }
    }

    pub fn full_objective(&self, x: &[f64]) -> f64 {
        let mut acc = Neumaier::default();
        for i in 0..self.n() {
            acc.add(self.component_loss(i, x));
        }
        acc.sum() / self.n() as f64
    }

    /// Sum of `grad f_i(x)` over `members`, reduced in fixed blocks of
    /// [`GRADIENT_BLOCK`] members.
    pub fn gradient_sum(&self, members: &[usize], x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.dim()];
        for block in members.chunks(GRADIENT_BLOCK) {
            let partial = self.block_gradient_sum(block, x);
            add_assign(&mut total, &partial);
        }
        total
    }

    /// One block's contribution to [`Problem::gradient_sum`].
    pub fn block_gradient_sum(&self, block: &[usize], x: &[f64]) -> Vec<f64> {
        let mut partial = vec![0.0; self.dim()];
        let mut buf = Vec::new();
        let mut xs = Vec::new();
        for &i in block {
            let support = self.support(i);
            xs.clear();
            xs.extend(support.iter().map(|&j| x[j]));
            buf.resize(support.len(), 0.0);
            self.component_gradient_on_support(i, &xs, &mut buf);
            for (&j, &g) in support.iter().zip(&buf) {
                partial[j] += g;
            }
        }
        partial
    }

    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.n()).collect();
        let mut g = self.gradient_sum(&all, x);
        let n = self.n() as f64;
        for v in &mut g {
            *v /= n;
        }
        g
    }

    /// `D(x, y) = F(x) - F(y) - <grad F(y), x - y>` for
    /// `F = (1/n) sum_{i in components} f_i`.
    pub fn bregman(&self, components: Components<'_>, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = Neumaier::default();
        let mut term = |i: usize| {
            let xs = self.gather(i, x);
            let ys = self.gather(i, y);
            acc.add(self.component_bregman_on_support(i, &xs, &ys));
        };
        match components {
            Components::All => (0..self.n()).for_each(&mut term),
            Components::Subset(s) => s.iter().copied().for_each(&mut term),
        }
        acc.sum() / self.n() as f64
    }

    /// `f_i(a) - f_i(b) - <grad f_i(b), a - b>` from support values.
    pub fn component_bregman_on_support(&self, i: usize, a: &[f64], b: &[f64]) -> f64 {
        let mut g = vec![0.0; b.len()];
        self.component_gradient_on_support(i, b, &mut g);
        let inner: f64 = g.iter().zip(a.iter().zip(b)).map(|(g, (a, b))| g * (a - b)).sum();
        self.component_loss_on_support(i, a) - self.component_loss_on_support(i, b) - inner
    }

    /// `G = (1/n) sum_{i in S} D_{f_i}(alpha_i, x_star)`, where `anchors`
    /// yields `(i, alpha_i restricted to e_i)` for each `i` in `S`.
    pub fn lyapunov_g<'a, I>(&self, anchors: I, x_star: &[f64]) -> f64
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
    {
        let mut acc = Neumaier::default();
        for (i, alpha) in anchors {
            let xs = self.gather(i, x_star);
            acc.add(self.component_bregman_on_support(i, alpha, &xs));
        }
        acc.sum() / self.n() as f64
    }
}

#[inline]
pub(crate) fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, LabelModel, SyntheticSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, d: usize, k: usize, seed: u64) -> Problem {
        let ds = generate_synthetic(&SyntheticSpec {
            n,
            d,
            nnz_per_row: k,
            label_model: LabelModel::default(),
            seed,
        })
        .unwrap();
        Problem::new(ds, 1.0 / n as f64).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
        (0..d).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
    }

    #[test]
    fn loss_at_origin_is_log2() {
        let p = problem(5, 3, 2, 1);
        let zero = vec![0.0; 3];
        for i in 0..5 {
            assert!((p.component_loss(i, &zero) - 2f64.ln()).abs() < 1e-15);
        }
        assert!((p.full_objective(&zero) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stable_branches() {
        assert!((softplus(-50.0) - (-50f64).exp()).abs() < 1e-30);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn very_negative_margin_does_not_overflow() {
        let ds = crate::dataset::load_libsvm("+1 1:1\n".as_bytes(), None).unwrap();
        let p = Problem::new(ds, 1e-3).unwrap();
        let x = [-50.0];
        let reg = 1e-3 * 2500.0;
        let got = p.component_loss(0, &x);
        assert!((got - ((-50f64).exp() + reg)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn gradient_at_origin() {
        let p = problem(5, 3, 2, 2);
        let zero = vec![0.0; 3];
        for i in 0..5 {
            let g = p.component_gradient(i, &zero);
            let e = p.data().example(i);
            for (gv, z) in g.values.iter().zip(e.values()) {
                assert_eq!(*gv, 0.5 * e.label() * z);
            }
            let dense = g.to_dense(3);
            for (j, v) in dense.iter().enumerate() {
                if !e.indices().contains(&j) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn loss_matches_extended_precision() {
        // naive log(1 + e^u) is accurate for the moderate margins used here
        let p = problem(5, 3, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = random_point(&mut rng, 3, 3.0);
            for i in 0..5 {
                let e = p.data().example(i);
                let mut u = 0.0;
                let mut reg = 0.0;
                for (&j, &z) in e.indices().iter().zip(e.values()) {
                    u += e.label() * z * x[j];
                    reg += 5.0 * p.lambda() * x[j] * x[j] / p.data().col_counts()[j] as f64;
                }
                let direct = (1.0 + u.exp()).ln() + reg;
                assert!((p.component_loss(i, &x) - direct).abs() <= 1e-13 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn full_gradient_is_mean_of_components() {
        let p = problem(10, 6, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(&mut rng, 6, 1.0);
        let mut sum = [0.0; 6];
        for i in 0..10 {
            let g = p.component_gradient(i, &x);
            for (&j, &v) in g.support.iter().zip(&g.values) {
                sum[j] += v;
            }
        }
        let full = p.full_gradient(&x);
        for j in 0..6 {
            assert!((full[j] - sum[j] / 10.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn split_regularizer_matches_global_l2() {
        let p = problem(40, 30, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_point(&mut rng, 30, 2.0);
        let mut split = 0.0;
        for i in 0..40 {
            for &j in p.support(i) {
                split += 40.0 * p.lambda() * x[j] * x[j] / p.data().col_counts()[j] as f64;
            }
        }
        let global: f64 = (0..30)
            .filter(|&j| p.data().col_counts()[j] > 0)
            .map(|j| 40.0 * p.lambda() * x[j] * x[j])
            .sum();
        assert!((split - global).abs() <= 1e-12 * global.max(1.0));
    }

    #[test]
    fn default_constants() {
        let p = problem(50, 20, 5, 6);
        assert_eq!(p.strong_convexity(), 2.0 * p.lambda());
        let min_count = *p.data().col_counts().iter().filter(|&&c| c > 0).min().unwrap();
        let bound = 0.25 + 2.0 * 50.0 * p.lambda() / min_count as f64;
        assert!(p.smoothness() <= bound + 1e-15);
        assert!(p.smoothness() >= p.strong_convexity());
        assert!(p.clone().with_smoothness(0.25).is_ok());
        assert!(p.with_smoothness(0.0).is_err());
    }

    #[test]
    fn bregman_basics() {
        let p = problem(12, 8, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_point(&mut rng, 8, 1.0);
        let y = random_point(&mut rng, 8, 1.0);
        assert_eq!(p.bregman(Components::All, &x, &x), 0.0);
        let s: Vec<usize> = (0..12).filter(|i| i % 3 == 0).collect();
        let sc: Vec<usize> = (0..12).filter(|i| i % 3 != 0).collect();
        let total = p.bregman(Components::All, &x, &y);
        let split = p.bregman(Components::Subset(&s), &x, &y) + p.bregman(Components::Subset(&sc), &x, &y);
        assert!((total - split).abs() <= 1e-14);
    }

    #[test]
    fn lyapunov_g_edge_cases() {
        let p = problem(6, 4, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x_star = random_point(&mut rng, 4, 1.0);
        assert_eq!(p.lyapunov_g(std::iter::empty(), &x_star), 0.0);
        let at_star: Vec<Vec<f64>> = (0..6).map(|i| p.gather(i, &x_star)).collect();
        let g = p.lyapunov_g(at_star.iter().enumerate().map(|(i, a)| (i, a.as_slice())), &x_star);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn lyapunov_g_matches_bregman_sum() {
        let p = problem(6, 4, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x_star = random_point(&mut rng, 4, 1.0);
        let alphas: Vec<Vec<f64>> = (0..6).map(|_| random_point(&mut rng, 4, 1.0)).collect();
        let s = [0usize, 2, 3, 5];
        let restricted: Vec<(usize, Vec<f64>)> = s.iter().map(|&i| (i, p.gather(i, &alphas[i]))).collect();
        let g = p.lyapunov_g(restricted.iter().map(|(i, a)| (*i, a.as_slice())), &x_star);
        let mut brute = 0.0;
        for &i in &s {
            let gi = p.component_gradient(i, &x_star).to_dense(4);
            let inner: f64 = (0..4).map(|j| gi[j] * (alphas[i][j] - x_star[j])).sum();
            brute += p.component_loss(i, &alphas[i]) - p.component_loss(i, &x_star) - inner;
        }
        brute /= 6.0;
        assert!((g - brute).abs() <= 1e-15, "{g} vs {brute}");
        assert!(g >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bregman_is_nonnegative(seed in 0u64..1000) {
            let p = problem(15, 10, 3, seed % 7);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&mut rng, 10, 3.0);
            let y = random_point(&mut rng, 10, 3.0);
            prop_assert!(p.bregman(Components::All, &x, &y) >= -1e-12);
        }

        #[test]
        fn strong_convexity_witness(seed in 0u64..1000) {
            let p = problem(15, 10, 3, seed % 5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&mut rng, 10, 3.0);
            let y = random_point(&mut rng, 10, 3.0);
            // all columns are occupied in these instances
            prop_assume!(p.data().empty_columns().is_empty());
            let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let lhs = p.bregman(Components::All, &x, &y);
            prop_assert!(lhs >= (p.strong_convexity() / 2.0 - 1e-9) * dist2);
        }
    }
}

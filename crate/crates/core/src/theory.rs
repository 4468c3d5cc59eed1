//! Convergence-rate certificates for the synchronous and asynchronous
//! schedules, the parameter recipes that make them feasible, and a fitted
//! empirical rate to compare runs against.
//!
//! `lambda` here is always the strong-convexity modulus of `f` (for the
//! logistic objective that is `2 * regularization weight`).
//!
//! Powers `(1 - 1/kappa)^m` are evaluated in the log domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::ConvergenceTrace;

/// Target contraction used when a recipe has to choose `m` itself.
pub const DEFAULT_TARGET_THETA: f64 = 0.5;

/// Suboptimality values at or below this end an empirical-rate fit.
pub const RATE_FLOOR: f64 = 1e-15;

const FIXED_POINT_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    Thm1,
    Thm2,
    Thm3,
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" | "1" => Ok(Theorem::Thm1),
            "thm2" | "2" => Ok(Theorem::Thm2),
            "thm3" | "3" => Ok(Theorem::Thm3),
            other => Err(Error::InvalidArgument(format!("unknown theorem {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    #[serde(rename = "L")]
    pub l: f64,
    /// Strong-convexity modulus.
    pub lambda: f64,
    pub n: f64,
    pub m: f64,
    pub eta: f64,
    pub kappa: f64,
    pub beta: f64,
    pub c: f64,
    pub delta: f64,
    pub tau: f64,
}

impl CertificateInputs {
    fn validate(&self, theorem: Theorem) -> Result<()> {
        let positive = [
            ("L", self.l),
            ("lambda", self.lambda),
            ("n", self.n),
            ("m", self.m),
            ("eta", self.eta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.delta >= 0.0 && self.tau >= 0.0) {
            return Err(Error::InvalidArgument("delta and tau must be non-negative".into()));
        }
        if theorem != Theorem::Thm2 {
            if !(self.kappa > 1.0) {
                return Err(Error::InvalidArgument(format!("kappa must exceed 1, got {}", self.kappa)));
            }
            if !(self.beta > 0.0 && self.c > 0.0) {
                return Err(Error::InvalidArgument("beta and c must be positive".into()));
            }
        }
        Ok(())
    }

    /// `ln(1 - 1/kappa)`.
    fn log_q(&self) -> f64 {
        (-1.0 / self.kappa).ln_1p()
    }

    /// `(1 - 1/kappa)^m`.
    pub fn q_pow_m(&self) -> f64 {
        (self.m * self.log_q()).exp()
    }
}

/// Named feasibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `1/kappa + ... <= 1/n`.
    StepCondition,
    GammaPositive,
    ThetaPositive,
    ThetaBelowOne,
    /// `2 L^2 Delta eta^2 tau^2 < 1` and positive denominator of `theta_s`.
    StalenessDenominator,
    /// `eta^2 <= (1 - 1/kappa)^(m-1) / (12 L^2 Delta tau^2)`.
    EtaSquaredBound,
}

impl Condition {
    pub fn describe(&self) -> &'static str {
        match self {
            Condition::StepCondition => "1/kappa + step-size term <= 1/n",
            Condition::GammaPositive => "gamma > 0",
            Condition::ThetaPositive => "theta > 0",
            Condition::ThetaBelowOne => "theta < 1",
            Condition::StalenessDenominator => "staleness denominator positive",
            Condition::EtaSquaredBound => "eta-squared bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub theorem: Theorem,
    pub inputs: CertificateInputs,
    /// `gamma` (thm1) or `gamma_a` (thm3).
    pub gamma: Option<f64>,
    /// `theta`, `theta_s` or `theta_a`.
    pub theta: f64,
    /// `theta (1 + 1/gamma)`, the rate on suboptimality alone.
    pub theta_bar: Option<f64>,
    pub zeta: Option<f64>,
    pub feasible: bool,
    pub violated: Vec<Condition>,
}

impl RateCertificate {
    fn finish(theorem: Theorem, inputs: CertificateInputs, gamma: Option<f64>, theta: f64, zeta: Option<f64>, mut violated: Vec<Condition>) -> Self {
        if let Some(g) = gamma {
            if !(g > 0.0) {
                violated.push(Condition::GammaPositive);
            }
        }
        if !(theta < 1.0) {
            violated.push(Condition::ThetaBelowOne);
        }
        if theorem == Theorem::Thm2 && !(theta > 0.0) {
            violated.push(Condition::ThetaPositive);
        }
        RateCertificate {
            theorem,
            inputs,
            gamma,
            theta,
            theta_bar: gamma.map(|g| theta * (1.0 + 1.0 / g)),
            zeta,
            feasible: violated.is_empty(),
            violated,
        }
    }

    /// True when the suboptimality-only rate `theta_bar` is also below 1.
    pub fn suboptimality_rate_holds(&self) -> bool {
        self.feasible && self.theta_bar.is_none_or(|t| t < 1.0)
    }
}

/// Synchronous hybrid schedule.
pub fn certificate_thm1(inp: &CertificateInputs) -> Result<RateCertificate> {
    inp.validate(Theorem::Thm1)?;
    let CertificateInputs {
        l, lambda, n, eta, kappa, beta, c, ..
    } = *inp;
    let qm = inp.q_pow_m();
    let geo = kappa * -(inp.m * inp.log_q()).exp_m1();
    let gamma = geo * (2.0 * c * eta * (1.0 - l * eta * (1.0 + beta)) - 1.0 / n - 2.0 * c / (kappa * lambda));
    let first = 2.0 * c / (gamma * lambda) * qm + 2.0 * l * c * eta * eta / gamma * (1.0 + 1.0 / beta) * geo;
    let theta = first.max(qm);
    let mut violated = Vec::new();
    if !(1.0 / kappa + 2.0 * l * c * eta * eta * (1.0 + 1.0 / beta) <= 1.0 / n) {
        violated.push(Condition::StepCondition);
    }
    Ok(RateCertificate::finish(Theorem::Thm1, *inp, Some(gamma), theta, None, violated))
}

/// `4 L (eta + L Delta tau^2 eta^2) / (1 - 2 L^2 Delta eta^2 tau^2)`, or
/// `None` when the denominator is not positive.
fn thm2_a(l: f64, eta: f64, delta: f64, tau: f64) -> Option<f64> {
    let den = 1.0 - 2.0 * l * l * delta * eta * eta * tau * tau;
    (den > 0.0).then(|| 4.0 * l * (eta + l * delta * tau * tau * eta * eta) / den)
}

/// Asynchronous SVRG with uniform pick probabilities.
pub fn certificate_thm2(inp: &CertificateInputs) -> Result<RateCertificate> {
    inp.validate(Theorem::Thm2)?;
    let CertificateInputs {
        l, lambda, m, eta, delta, tau, ..
    } = *inp;
    let Some(a) = thm2_a(l, eta, delta, tau) else {
        return Ok(RateCertificate::finish(
            Theorem::Thm2,
            *inp,
            None,
            f64::INFINITY,
            None,
            vec![Condition::StalenessDenominator],
        ));
    };
    let theta = (1.0 / (lambda * eta * m) + a) / (1.0 - a);
    let mut violated = Vec::new();
    if !(1.0 - a > 0.0) {
        violated.push(Condition::StalenessDenominator);
    }
    Ok(RateCertificate::finish(Theorem::Thm2, *inp, None, theta, None, violated))
}

/// Asynchronous hybrid schedule.
pub fn certificate_thm3(inp: &CertificateInputs) -> Result<RateCertificate> {
    inp.validate(Theorem::Thm3)?;
    let CertificateInputs {
        l,
        lambda,
        n,
        m,
        eta,
        kappa,
        beta,
        c,
        delta,
        tau,
    } = *inp;
    let lq = inp.log_q();
    let qm = inp.q_pow_m();
    let q_neg_tau = (-tau * lq).exp();
    let geo = kappa * -(m * lq).exp_m1();
    let zeta = c * eta * eta + q_neg_tau * c * l * delta * tau * tau * eta * eta * eta;
    let stale = 96.0 * zeta * l * tau / n * q_neg_tau;
    let gamma = geo * (2.0 * c * eta - 8.0 * zeta * l * (1.0 + beta) - 2.0 * c / (kappa * lambda) - stale - 1.0 / n);
    let first = 2.0 * c / (gamma * lambda) * qm + 8.0 * zeta * l * (1.0 + 1.0 / beta) / gamma * geo;
    let theta = first.max(qm);
    let mut violated = Vec::new();
    if !(1.0 / kappa + 8.0 * zeta * l * (1.0 + 1.0 / beta) + stale <= 1.0 / n) {
        violated.push(Condition::StepCondition);
    }
    let stale_den = 12.0 * l * l * delta * tau * tau;
    if stale_den > 0.0 && !(eta * eta <= ((m - 1.0) * lq).exp() / stale_den) {
        violated.push(Condition::EtaSquaredBound);
    }
    Ok(RateCertificate::finish(Theorem::Thm3, *inp, Some(gamma), theta, Some(zeta), violated))
}

pub fn certificate(theorem: Theorem, inp: &CertificateInputs) -> Result<RateCertificate> {
    match theorem {
        Theorem::Thm1 => certificate_thm1(inp),
        Theorem::Thm2 => certificate_thm2(inp),
        Theorem::Thm3 => certificate_thm3(inp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Thm1,
    Thm3,
}

impl Regime {
    pub fn theorem(self) -> Theorem {
        match self {
            Regime::Thm1 => Theorem::Thm1,
            Regime::Thm3 => Theorem::Thm3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub regime: Regime,
    pub inputs: CertificateInputs,
    pub certificate: RateCertificate,
    pub warnings: Vec<String>,
}

/// Synchronous recipe: `eta = 1/(16(lambda n + L))`, `kappa = 4/(lambda eta)`,
/// `beta = (2 lambda n + L)/L`, `c = 2/(eta n)`.
fn thm1_inputs(l: f64, lambda: f64, n: f64, m: f64) -> CertificateInputs {
    let eta = 1.0 / (16.0 * (lambda * n + l));
    CertificateInputs {
        l,
        lambda,
        n,
        m,
        eta,
        kappa: 4.0 / (lambda * eta),
        beta: (2.0 * lambda * n + l) / l,
        c: 2.0 / (eta * n),
        delta: 0.0,
        tau: 0.0,
    }
}

/// Solves `eta = (1 - lambda eta / 4)^m / (64 (lambda n + L))`, the joint
/// definition of `eta` and `kappa = 4/(lambda eta)` in the asynchronous
/// recipe, starting from the synchronous value.
pub fn thm3_step_fixed_point(l: f64, lambda: f64, n: f64, m: f64) -> Result<f64> {
    let scale = 1.0 / (64.0 * (lambda * n + l));
    let g = |eta: f64| (m * (-lambda * eta / 4.0).ln_1p()).exp() * scale;
    let dg = |eta: f64| -m * lambda / 4.0 * ((m - 1.0) * (-lambda * eta / 4.0).ln_1p()).exp() * scale;
    let mut eta = scale;
    for _ in 0..FIXED_POINT_ITERS {
        // damping 1/(1+|g'|) makes this a Newton step on eta - g(eta)
        let omega = 1.0 / (1.0 + dg(eta).abs());
        let next = eta + omega * (g(eta) - eta);
        if !(next > 0.0 && next.is_finite()) {
            return Err(Error::FixedPoint(FIXED_POINT_ITERS));
        }
        if (next - eta).abs() <= 1e-15 * eta {
            return Ok(next);
        }
        eta = next;
    }
    Err(Error::FixedPoint(FIXED_POINT_ITERS))
}

fn thm3_inputs(l: f64, lambda: f64, n: f64, m: f64, tau: f64, delta: f64) -> Result<CertificateInputs> {
    let eta = thm3_step_fixed_point(l, lambda, n, m)?;
    Ok(CertificateInputs {
        l,
        lambda,
        n,
        m,
        eta,
        kappa: 4.0 / (lambda * eta),
        beta: (2.0 * lambda * n + l) / l,
        c: 2.0 / (eta * n),
        delta,
        tau,
    })
}

/// Recipe parameters for a fixed epoch size, without checking feasibility.
pub fn recipe_inputs(regime: Regime, l: f64, lambda: f64, n: usize, m: u64, tau: u64, delta: f64) -> Result<CertificateInputs> {
    if !(l > 0.0 && lambda > 0.0 && n > 0 && m > 0) {
        return Err(Error::InvalidArgument("L, lambda, n and m must be positive".into()));
    }
    match regime {
        Regime::Thm1 => Ok(thm1_inputs(l, lambda, n as f64, m as f64)),
        Regime::Thm3 => thm3_inputs(l, lambda, n as f64, m as f64, tau as f64, delta),
    }
}

/// Parameters from the published recipes. When `m` is `None` the smallest
/// epoch size whose certificate is feasible with
/// `theta <= DEFAULT_TARGET_THETA` is searched for (for `Thm3` only sizes
/// `m > n` are considered).
pub fn recipe_parameters(
    regime: Regime,
    l: f64,
    lambda: f64,
    n: usize,
    m: Option<u64>,
    tau: u64,
    delta: f64,
) -> Result<Recipe> {
    let mut warnings = Vec::new();
    if regime == Regime::Thm3 {
        if delta.sqrt() * tau as f64 >= 1.0 {
            warnings.push(format!(
                "sqrt(delta) * tau = {} >= 1: outside the analyzed sparse regime",
                delta.sqrt() * tau as f64
            ));
        }
        if !(n as u64 > 9 * tau) {
            warnings.push(format!("n = {n} is not above 9 tau = {}", 9 * tau));
        }
    }
    let build = |m: u64| -> Result<(CertificateInputs, RateCertificate)> {
        let inputs = recipe_inputs(regime, l, lambda, n, m, tau, delta)?;
        let cert = match regime {
            Regime::Thm1 => certificate_thm1(&inputs)?,
            Regime::Thm3 => certificate_thm3(&inputs)?,
        };
        Ok((inputs, cert))
    };
    let good = |c: &RateCertificate| c.feasible && c.theta <= DEFAULT_TARGET_THETA;

    let (inputs, certificate) = match m {
        Some(m) => {
            if regime == Regime::Thm3 && m as usize <= n {
                warnings.push(format!("m = {m} is not above n = {n}"));
            }
            let (inputs, cert) = build(m)?;
            if !cert.feasible {
                let names: Vec<_> = cert.violated.iter().map(|c| c.describe()).collect();
                return Err(Error::Infeasible(format!("m = {m}: violates {}", names.join(", "))));
            }
            (inputs, cert)
        }
        None => {
            let lo_start = match regime {
                Regime::Thm1 => 1,
                Regime::Thm3 => n as u64 + 1,
            };
            let mut hi = lo_start;
            let mut lo = None;
            while !good(&build(hi)?.1) {
                if hi >= 1 << 50 {
                    return Err(Error::Infeasible(format!(
                        "no epoch size reaches theta <= {DEFAULT_TARGET_THETA}"
                    )));
                }
                lo = Some(hi);
                hi *= 2;
            }
            // build(lo) is not good, build(hi) is
            let mut lo = lo.unwrap_or(hi);
            while lo + 1 < hi {
                let mid = lo + (hi - lo) / 2;
                if good(&build(mid)?.1) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            build(hi)?
        }
    };
    Ok(Recipe {
        regime,
        inputs,
        certificate,
        warnings,
    })
}

/// Step size `0.1 / (2 max{1, sqrt(delta) tau} L)` used for the
/// asynchronous SVRG bound.
pub fn thm2_step(l: f64, delta: f64, tau: f64) -> f64 {
    0.1 / (2.0 * (delta.sqrt() * tau).max(1.0) * l)
}

/// Real-valued epoch size at which `theta_s` equals `theta`.
pub fn thm2_epoch_size(theta: f64, l: f64, lambda: f64, eta: f64, delta: f64, tau: f64) -> Result<f64> {
    let a = thm2_a(l, eta, delta, tau)
        .ok_or_else(|| Error::Infeasible("staleness denominator is not positive".into()))?;
    // (1/(lambda eta m) + a) / (1 - a) = theta
    let rhs = theta * (1.0 - a) - a;
    if !(rhs > 0.0) {
        return Err(Error::Infeasible(format!("theta = {theta} is not reachable with this step size")));
    }
    Ok(1.0 / (lambda * eta * rhs))
}

/// Least-squares per-epoch contraction factor of a positive sequence,
/// truncated at the first value at or below [`RATE_FLOOR`].
pub fn empirical_rate_of(values: &[f64]) -> Result<f64> {
    let logs: Vec<f64> = values
        .iter()
        .take_while(|&&v| v > RATE_FLOOR)
        .map(|v| v.ln())
        .collect();
    if logs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two values above {RATE_FLOOR}, got {}",
            logs.len()
        )));
    }
    let k = logs.len() as f64;
    let mean_x = (k - 1.0) / 2.0;
    let mean_y = logs.iter().sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in logs.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    Ok((sxy / sxx).exp())
}

/// [`empirical_rate_of`] applied to a trace's suboptimality column (with
/// the initial point first, when known).
pub fn empirical_rate(trace: &ConvergenceTrace) -> Result<f64> {
    if trace.rows.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 epochs, got {}",
            trace.rows.len()
        )));
    }
    let mut values: Vec<f64> = trace.initial_suboptimality.into_iter().collect();
    for r in &trace.rows {
        values.push(r.suboptimality.ok_or_else(|| {
            Error::InvalidArgument("trace has no suboptimality; run it against a reference optimum".into())
        })?);
    }
    empirical_rate_of(&values)
}

//! Floating-point expressions shared by the serial and asynchronous solvers.
//! Both paths go through these helpers so that a single-threaded async run
//! performs bit-for-bit the same arithmetic as the serial solver.

/// Increment applied to `x_j` for the sparse part of a step.
#[inline(always)]
pub fn correction_delta(eta: f64, grad_x: f64, grad_anchor: f64) -> f64 {
    -(eta * (grad_x - grad_anchor))
}

/// Increment applied to every `x_j` for the average-gradient part of a step.
#[inline(always)]
pub fn average_delta(eta: f64, avg: f64) -> f64 {
    -(eta * avg)
}

/// Change of a running average when one stored gradient entry is replaced.
#[inline(always)]
pub fn table_delta(new: f64, old: f64, n: f64) -> f64 {
    (new - old) / n
}

/// Value of a coordinate stored in two-bracket form: `base` holds the
/// anchor plus accumulated sparse corrections, and the average-gradient term
/// is applied implicitly for `steps` steps.
#[inline(always)]
pub fn materialize(base: f64, eta: f64, steps: u64, avg: f64) -> f64 {
    base - (eta * steps as f64) * avg
}

/// Decaying step size `eta0 * sqrt(sigma0 / (t + sigma0))`.
#[inline]
pub fn decaying_step(eta0: f64, sigma0: f64, t: u64) -> f64 {
    eta0 * (sigma0 / (t as f64 + sigma0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decaying_step_values() {
        assert_eq!(decaying_step(0.3, 100.0, 0), 0.3);
        assert!((decaying_step(0.3, 100.0, 300) - 0.15).abs() < 1e-16);
    }

    #[test]
    fn materialize_at_origin_is_base() {
        assert_eq!(materialize(1.25, 0.1, 0, 7.0), 1.25);
    }
}

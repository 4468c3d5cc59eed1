//! Rate certificates: parameter recipes for the synchronous and sparse
//! asynchronous regimes, and the epoch length asynchronous SVRG needs.
//!
//! ```text
//! cargo run --example certify
//! ```

use vrsgd::theory::{self, certificate_thm2, CertificateInputs, Regime};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 1000;
    let (l, lambda) = (1.0, 1.0 / n as f64);
    let delta = 1.0 / n as f64;

    let sync = theory::recipe_parameters(Regime::Thm1, l, lambda, n, None, 0, 0.0)?;
    println!(
        "sync:  eta = {:.3e}, m = {:.0} ({:.1} n), theta = {:.4}",
        sync.inputs.eta,
        sync.inputs.m,
        sync.inputs.m / n as f64,
        sync.certificate.theta
    );
    for tau in [0, 4, 16] {
        let r = theory::recipe_parameters(Regime::Thm3, l, lambda, n, None, tau, delta)?;
        println!(
            "async tau={tau:<2}: eta = {:.3e}, m = {:.1} n, theta_a = {:.4}, warnings {:?}",
            r.inputs.eta,
            r.inputs.m / n as f64,
            r.certificate.theta,
            r.warnings
        );
    }

    println!("\nasync svrg, theta = 0.5:");
    for tau in [0.0, 8.0, 32.0, 64.0] {
        let eta = theory::thm2_step(l, delta, tau);
        let m = theory::thm2_epoch_size(0.5, l, lambda, eta, delta, tau)?;
        let inp = CertificateInputs { l, lambda, n: n as f64, m, eta, kappa: 1.0, beta: 1.0, c: 1.0, delta, tau };
        let cert = certificate_thm2(&inp)?;
        println!("  tau = {tau:>4}: m/n = {:>7.2}, theta_s = {:.4}", m / n as f64, cert.theta);
    }

    let bad = CertificateInputs { eta: 0.5, ..sync.inputs };
    let cert = theory::certificate_thm1(&bad)?;
    let why: Vec<_> = cert.violated.iter().map(|c| c.describe()).collect();
    println!("\nlarge step: feasible = {}, violated {why:?}", cert.feasible);
    Ok(())
}

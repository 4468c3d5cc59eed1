mod common;

use common::{conditioned, problem};
use vrsgd::harness::{reference_optimum, run_baseline_sgd, Baseline};
use vrsgd::objective::{norm2, Components};
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{solve, solve_observed, Control, SolverConfig};

#[test]
fn zero_epochs_returns_start_point() {
    let p = problem(30, 10, 3, 4);
    let x0: Vec<f64> = (0..10).map(|j| j as f64 * 0.1).collect();
    let cfg = SolverConfig::new(0.1 / p.smoothness(), 0, ScheduleSpec::svrg(60));
    let (x, tr) = solve(&p, &cfg, &x0).unwrap();
    assert_eq!(x, x0);
    assert!(tr.rows.is_empty());
}

#[test]
fn saga_reaches_high_accuracy() {
    let n = 200;
    let p = problem(n, 50, 5, 21);
    let r = reference_optimum(&p, 1e-12, None).unwrap();
    let eta = 1.0 / (16.0 * (p.strong_convexity() * n as f64 + p.smoothness()));
    let mut cfg = SolverConfig::new(eta, 400, ScheduleSpec::saga(n));
    cfg.seed = 3;
    let (_, tr) = solve_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |row| {
        if row.suboptimality.is_some_and(|s| s <= 1e-10) {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    let k = tr.epochs_to(1e-10);
    println!("saga n={n}: suboptimality 1e-10 after {k:?} epochs");
    assert!(k.is_some());
}

#[test]
fn reference_point_is_stationary() {
    let p = problem(120, 40, 4, 5);
    let r = reference_optimum(&p, 1e-12, None).unwrap();
    assert!(norm2(&p.full_gradient(&r.x_star)) <= 1e-10);

    // at a stationary point the Bregman divergence is the suboptimality
    let x: Vec<f64> = (0..40).map(|j| ((j * 7 % 11) as f64 - 5.0) * 0.05).collect();
    let d = p.bregman(Components::All, &x, &r.x_star);
    assert!((d - (p.full_objective(&x) - r.f_star)).abs() <= 1e-9);
}

#[test]
fn constant_step_sgd_stalls_where_svrg_does_not() {
    let n = 400;
    let p = conditioned(n, 100, 5, 9);
    let r = reference_optimum(&p, 1e-12, None).unwrap();
    let target = 1e-10;

    let mut cfg = SolverConfig::new(0.1 / p.smoothness(), 60, ScheduleSpec::svrg(2 * n));
    cfg.jit = true;
    let (_, svrg) = solve_observed(&p, &cfg, &vec![0.0; p.dim()], Some(r.as_reference()), |_| Control::Continue).unwrap();
    assert!(svrg.epochs_to(target).is_some());

    let csgd = run_baseline_sgd(&p, Baseline::Csgd, 0.1 / p.smoothness(), 0.0, 1, 1, 60, Some(r.as_reference()), None)
        .unwrap();
    let tail = csgd.rows.last().unwrap().suboptimality.unwrap();
    assert!(tail > target, "csgd reached {tail:e}");
}

mod common;

use proptest::prelude::*;

use vrsgd::dataset::{SparseDataset, SparseExample};
use vrsgd::harness::emit::{read_trace_csv, write_trace_csv};
use vrsgd::objective::Problem;
use vrsgd::schedule::ScheduleSpec;
use vrsgd::solver::{ConvergenceTrace, SerialSolver, SolverConfig, TraceRow};
use vrsgd::theory::{self, certificate_thm1, certificate_thm2, empirical_rate_of, CertificateInputs, Regime};

fn dataset() -> impl Strategy<Value = SparseDataset> {
    (2usize..12).prop_flat_map(|d| {
        let row = proptest::sample::subsequence((0..d).collect::<Vec<_>>(), 1..=d)
            .prop_flat_map(|idx| {
                let k = idx.len();
                (Just(idx), proptest::collection::vec(0.05f64..3.0, k), prop::bool::ANY)
            })
            .prop_map(|(idx, vals, pos)| SparseExample::new(idx, vals, if pos { 1.0 } else { -1.0 }).unwrap());
        proptest::collection::vec(row, 1..25).prop_map(move |ex| SparseDataset::new(ex, Some(d)).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_is_max_column_share(ds in dataset()) {
        let n = ds.n() as f64;
        let brute = (0..ds.dim())
            .map(|j| ds.examples().iter().filter(|e| e.indices().contains(&j)).count() as f64 / n)
            .fold(0.0, f64::max);
        prop_assert_eq!(ds.compute_delta(), brute);
        prop_assert!(ds.delta() > 0.0 && ds.delta() <= 1.0);
    }

    #[test]
    fn normalized_rows_have_unit_norm(ds in dataset()) {
        let once = ds.normalize_rows().unwrap();
        for e in once.examples() {
            prop_assert!((e.norm() - 1.0).abs() <= 1e-15);
        }
        let twice = once.clone().normalize_rows().unwrap();
        for (a, b) in once.examples().iter().zip(twice.examples()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn saga_average_tracks_table(ds in dataset(), seed in 0u64..1000, steps in 1u64..60) {
        let n = ds.n();
        let p = Problem::new(ds.normalize_rows().unwrap(), 1.0 / n as f64).unwrap();
        let mut cfg = SolverConfig::new(0.2 / p.smoothness(), 1, ScheduleSpec::saga(2 * n));
        cfg.seed = seed;
        let mut s = SerialSolver::new(&p, cfg, &vec![0.0; p.dim()]).unwrap();
        s.advance(steps).unwrap();
        let kept = s.state().table_avg().unwrap().to_vec();
        let fresh = s.state().recomputed_table_avg(&p).unwrap();
        for (a, b) in kept.iter().zip(&fresh) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn thm1_rate_improves_with_epoch_length(k in 1u32..6, n in 50usize..2000) {
        let (l, lambda) = (1.0, 1.0 / n as f64);
        let base = theory::recipe_parameters(Regime::Thm1, l, lambda, n, None, 0, 0.0).unwrap();
        let m0 = base.inputs.m;
        let mut prev = f64::INFINITY;
        for i in 0..k {
            let m = m0 as u64 * (1u64 << i);
            let inp = theory::recipe_inputs(Regime::Thm1, l, lambda, n, m, 0, 0.0).unwrap();
            let cert = certificate_thm1(&inp).unwrap();
            prop_assert!(cert.feasible);
            prop_assert!(cert.theta <= prev * (1.0 + 1e-12));
            prev = cert.theta;
        }
    }

    #[test]
    fn thm2_epoch_size_inverts_rate(theta in 0.3f64..0.9, tau in 0u64..20, n in 100usize..5000) {
        let (l, lambda) = (1.0, 1.0 / n as f64);
        let delta = 1.0 / n as f64;
        let eta = theory::thm2_step(l, delta, tau as f64);
        let m = theory::thm2_epoch_size(theta, l, lambda, eta, delta, tau as f64).unwrap();
        let inp = CertificateInputs { l, lambda, n: n as f64, m, eta, kappa: 1.0, beta: 1.0, c: 1.0, delta, tau: tau as f64 };
        let cert = certificate_thm2(&inp).unwrap();
        prop_assert!((cert.theta - theta).abs() <= 1e-9 * theta);
        // more staleness never helps
        let worse = CertificateInputs { tau: tau as f64 + 1.0, ..inp };
        prop_assert!(certificate_thm2(&worse).unwrap().theta >= cert.theta);
    }

    #[test]
    fn geometric_sequences_fit_exactly(r in 0.05f64..0.99, len in 3usize..30, c in 1e-3f64..1e3) {
        let v: Vec<f64> = (0..len).map(|k| c * r.powi(k as i32)).collect();
        prop_assert!((empirical_rate_of(&v).unwrap() - r).abs() <= 1e-9);
    }

    #[test]
    fn trace_csv_round_trip(rows in proptest::collection::vec(
        (any::<f64>().prop_filter("finite", |v| v.is_finite()), proptest::option::of(0.0f64..1e6), any::<u32>(), proptest::option::of(0u64..50)),
        0..20,
    )) {
        let trace = ConvergenceTrace {
            rows: rows
                .iter()
                .enumerate()
                .map(|(k, &(f, s, g, tau))| TraceRow {
                    epoch: k + 1,
                    wall_seconds: k as f64 * 0.25,
                    objective: f,
                    last_objective: f * 0.5,
                    suboptimality: s,
                    lyapunov_g: s.map(|v| v * 2.0),
                    grad_evals: g as u64,
                    max_staleness: tau,
                })
                .collect(),
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        prop_assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), trace.rows);
    }
}

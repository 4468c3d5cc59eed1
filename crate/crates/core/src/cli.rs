//! Command-line front end. Exit codes: 0 success, 1 user error, 2 numerical
//! failure (divergence, non-convergence, or an infeasible certificate under
//! `--strict`).

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{generate_synthetic, LabelModel, SyntheticSpec};
use crate::error::{Error, Result};
use crate::harness::plan::{build_problem, HsagSet};
use crate::harness::reference::{cache_key, default_cache_dir, DEFAULT_REFERENCE_TOL};
use crate::harness::{reference_optimum, run_plan, DataSource, ExperimentPlan, PlanEntry, SolverKind, SpeedupPlan, Size, Step};
use crate::parallel::LockMode;
use crate::schedule::{Frequency, ScheduleKind};
use crate::solver::PickRule;
use crate::theory::{self, CertificateInputs, Regime, Theorem};

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "vrsgd", version, about = "Variance-reduced SGD solvers, rate certificates and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serial solve; writes trace_<name>.csv, plan_resolved.json and certificate.json.
    Solve(SolveArgs),
    /// Multi-threaded solve (lock-free or locked).
    AsyncSolve(AsyncSolveArgs),
    /// Evaluate a convergence-rate certificate and print it as JSON.
    Certify(CertifyArgs),
    /// Time-to-target speedup over a thread grid; writes speedup.csv.
    Speedup(SpeedupArgs),
    /// Write a synthetic unit-normalized sparse dataset in LIBSVM format.
    GenData(GenDataArgs),
    /// Compute (or load from cache) the reference optimum x*.
    RefOpt(RefOptArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// LIBSVM data file (rows are normalized to unit norm unless --no-normalize)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    no_normalize: bool,
    /// Synthetic data instead of --data: number of examples n
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Synthetic data: number of features d
    #[arg(long, default_value_t = 200)]
    d: usize,
    /// Synthetic data: nonzeros per example
    #[arg(long, default_value_t = 5)]
    nnz: usize,
    /// Synthetic data: generator seed
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Regularization weight λ (f_i carries n λ Σ_{j∈e_i} x_j²/d_j); default 1/n
    #[arg(long)]
    lambda: Option<f64>,
    /// Smoothness constant L override
    #[arg(long = "L")]
    smoothness: Option<f64>,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        match &self.data {
            Some(path) => DataSource::File {
                path: path.clone(),
                dim: None,
                normalize: !self.no_normalize,
            },
            None => DataSource::Synthetic(SyntheticSpec {
                n: self.n,
                d: self.d,
                nnz_per_row: self.nnz,
                label_model: LabelModel::default(),
                seed: self.data_seed,
            }),
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Schedule: svrg, saga, sag, gd or hsag
    #[arg(long, default_value = "svrg")]
    schedule: ScheduleKind,
    /// Epoch size m, absolute or relative to n (e.g. 2n)
    #[arg(long, default_value = "2n")]
    m: Size,
    /// Step size η, absolute or relative to L (e.g. 0.1/L)
    #[arg(long, default_value = "0.1/L")]
    eta: Step,
    /// Number of epochs K
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// HSAG set S: a fraction of n (random subset) or a comma-separated index list
    #[arg(long = "S")]
    hsag_set: Option<String>,
    /// HSAG refresh period s_i for indices outside S (default m)
    #[arg(long = "s")]
    hsag_freq: Option<u64>,
    /// Epoch iterate selection: last, uniform, or geometric (needs --kappa)
    #[arg(long, default_value = "last")]
    pick: String,
    /// κ of the geometric pick rule, p_i ∝ (1 - 1/κ)^(m-i)
    #[arg(long)]
    kappa: Option<f64>,
    /// Just-in-time sparse updates (SVRG, or HSAG with empty S)
    #[arg(long)]
    jit: bool,
    /// Solver seeds (comma-separated); traces are averaged over seeds
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    /// Target suboptimality f(x) - f(x*) for time-to-target columns
    #[arg(long, default_value_t = 1e-10)]
    target: f64,
    /// Stop each run once the target is reached
    #[arg(long)]
    stop_at_target: bool,
    /// Tolerance on |∇f(x*)| for the reference solve
    #[arg(long, default_value_t = DEFAULT_REFERENCE_TOL)]
    ref_tol: f64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Entry name used in output file names
    #[arg(long, default_value = "run")]
    name: String,
    /// JSON plan file; replaces all other flags
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct AsyncArgs {
    /// Worker threads P
    #[arg(long, default_value_t = 4)]
    threads: usize,
    /// lock-free or locked
    #[arg(long, default_value = "lock-free")]
    mode: LockMode,
    /// Abort when measured staleness exceeds τ_cap
    #[arg(long)]
    tau_cap: Option<u64>,
    /// Drop the end-of-epoch barrier (SAGA only)
    #[arg(long)]
    no_barrier: bool,
}

#[derive(Debug, Args)]
struct AsyncSolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    parallel: AsyncArgs,
}

#[derive(Debug, Args)]
struct SpeedupArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Thread counts P (comma-separated; 1 is always included)
    #[arg(long = "threads", value_delimiter = ',', default_value = "1,2,4,8")]
    thread_grid: Vec<usize>,
    /// Modes to time (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "lock-free,locked")]
    modes: Vec<LockMode>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// Theorem: 1 (synchronous hybrid), 2 (asynchronous SVRG), 3 (asynchronous hybrid)
    #[arg(long)]
    thm: Theorem,
    /// Number of examples n
    #[arg(long)]
    n: usize,
    /// Smoothness L
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
    /// Condition number L/λ, absolute or relative to n (e.g. n); sets λ = L/cond
    #[arg(long)]
    cond: Option<Size>,
    /// Strong-convexity modulus λ (instead of --cond)
    #[arg(long)]
    lambda: Option<f64>,
    /// Epoch size m (absolute or e.g. 128n); searched for when omitted
    #[arg(long)]
    m: Option<Size>,
    /// Step size η; the recipe value when omitted
    #[arg(long)]
    eta: Option<f64>,
    /// κ (theorems 1 and 3); the recipe value when omitted
    #[arg(long)]
    kappa: Option<f64>,
    /// β (theorems 1 and 3); the recipe value when omitted
    #[arg(long)]
    beta: Option<f64>,
    /// c (theorems 1 and 3); the recipe value when omitted
    #[arg(long)]
    c: Option<f64>,
    /// Sparsity constant Δ
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Staleness bound τ
    #[arg(long, default_value_t = 0)]
    tau: u64,
    /// Exit with status 2 when the certificate is infeasible
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Nonzeros per example
    #[arg(long)]
    nnz: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Label flip probability
    #[arg(long, default_value_t = 0.1)]
    flip_prob: f64,
    /// Output file
    #[arg(long, default_value = "data.svm")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RefOptArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Tolerance on |∇f(x*)|
    #[arg(long, default_value_t = DEFAULT_REFERENCE_TOL)]
    tol: f64,
    /// Cache directory (default: $VRSGD_CACHE_DIR)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Write x* here, one value per line
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pick_rule(s: &SolverArgs) -> Result<PickRule> {
    match (s.pick.as_str(), s.kappa) {
        ("last", _) => Ok(PickRule::Last),
        ("uniform", _) => Ok(PickRule::Uniform),
        ("geometric", Some(kappa)) => Ok(PickRule::Geometric { kappa }),
        ("geometric", None) => Err(Error::InvalidArgument("--pick geometric needs --kappa".into())),
        (other, _) => Err(Error::InvalidArgument(format!("unknown pick rule {other:?}"))),
    }
}

fn hsag_set(s: &str) -> Result<HsagSet> {
    if s.contains(',') || !s.contains('.') {
        if let Ok(v) = s.split(',').filter(|t| !t.is_empty()).map(str::parse).collect::<std::result::Result<Vec<usize>, _>>() {
            // a lone "0" or "1" reads as a fraction
            if !(v.len() == 1 && (s == "0" || s == "1")) {
                return Ok(HsagSet::Indices(v));
            }
        }
    }
    s.parse()
        .map(HsagSet::Fraction)
        .map_err(|_| Error::InvalidArgument(format!("--S expects a fraction or an index list, got {s:?}")))
}

fn entry(s: &SolverArgs, solver: SolverKind) -> Result<PlanEntry> {
    let mut e = PlanEntry::new(s.name.clone(), solver, s.schedule);
    e.m = Some(s.m);
    e.eta = Some(s.eta);
    e.epochs = s.epochs;
    e.hsag_set = s.hsag_set.as_deref().map(hsag_set).transpose()?;
    e.hsag_freq = s.hsag_freq.map(Frequency::Every);
    e.pick = Some(pick_rule(s)?);
    e.jit = s.jit;
    e.stop_at_target = s.stop_at_target;
    Ok(e)
}

fn plan(d: &DataArgs, s: &SolverArgs, e: PlanEntry) -> Result<ExperimentPlan> {
    if let Some(path) = &s.plan {
        return ExperimentPlan::from_json_file(path);
    }
    let mut p = ExperimentPlan::new(d.source(), s.out.clone());
    p.lambda = d.lambda;
    p.smoothness = d.smoothness;
    p.target_accuracy = s.target;
    p.reference_tol = s.ref_tol;
    p.seeds = s.seeds.clone();
    p.entries.push(e);
    Ok(p)
}

fn apply_async(e: &mut PlanEntry, a: &AsyncArgs) {
    e.threads = a.threads;
    e.mode = a.mode;
    e.tau_cap = a.tau_cap;
    e.barrier = !a.no_barrier;
}

fn report(plan: &ExperimentPlan) -> Result<()> {
    let r = run_plan(plan)?;
    for w in &r.resolved.warnings {
        eprintln!("WARN {w}");
    }
    let entries: Vec<_> = r
        .resolved
        .entries
        .iter()
        .map(|e| {
            json!({
                "entry": e.entry.name,
                "epochs_to_target": e.epochs_to_target,
                "seconds_to_target": e.seconds_to_target,
                "final_suboptimality": e.final_suboptimality,
                "max_staleness": e.max_staleness,
            })
        })
        .collect();
    let summary = json!({
        "output_dir": plan.output_dir,
        "problem": r.resolved.problem,
        "f_star": r.resolved.reference.f_star,
        "entries": entries,
        "speedup": r.speedup,
    });
    out!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn certify(a: &CertifyArgs) -> Result<bool> {
    let n = a.n;
    let lambda = match (a.lambda, a.cond) {
        (Some(l), None) => l,
        (None, Some(c)) => a.l / c.resolve(n) as f64,
        (None, None) => a.l / n as f64,
        (Some(_), Some(_)) => return Err(Error::InvalidArgument("give either --lambda or --cond".into())),
    };
    let m = a.m.map(|m| m.resolve(n) as u64);
    let mut warnings = Vec::new();
    let mut inputs = match a.thm {
        Theorem::Thm2 => {
            let eta = a.eta.unwrap_or_else(|| theory::thm2_step(a.l, a.delta, a.tau as f64));
            let m = match m {
                Some(m) => m as f64,
                None => theory::thm2_epoch_size(theory::DEFAULT_TARGET_THETA, a.l, lambda, eta, a.delta, a.tau as f64)?.ceil(),
            };
            CertificateInputs {
                l: a.l,
                lambda,
                n: n as f64,
                m,
                eta,
                kappa: f64::NAN,
                beta: f64::NAN,
                c: f64::NAN,
                delta: a.delta,
                tau: a.tau as f64,
            }
        }
        thm => {
            let regime = if thm == Theorem::Thm1 { Regime::Thm1 } else { Regime::Thm3 };
            match m {
                Some(m) => theory::recipe_inputs(regime, a.l, lambda, n, m, a.tau, a.delta)?,
                None => {
                    let r = theory::recipe_parameters(regime, a.l, lambda, n, None, a.tau, a.delta)?;
                    warnings = r.warnings;
                    r.inputs
                }
            }
        }
    };
    if let Some(v) = a.eta {
        inputs.eta = v;
    }
    if let Some(v) = a.kappa {
        inputs.kappa = v;
    }
    if let Some(v) = a.beta {
        inputs.beta = v;
    }
    if let Some(v) = a.c {
        inputs.c = v;
    }
    let cert = theory::certificate(a.thm, &inputs)?;
    let violated: Vec<_> = cert.violated.iter().map(|c| c.describe()).collect();
    out!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "certificate": cert,
            "violated_conditions": violated,
            "warnings": warnings,
        }))?
    );
    Ok(cert.feasible)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        n: a.n,
        d: a.d,
        nnz_per_row: a.nnz,
        label_model: LabelModel { flip_prob: a.flip_prob },
        seed: a.seed,
    })?;
    let f = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    ds.write_libsvm(BufWriter::new(f)).map_err(|e| Error::io(&a.out, e))?;
    out!(
        "{}",
        json!({ "path": a.out, "n": ds.n(), "dim": ds.dim(), "nnz": ds.total_nnz(), "delta": ds.delta() })
    );
    Ok(())
}

fn ref_opt(a: &RefOptArgs) -> Result<()> {
    let mut plan = ExperimentPlan::new(a.data.source(), ".");
    plan.lambda = a.data.lambda;
    plan.smoothness = a.data.smoothness;
    let p = build_problem(&plan)?;
    let cache = a.cache_dir.clone().or_else(default_cache_dir);
    let r = reference_optimum(&p, a.tol, cache.as_deref())?;
    if let Some(path) = &a.out {
        let text: String = r.x_star.iter().map(|v| format!("{v:.16e}\n")).collect();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    out!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "f_star": r.f_star,
            "grad_norm": r.grad_norm,
            "epochs": r.epochs,
            "from_cache": r.from_cache,
            "cache_key": cache_key(&p),
            "lambda": p.lambda(),
            "n": p.n(),
            "dim": p.dim(),
        }))?
    );
    Ok(())
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Solve(a) => {
            let e = entry(&a.solver, SolverKind::Serial)?;
            report(&plan(&a.data, &a.solver, e)?)?;
        }
        Command::AsyncSolve(a) => {
            let mut e = entry(&a.solver, SolverKind::Async)?;
            apply_async(&mut e, &a.parallel);
            report(&plan(&a.data, &a.solver, e)?)?;
        }
        Command::Speedup(a) => {
            let mut e = entry(&a.solver, SolverKind::Async)?;
            e.stop_at_target = true;
            let mut p = plan(&a.data, &a.solver, e)?;
            if a.solver.plan.is_none() {
                p.speedup = Some(SpeedupPlan {
                    entry: a.solver.name.clone(),
                    threads: a.thread_grid.clone(),
                    modes: a.modes.clone(),
                });
            }
            report(&p)?;
        }
        Command::Certify(a) => {
            let feasible = certify(&a)?;
            return Ok(feasible || !a.strict);
        }
        Command::GenData(a) => gen_data(&a)?,
        Command::RefOpt(a) => ref_opt(&a)?,
    }
    Ok(true)
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: certificate is infeasible");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsag_set_forms() {
        assert_eq!(hsag_set("0.5").unwrap(), HsagSet::Fraction(0.5));
        assert_eq!(hsag_set("1").unwrap(), HsagSet::Fraction(1.0));
        assert_eq!(hsag_set("3,5,9").unwrap(), HsagSet::Indices(vec![3, 5, 9]));
        assert_eq!(hsag_set("7").unwrap(), HsagSet::Indices(vec![7]));
        assert!(hsag_set("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["vrsgd", "--bogus"]), 1);
        assert_eq!(run(["vrsgd", "certify", "--thm", "1", "--n", "1000", "--cond", "n", "--m", "10000"]), 0);
        assert_eq!(
            run(["vrsgd", "certify", "--thm", "1", "--n", "1000", "--cond", "n", "--m", "10000", "--strict"]),
            2
        );
        assert_eq!(run(["vrsgd", "certify", "--thm", "4", "--n", "10"]), 1);
        assert_eq!(run(["vrsgd", "solve", "--help"]), 0);
    }
}

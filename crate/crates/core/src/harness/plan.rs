use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{run_baseline_sgd, tune_baseline, Baseline, GridPoint, StepGrid};
use super::emit::{emit_speedup, emit_trace, write_json, Format};
use super::reference::{cache_key, default_cache_dir, reference_optimum, ReferenceOptimum, DEFAULT_REFERENCE_TOL};
use super::speedup::{measure_speedup, SpeedupTable};
use crate::dataset::{load_libsvm, SparseDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::parallel::{run_async_observed, AsyncConfig, LockMode};
use crate::schedule::{Frequency, ScheduleKind, ScheduleSpec};
use crate::solver::{solve_observed, Control, ConvergenceTrace, PickRule, SolverConfig, TraceRow};
use crate::theory::{self, CertificateInputs, Regime};

pub const DEFAULT_TARGET: f64 = 1e-10;

/// Suboptimality values below this mean the reference point is not optimal.
pub const REFERENCE_SLACK: f64 = 1e-12;

/// A count given either absolutely (`1000`) or relative to `n` (`2n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Size {
    Abs(usize),
    TimesN(f64),
}

impl Size {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Size::Abs(v) => v,
            Size::TimesN(c) => (c * n as f64).round().max(1.0) as usize,
        }
    }
}

impl std::str::FromStr for Size {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("bad size {s:?}: expected e.g. 1000, n or 2n"));
        match s.strip_suffix('n') {
            Some("") => Ok(Size::TimesN(1.0)),
            Some(c) => {
                let c: f64 = c.trim_end_matches('*').parse().map_err(|_| bad())?;
                if c > 0.0 && c.is_finite() {
                    Ok(Size::TimesN(c))
                } else {
                    Err(bad())
                }
            }
            None => s.parse().map(Size::Abs).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Size::Abs(v) => write!(f, "{v}"),
            Size::TimesN(c) => write!(f, "{c}n"),
        }
    }
}

/// A step size given absolutely (`0.05`) or relative to `L` (`0.1/L`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Abs(f64),
    OverL(f64),
}

impl Step {
    pub fn resolve(self, l: f64) -> f64 {
        match self {
            Step::Abs(v) => v,
            Step::OverL(c) => c / l,
        }
    }
}

impl std::str::FromStr for Step {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("bad step size {s:?}: expected e.g. 0.05 or 0.1/L"));
        let (c, rel) = match s.strip_suffix("/L") {
            Some(c) => (c, true),
            None => (s, false),
        };
        let c: f64 = c.parse().map_err(|_| bad())?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(bad());
        }
        Ok(if rel { Step::OverL(c) } else { Step::Abs(c) })
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Abs(v) => write!(f, "{v}"),
            Step::OverL(c) => write!(f, "{c}/L"),
        }
    }
}

macro_rules! string_serde {
    ($t:ty, $num:ty, $abs:path) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Repr {
                    Num($num),
                    Str(String),
                }
                match Repr::deserialize(d)? {
                    Repr::Num(v) => Ok($abs(v)),
                    Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
                }
            }
        }
    };
}

string_serde!(Size, usize, Size::Abs);
string_serde!(Step, f64, Step::Abs);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    File {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default = "default_true")]
        normalize: bool,
    },
    Synthetic(SyntheticSpec),
}

fn default_true() -> bool {
    true
}

impl DataSource {
    pub fn load(&self) -> Result<SparseDataset> {
        match self {
            DataSource::File { path, dim, normalize } => {
                let f = File::open(path).map_err(|e| Error::io(path, e))?;
                let ds = load_libsvm(BufReader::new(f), *dim)?;
                if *normalize {
                    ds.normalize_rows()
                } else {
                    Ok(ds)
                }
            }
            DataSource::Synthetic(spec) => crate::dataset::generate_synthetic(spec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Serial,
    Async,
    Csgd,
    Dsgd,
}

impl SolverKind {
    pub fn baseline(self) -> Option<Baseline> {
        match self {
            SolverKind::Csgd => Some(Baseline::Csgd),
            SolverKind::Dsgd => Some(Baseline::Dsgd),
            _ => None,
        }
    }
}

/// The subset `S` of an HSAG schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HsagSet {
    /// A seeded uniformly random subset of this fraction of the examples.
    Fraction(f64),
    Indices(Vec<usize>),
}

impl HsagSet {
    pub fn resolve(&self, n: usize, seed: u64) -> Result<Vec<usize>> {
        match self {
            HsagSet::Indices(v) => Ok(v.clone()),
            HsagSet::Fraction(f) => {
                if !(0.0..=1.0).contains(f) {
                    return Err(Error::InvalidArgument(format!("S fraction must be in [0, 1], got {f}")));
                }
                let k = (f * n as f64).round() as usize;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = rand::seq::index::sample(&mut rng, n, k).into_vec();
                s.sort_unstable();
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub name: String,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    /// Epoch size; `2n` when unset.
    #[serde(default)]
    pub m: Option<Size>,
    /// `0.1/L` for variance-reduced solvers when unset; baselines are
    /// grid-tuned when unset.
    #[serde(default)]
    pub eta: Option<Step>,
    /// DSGD decay offset; `n` when unset and not tuned.
    #[serde(default)]
    pub sigma0: Option<Size>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub hsag_set: Option<HsagSet>,
    #[serde(default)]
    pub hsag_freq: Option<Frequency>,
    #[serde(default)]
    pub pick: Option<PickRule>,
    #[serde(default)]
    pub jit: bool,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_mode")]
    pub mode: LockMode,
    #[serde(default)]
    pub tau_cap: Option<u64>,
    #[serde(default = "default_true")]
    pub barrier: bool,
    /// Stop a run once suboptimality reaches the plan target.
    #[serde(default)]
    pub stop_at_target: bool,
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Svrg
}

fn default_epochs() -> usize {
    50
}

fn default_threads() -> usize {
    1
}

fn default_mode() -> LockMode {
    LockMode::LockFree
}

impl PlanEntry {
    pub fn new(name: impl Into<String>, solver: SolverKind, schedule: ScheduleKind) -> Self {
        PlanEntry {
            name: name.into(),
            solver,
            schedule,
            m: None,
            eta: None,
            sigma0: None,
            epochs: default_epochs(),
            hsag_set: None,
            hsag_freq: None,
            pick: None,
            jit: false,
            threads: default_threads(),
            mode: default_mode(),
            tau_cap: None,
            barrier: true,
            stop_at_target: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupPlan {
    /// Name of a serial or async entry whose configuration is timed.
    pub entry: String,
    pub threads: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<LockMode>,
}

fn default_modes() -> Vec<LockMode> {
    vec![LockMode::LockFree, LockMode::Locked]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub data: DataSource,
    /// Regularization weight; `1/n` when unset.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Overrides the default smoothness bound.
    #[serde(default)]
    pub smoothness: Option<f64>,
    #[serde(default = "default_target")]
    pub target_accuracy: f64,
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Reference-optimum cache; the environment variable is used when unset.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub entries: Vec<PlanEntry>,
    #[serde(default)]
    pub speedup: Option<SpeedupPlan>,
    #[serde(default)]
    pub baseline_grid: StepGrid,
}

fn default_target() -> f64 {
    DEFAULT_TARGET
}

fn default_reference_tol() -> f64 {
    DEFAULT_REFERENCE_TOL
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

impl ExperimentPlan {
    pub fn new(data: DataSource, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            data,
            lambda: None,
            smoothness: None,
            target_accuracy: DEFAULT_TARGET,
            reference_tol: DEFAULT_REFERENCE_TOL,
            seeds: default_seeds(),
            output_dir: output_dir.into(),
            cache_dir: None,
            entries: Vec::new(),
            speedup: None,
            baseline_grid: StepGrid::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(f))?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_accuracy > 1e-15) {
            return Err(Error::InvalidArgument(format!(
                "target accuracy {} is below the numerical floor",
                self.target_accuracy
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("plan needs at least one seed".into()));
        }
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("plan entry names must be unique".into()));
        }
        for e in &self.entries {
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::InvalidArgument(format!(
                    "entry name {:?} must be non-empty and use only [A-Za-z0-9._-]",
                    e.name
                )));
            }
        }
        if let Some(sp) = &self.speedup {
            let e = self
                .entries
                .iter()
                .find(|e| e.name == sp.entry)
                .ok_or_else(|| Error::InvalidArgument(format!("speedup entry {:?} not in plan", sp.entry)))?;
            if e.solver.baseline().is_some() {
                return Err(Error::InvalidArgument("speedup entry must be a variance-reduced solver".into()));
            }
        }
        Ok(())
    }
}

/// Problem constants after loading the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSummary {
    pub n: usize,
    pub dim: usize,
    pub nnz: usize,
    pub lambda: f64,
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub delta: f64,
    pub empty_columns: usize,
}

impl ProblemSummary {
    pub fn of(p: &Problem) -> Self {
        ProblemSummary {
            n: p.n(),
            dim: p.dim(),
            nnz: p.data().total_nnz(),
            lambda: p.lambda(),
            strong_convexity: p.strong_convexity(),
            smoothness: p.smoothness(),
            delta: p.data().delta(),
            empty_columns: p.data().empty_columns().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub f_star: f64,
    pub grad_norm: f64,
    pub tol: f64,
    pub epochs: usize,
    pub cache_key: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEntry {
    pub entry: PlanEntry,
    /// Solver configuration for variance-reduced entries (seed varies).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    /// Baseline step-size grid results, when tuned.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<Vec<GridPoint>>,
    pub epochs_to_target: Vec<Option<usize>>,
    pub seconds_to_target: Vec<Option<f64>>,
    pub final_suboptimality: Vec<Option<f64>>,
    pub max_staleness: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPlan {
    pub plan: ExperimentPlan,
    pub problem: ProblemSummary,
    pub reference: ReferenceSummary,
    pub entries: Vec<ResolvedEntry>,
    pub timing: String,
    pub warnings: Vec<String>,
}

pub const TIMING_NOTE: &str = "wall_seconds is cumulative solver time; it includes snapshot full-gradient \
passes and excludes objective and trace evaluation";

#[derive(Debug, Clone)]
pub struct PlanReport {
    pub resolved: ResolvedPlan,
    pub traces: Vec<(String, ConvergenceTrace)>,
    pub speedup: Option<SpeedupTable>,
    pub certificate: serde_json::Value,
}

/// Builds the problem: regularization `1/n` unless the plan sets it.
pub fn build_problem(plan: &ExperimentPlan) -> Result<Problem> {
    let ds = plan.data.load()?;
    let lambda = plan.lambda.unwrap_or(1.0 / ds.n() as f64);
    let p = Problem::new(ds, lambda)?;
    match plan.smoothness {
        Some(l) => p.with_smoothness(l),
        None => Ok(p),
    }
}

/// Serial/async solver configuration for a variance-reduced entry.
pub fn solver_config(p: &Problem, e: &PlanEntry, seed: u64) -> Result<SolverConfig> {
    let n = p.n();
    let m = e.m.unwrap_or(Size::TimesN(2.0)).resolve(n);
    let eta = e.eta.unwrap_or(Step::OverL(0.1)).resolve(p.smoothness());
    let spec = match e.schedule {
        ScheduleKind::Hsag => {
            let set = match &e.hsag_set {
                Some(s) => s.resolve(n, seed)?,
                None => Vec::new(),
            };
            ScheduleSpec::hsag(m, set, e.hsag_freq.clone())
        }
        k => ScheduleSpec::new(k, m),
    };
    let mut cfg = SolverConfig::new(eta, e.epochs, spec);
    cfg.pick_rule = e.pick.unwrap_or(PickRule::Last);
    cfg.seed = seed;
    cfg.jit = e.jit;
    cfg.validate(n)?;
    Ok(cfg)
}

pub fn async_config(e: &PlanEntry, base: SolverConfig) -> AsyncConfig {
    let mut a = AsyncConfig::new(e.threads, e.mode, base);
    a.tau_cap = e.tau_cap;
    a.barrier = e.barrier;
    a
}

/// Mean of the objective columns and median of wall time over seeds,
/// truncated to the shortest run.
pub fn aggregate(traces: &[ConvergenceTrace]) -> ConvergenceTrace {
    let Some(first) = traces.first() else {
        return ConvergenceTrace::default();
    };
    if traces.len() == 1 {
        return first.clone();
    }
    let k = traces.len() as f64;
    let len = traces.iter().map(|t| t.rows.len()).min().unwrap_or(0);
    let mean = |f: &dyn Fn(&ConvergenceTrace) -> f64| traces.iter().map(f).sum::<f64>() / k;
    let mean_opt = |f: &dyn Fn(&ConvergenceTrace) -> Option<f64>| -> Option<f64> {
        traces.iter().map(f).sum::<Option<f64>>().map(|s| s / k)
    };
    let rows = (0..len)
        .map(|i| {
            let mut wall: Vec<f64> = traces.iter().map(|t| t.rows[i].wall_seconds).collect();
            wall.sort_by(f64::total_cmp);
            let mid = wall.len() / 2;
            let wall = if wall.len() % 2 == 1 { wall[mid] } else { (wall[mid - 1] + wall[mid]) / 2.0 };
            TraceRow {
                epoch: first.rows[i].epoch,
                wall_seconds: wall,
                objective: mean(&|t| t.rows[i].objective),
                last_objective: mean(&|t| t.rows[i].last_objective),
                suboptimality: mean_opt(&|t| t.rows[i].suboptimality),
                lyapunov_g: mean_opt(&|t| t.rows[i].lyapunov_g),
                grad_evals: (traces.iter().map(|t| t.rows[i].grad_evals as f64).sum::<f64>() / k).round() as u64,
                max_staleness: traces.iter().filter_map(|t| t.rows[i].max_staleness).max(),
            }
        })
        .collect();
    ConvergenceTrace {
        rows,
        initial_objective: mean(&|t| t.initial_objective),
        initial_suboptimality: mean_opt(&|t| t.initial_suboptimality),
        initial_lyapunov_g: mean_opt(&|t| t.initial_lyapunov_g),
        setup_grad_evals: first.setup_grad_evals,
        flags: first.flags.clone(),
    }
}

fn stopper(target: Option<f64>) -> impl FnMut(&TraceRow) -> Control + Send {
    move |row| match (target, row.suboptimality) {
        (Some(t), Some(s)) if s <= t => Control::Stop,
        _ => Control::Continue,
    }
}

fn run_entry(
    p: &Problem,
    plan: &ExperimentPlan,
    e: &PlanEntry,
    r: &ReferenceOptimum,
) -> Result<(ResolvedEntry, Vec<ConvergenceTrace>)> {
    let target = plan.target_accuracy;
    let stop = e.stop_at_target.then_some(target);
    let x0 = vec![0.0; p.dim()];
    let mut res = ResolvedEntry {
        entry: e.clone(),
        config: None,
        eta0: None,
        sigma0: None,
        tuning: None,
        epochs_to_target: Vec::new(),
        seconds_to_target: Vec::new(),
        final_suboptimality: Vec::new(),
        max_staleness: None,
    };
    let mut traces = Vec::new();
    if let Some(variant) = e.solver.baseline() {
        let (eta0, sigma0) = match e.eta {
            Some(step) => (step.resolve(p.smoothness()), e.sigma0.unwrap_or(Size::TimesN(1.0)).resolve(p.n()) as f64),
            None => {
                let tuned = tune_baseline(p, variant, &plan.baseline_grid, e.threads, plan.seeds[0], e.epochs, r.as_reference())?;
                res.tuning = Some(tuned.evaluated);
                (tuned.eta0, tuned.sigma0)
            }
        };
        res.eta0 = Some(eta0);
        res.sigma0 = (variant == Baseline::Dsgd).then_some(sigma0);
        for &seed in &plan.seeds {
            traces.push(run_baseline_sgd(p, variant, eta0, sigma0, e.threads, seed, e.epochs, Some(r.as_reference()), stop)?);
        }
    } else {
        for &seed in &plan.seeds {
            let cfg = solver_config(p, e, seed)?;
            let trace = match e.solver {
                SolverKind::Serial => solve_observed(p, &cfg, &x0, Some(r.as_reference()), stopper(stop))?.1,
                _ => {
                    let (_, t, st) = run_async_observed(p, &async_config(e, cfg.clone()), &x0, Some(r.as_reference()), stopper(stop))?;
                    res.max_staleness = Some(res.max_staleness.unwrap_or(0).max(st.max));
                    t
                }
            };
            if res.config.is_none() {
                res.config = Some(cfg);
            }
            traces.push(trace);
        }
    }
    for t in &traces {
        res.epochs_to_target.push(t.epochs_to(target));
        res.seconds_to_target.push(t.seconds_to(target));
        res.final_suboptimality.push(t.rows.last().and_then(|r| r.suboptimality));
    }
    Ok((res, traces))
}

/// Thm1 and thm3 recipes for the plan's problem, plus the asynchronous
/// SVRG certificate for every async SVRG entry at its measured staleness.
fn certificates(p: &Problem, entries: &[ResolvedEntry]) -> serde_json::Value {
    let l = p.smoothness();
    let mu = p.strong_convexity();
    let n = p.n();
    let delta = p.data().delta();
    let as_json = |r: Result<theory::Recipe>| match r {
        Ok(r) => serde_json::to_value(r).unwrap_or(serde_json::Value::Null),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let tau = entries.iter().filter_map(|e| e.max_staleness).max().unwrap_or(0);
    let mut async_svrg = Vec::new();
    for e in entries {
        let (Some(cfg), Some(tau)) = (&e.config, e.max_staleness) else {
            continue;
        };
        if cfg.schedule.kind != ScheduleKind::Svrg {
            continue;
        }
        let inputs = CertificateInputs {
            l,
            lambda: mu,
            n: n as f64,
            m: cfg.m() as f64,
            eta: cfg.eta,
            kappa: 2.0,
            beta: 1.0,
            c: 1.0,
            delta,
            tau: tau as f64,
        };
        let cert = theory::certificate_thm2(&inputs)
            .map(|c| serde_json::to_value(c).unwrap_or_default())
            .unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() }));
        async_svrg.push(serde_json::json!({ "entry": e.entry.name, "certificate": cert }));
    }
    serde_json::json!({
        "thm1_recipe": as_json(theory::recipe_parameters(Regime::Thm1, l, mu, n, None, 0, delta)),
        "thm3_recipe": as_json(theory::recipe_parameters(Regime::Thm3, l, mu, n, None, tau, delta)),
        "async_svrg": async_svrg,
    })
}

/// Runs every plan entry in order, then the speedup grid, and writes
/// `trace_<entry>.csv`, `speedup.csv`, `plan_resolved.json` and
/// `certificate.json` into the output directory.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanReport> {
    plan.validate()?;
    let p = build_problem(plan)?;
    let cache = plan.cache_dir.clone().or_else(default_cache_dir);
    let r = reference_optimum(&p, plan.reference_tol, cache.as_deref())?;
    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    let mut traces = Vec::new();
    for e in &plan.entries {
        let (res, runs) = run_entry(&p, plan, e, &r)?;
        let worst = runs
            .iter()
            .flat_map(|t| t.rows.iter().filter_map(|r| r.suboptimality))
            .fold(f64::INFINITY, f64::min);
        if worst < -REFERENCE_SLACK {
            warnings.push(format!("{}: suboptimality {worst:e} below zero; reference is not optimal", e.name));
        }
        entries.push(res);
        traces.push((e.name.clone(), aggregate(&runs)));
    }
    let speedup = match &plan.speedup {
        Some(sp) => {
            let e = plan.entries.iter().find(|e| e.name == sp.entry).expect("validated");
            let base = async_config(e, solver_config(&p, e, plan.seeds[0])?);
            let table = measure_speedup(&p, &base, &sp.modes, &sp.threads, &plan.seeds, plan.target_accuracy, r.as_reference())?;
            let top = |mode| {
                table
                    .rows
                    .iter()
                    .filter(|r| r.mode == mode)
                    .max_by_key(|r| r.threads)
                    .and_then(|r| r.speedup)
            };
            if let (Some(free), Some(locked)) = (top(LockMode::LockFree), top(LockMode::Locked)) {
                if free < locked {
                    warnings.push(format!(
                        "lock-free speedup {free:.3} below locked speedup {locked:.3} at the largest thread count"
                    ));
                }
            }
            Some(table)
        }
        None => None,
    };
    let certificate = certificates(&p, &entries);
    let resolved = ResolvedPlan {
        plan: plan.clone(),
        problem: ProblemSummary::of(&p),
        reference: ReferenceSummary {
            f_star: r.f_star,
            grad_norm: r.grad_norm,
            tol: plan.reference_tol,
            epochs: r.epochs,
            cache_key: cache_key(&p),
            from_cache: r.from_cache,
        },
        entries,
        timing: TIMING_NOTE.into(),
        warnings,
    };

    let out = &plan.output_dir;
    let meta = serde_json::json!({ "timing": TIMING_NOTE });
    for (name, t) in &traces {
        emit_trace(t, &meta, Format::Csv, &out.join(format!("trace_{name}.csv")))?;
    }
    if let Some(table) = &speedup {
        emit_speedup(table, &meta, Format::Csv, &out.join("speedup.csv"))?;
    }
    write_json(&resolved, &out.join("plan_resolved.json"))?;
    write_json(&certificate, &out.join("certificate.json"))?;
    Ok(PlanReport {
        resolved,
        traces,
        speedup,
        certificate,
    })
}

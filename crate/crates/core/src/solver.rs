//! Sequential variance-reduced solver.
//!
//! Each step draws `i_t`, evaluates `grad f_{i_t}` at the current iterate and
//! at its anchor, and moves along
//! `grad f_i(x) - grad f_i(alpha_i) + (1/n) sum_k grad f_k(alpha_k)`.
//! After `m` steps the iterate is replaced by `x~`, drawn from the epoch's
//! iterates according to the [`PickRule`].
//!
//! With `jit` enabled the iterate is kept in two-bracket form
//! `x = b - eta (t - t0) avg`: only the sparse corrections touch `b`, and
//! coordinates are materialized on demand. This requires the average term to
//! stay fixed between anchor refreshes, so it is only accepted for schedules
//! without a per-step gradient table.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;
use crate::objective::{norm2, Problem};
use crate::schedule::{ScheduleKind, ScheduleSpec, ScheduleState};

/// Iterates with norm above this are treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e100;

/// Stream id of the epoch-iterate selection RNG; index streams use the
/// worker id.
pub(crate) const PICK_STREAM: u64 = 1 << 63;

/// How `x~` is chosen from `{x^{km}, ..., x^{km+m-1}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum PickRule {
    /// `p_i` proportional to `(1 - 1/kappa)^(m - i)`, `i = 1..m`.
    Geometric { kappa: f64 },
    Uniform,
    /// The final iterate `x^{km+m}`. Common in practice but not covered by
    /// the rate certificates.
    Last,
}

impl PickRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PickRule::Geometric { kappa } if !(kappa > 1.0) => Err(Error::InvalidArgument(format!(
                "geometric pick needs kappa > 1, got {kappa}"
            ))),
            _ => Ok(()),
        }
    }

    /// Selection probabilities over the epoch's `m` candidate offsets, or
    /// `None` for [`PickRule::Last`].
    pub fn probabilities(&self, m: usize) -> Option<Vec<f64>> {
        match *self {
            PickRule::Last => None,
            PickRule::Uniform => Some(vec![1.0 / m as f64; m]),
            PickRule::Geometric { kappa } => {
                let lq = (-1.0 / kappa).ln_1p();
                let w: Vec<f64> = (0..m).map(|r| ((m - 1 - r) as f64 * lq).exp()).collect();
                let total: f64 = w.iter().sum();
                Some(w.into_iter().map(|v| v / total).collect())
            }
        }
    }

    /// Draws the epoch offset `r` (the pick is `x^{km+r}`), or `None` for
    /// the last iterate.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> Option<usize> {
        match *self {
            PickRule::Last => None,
            PickRule::Uniform => Some(rng.random_range(0..m)),
            PickRule::Geometric { kappa } => {
                let lq = (-1.0 / kappa).ln_1p();
                if lq == 0.0 {
                    return Some(rng.random_range(0..m));
                }
                // truncated geometric over j = m - 1 - r, inverse cdf
                let u: f64 = rng.random();
                let mass = -(m as f64 * lq).exp_m1();
                let j = ((-u * mass).ln_1p() / lq).floor();
                let j = if j.is_finite() { (j as usize).min(m - 1) } else { m - 1 };
                Some(m - 1 - j)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub epochs: usize,
    pub schedule: ScheduleSpec,
    pub pick_rule: PickRule,
    pub seed: u64,
    #[serde(default)]
    pub jit: bool,
    /// Keep anchor points for table entries so the Lyapunov term `G` can be
    /// evaluated. Costs one extra copy of the table.
    #[serde(default)]
    pub track_anchors: bool,
}

impl SolverConfig {
    pub fn new(eta: f64, epochs: usize, schedule: ScheduleSpec) -> Self {
        SolverConfig {
            eta,
            epochs,
            schedule,
            pick_rule: PickRule::Last,
            seed: 0,
            jit: false,
            track_anchors: false,
        }
    }

    pub fn m(&self) -> usize {
        self.schedule.epoch_len
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {}", self.eta)));
        }
        self.schedule.validate(n)?;
        self.pick_rule.validate()?;
        if self.jit {
            let ok = match self.schedule.kind {
                ScheduleKind::Svrg => true,
                ScheduleKind::Hsag => self.schedule.hsag_set.is_empty(),
                _ => false,
            };
            if !ok {
                return Err(Error::Unsupported(format!(
                    "just-in-time updates need a fixed average gradient between refreshes; \
                     not available for {} with a per-step table",
                    self.schedule.kind
                )));
            }
        }
        Ok(())
    }
}

/// Sampler of `i_t`, with one step of lookahead for SAG.
#[derive(Debug, Clone)]
pub struct IndexStream {
    rng: ChaCha8Rng,
    n: usize,
    peeked: Option<usize>,
}

impl IndexStream {
    pub fn new(seed: u64, stream: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        IndexStream { rng, n, peeked: None }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> usize {
        match self.peeked.take() {
            Some(i) => i,
            None => self.rng.random_range(0..self.n),
        }
    }

    pub fn peek(&mut self) -> usize {
        match self.peeked {
            Some(i) => i,
            None => {
                let i = self.rng.random_range(0..self.n);
                self.peeked = Some(i);
                i
            }
        }
    }
}

pub(crate) fn pick_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PICK_STREAM);
    rng
}

/// Two-bracket representation `x_j = base_j - eta (t - origin) avg_j`.
#[derive(Debug, Clone)]
pub struct JitState {
    pub base: Vec<f64>,
    pub origin: u64,
    pub eta: f64,
}

impl JitState {
    #[inline]
    pub fn value(&self, j: usize, t: u64, avg: f64) -> f64 {
        kernel::materialize(self.base[j], self.eta, t - self.origin, avg)
    }
}

/// Values of `x^t` on `coords`.
pub fn jit_materialize(js: &JitState, coords: &[usize], t: u64, state: &ScheduleState) -> Vec<f64> {
    coords.iter().map(|&j| js.value(j, t, state.avg(j))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Cumulative solver time, excluding trace evaluation.
    pub wall_seconds: f64,
    /// `f(x~)` for the iterate that starts the next epoch.
    pub objective: f64,
    /// `f` at the final iterate of the epoch, before replacement.
    pub last_objective: f64,
    pub suboptimality: Option<f64>,
    pub lyapunov_g: Option<f64>,
    /// Component gradient evaluations spent in this epoch.
    pub grad_evals: u64,
    pub max_staleness: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    pub initial_objective: f64,
    pub initial_suboptimality: Option<f64>,
    pub initial_lyapunov_g: Option<f64>,
    /// Gradient evaluations spent building the initial anchor table.
    pub setup_grad_evals: u64,
    pub flags: Vec<String>,
}

impl ConvergenceTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.rows.last().map(|r| r.objective)
    }

    /// First epoch whose suboptimality is at or below `tol`.
    pub fn epochs_to(&self, tol: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.suboptimality.is_some_and(|s| s <= tol)).map(|r| r.epoch)
    }

    /// Wall time of the first epoch at or below `tol`.
    pub fn seconds_to(&self, tol: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.suboptimality.is_some_and(|s| s <= tol))
            .map(|r| r.wall_seconds)
    }
}

/// Known optimum used to fill suboptimality and `G` in traces.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub x_star: &'a [f64],
    pub f_star: f64,
}

/// Returned by trace observers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct EpochResult {
    pub x_tilde: Vec<f64>,
    pub x_last: Vec<f64>,
    pub grad_evals: u64,
    pub seconds: f64,
}

/// Serial solver state between epochs.
pub struct SerialSolver<'p> {
    p: &'p Problem,
    cfg: SolverConfig,
    state: ScheduleState,
    /// Dense iterate, or the base bracket in jit mode.
    x: Vec<f64>,
    jit_origin: Option<u64>,
    t: u64,
    epoch: usize,
    idx: IndexStream,
    pick: ChaCha8Rng,
    evals: u64,
    setup_evals: u64,
    picked: Option<Vec<f64>>,
    xs: Vec<f64>,
    gx: Vec<f64>,
    ga: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'p> SerialSolver<'p> {
    pub fn new(p: &'p Problem, cfg: SolverConfig, x0: &[f64]) -> Result<Self> {
        cfg.validate(p.n())?;
        let (state, setup_evals) = ScheduleState::new(p, &cfg.schedule, x0, cfg.track_anchors)?;
        Ok(SerialSolver {
            p,
            idx: IndexStream::new(cfg.seed, 0, p.n()),
            pick: pick_rng(cfg.seed),
            jit_origin: cfg.jit.then_some(0),
            cfg,
            state,
            x: x0.to_vec(),
            t: 0,
            epoch: 0,
            evals: 0,
            setup_evals,
            picked: None,
            xs: Vec::new(),
            gx: Vec::new(),
            ga: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ScheduleState {
        &self.state
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn setup_grad_evals(&self) -> u64 {
        self.setup_evals
    }

    pub fn grad_evals(&self) -> u64 {
        self.evals
    }

    /// The two-bracket state, when running in jit mode.
    pub fn jit_state(&self) -> Option<JitState> {
        self.jit_origin.map(|origin| JitState {
            base: self.x.clone(),
            origin,
            eta: self.cfg.eta,
        })
    }

    /// Current iterate `x^t`, materialized.
    pub fn iterate(&self) -> Vec<f64> {
        match self.jit_origin {
            None => self.x.clone(),
            Some(t0) => (0..self.x.len())
                .map(|j| kernel::materialize(self.x[j], self.cfg.eta, self.t - t0, self.state.avg(j)))
                .collect(),
        }
    }

    /// Runs `steps` steps without regard to epoch boundaries other than the
    /// ones the counter crosses. Used to inspect mid-epoch states.
    pub fn advance(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step(None)?;
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<EpochResult> {
        let start = Instant::now();
        let evals_before = self.evals;
        let m = self.cfg.m() as u64;
        let r = self.cfg.pick_rule.sample(self.cfg.m(), &mut self.pick);
        let mut out = None;
        for k in 0..m {
            let pick_here = r == Some(k as usize);
            if let Some(res) = self.step(Some(pick_here))? {
                out = Some(res);
            }
        }
        let (x_tilde, x_last) = out.expect("epoch ended without a boundary");
        self.epoch += 1;
        let norm = norm2(&x_tilde);
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { step: self.t, norm });
        }
        Ok(EpochResult {
            x_tilde,
            x_last,
            grad_evals: self.evals - evals_before,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// One step `t -> t + 1`. `pick` marks the step whose input iterate is the
    /// epoch's selected `x~` (`None` when stepping outside `run_epoch`).
    /// Returns `(x~, x_last)` when the step closes an epoch.
    fn step(&mut self, pick: Option<bool>) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let p = self.p;
        let eta = self.cfg.eta;
        let t = self.t;
        if pick == Some(true) {
            self.picked = Some(self.iterate());
        }

        let i = self.idx.next();
        let support = p.support(i);
        self.xs.clear();
        match self.jit_origin {
            None => self.xs.extend(support.iter().map(|&j| self.x[j])),
            Some(t0) => {
                let state = &self.state;
                let x = &self.x;
                self.xs
                    .extend(support.iter().map(|&j| kernel::materialize(x[j], eta, t - t0, state.avg(j))));
            }
        }
        self.gx.resize(support.len(), 0.0);
        self.ga.resize(support.len(), 0.0);
        p.component_gradient_on_support(i, &self.xs, &mut self.gx);
        self.evals += 1 + self.state.anchor_gradient(p, i, &mut self.ga, &mut self.scratch);

        for (k, &j) in support.iter().enumerate() {
            self.x[j] += kernel::correction_delta(eta, self.gx[k], self.ga[k]);
            if !self.x[j].is_finite() {
                return Err(Error::Diverged { step: t, norm: f64::INFINITY });
            }
        }
        if self.jit_origin.is_none() {
            for (j, xj) in self.x.iter_mut().enumerate() {
                *xj += kernel::average_delta(eta, self.state.avg(j));
            }
        }
        if self.state.uses_current_index_rule(i) {
            self.state.set_entry(p, i, &self.gx, &self.xs);
        }

        let t_next = t + 1;
        self.t = t_next;
        let m = self.cfg.m() as u64;
        let mut boundary = None;
        if t_next.is_multiple_of(m) {
            let x_last = self.iterate();
            let x_tilde = match pick {
                Some(_) => self.picked.take().unwrap_or_else(|| x_last.clone()),
                None => x_last.clone(),
            };
            self.x.copy_from_slice(&x_tilde);
            if self.jit_origin.is_some() {
                self.jit_origin = Some(t_next);
            }
            self.state.set_epoch_origin(t_next);
            boundary = Some((x_tilde, x_last));
        }
        if self.state.groups_due(t_next) {
            if self.jit_origin.is_some() {
                self.x = self.iterate();
                self.jit_origin = Some(t_next);
            }
            self.evals += self.state.refresh_groups(p, t_next, &self.x);
        }
        if self.state.kind() == ScheduleKind::Sag {
            let i_next = self.idx.peek();
            self.xs.clear();
            self.xs.extend(p.support(i_next).iter().map(|&j| self.x[j]));
            self.gx.resize(self.xs.len(), 0.0);
            p.component_gradient_on_support(i_next, &self.xs, &mut self.gx);
            self.evals += 1;
            self.state.set_entry(p, i_next, &self.gx, &self.xs);
        }
        Ok(boundary)
    }
}

/// Runs `cfg.epochs` epochs from `x0`.
pub fn solve(p: &Problem, cfg: &SolverConfig, x0: &[f64]) -> Result<(Vec<f64>, ConvergenceTrace)> {
    solve_observed(p, cfg, x0, None, |_| Control::Continue)
}

/// [`solve`] with an optional known optimum (for suboptimality and `G`)
/// and an observer that may stop the run after any epoch.
pub fn solve_observed<F>(
    p: &Problem,
    cfg: &SolverConfig,
    x0: &[f64],
    reference: Option<Reference<'_>>,
    mut observer: F,
) -> Result<(Vec<f64>, ConvergenceTrace)>
where
    F: FnMut(&TraceRow) -> Control,
{
    let mut cfg = cfg.clone();
    if reference.is_some() {
        cfg.track_anchors = true;
    }
    let mut solver = SerialSolver::new(p, cfg, x0)?;
    let mut trace = ConvergenceTrace {
        initial_objective: p.full_objective(x0),
        setup_grad_evals: solver.setup_grad_evals(),
        ..Default::default()
    };
    if let Some(r) = reference {
        trace.initial_suboptimality = Some(trace.initial_objective - r.f_star);
        trace.initial_lyapunov_g = solver.state().lyapunov_g(p, r.x_star);
    }
    if solver.config().pick_rule == PickRule::Last {
        trace.flags.push("pick-last".into());
    }
    let mut x = x0.to_vec();
    let mut wall = 0.0;
    for _ in 0..solver.config().epochs {
        let res = solver.run_epoch()?;
        wall += res.seconds;
        let objective = p.full_objective(&res.x_tilde);
        let row = TraceRow {
            epoch: solver.epochs_done(),
            wall_seconds: wall,
            objective,
            last_objective: p.full_objective(&res.x_last),
            suboptimality: reference.map(|r| objective - r.f_star),
            lyapunov_g: reference.and_then(|r| solver.state().lyapunov_g(p, r.x_star)),
            grad_evals: res.grad_evals,
            max_staleness: None,
        };
        x = res.x_tilde;
        let ctl = observer(&row);
        trace.rows.push(row);
        if ctl == Control::Stop {
            break;
        }
    }
    Ok((x, trace))
}

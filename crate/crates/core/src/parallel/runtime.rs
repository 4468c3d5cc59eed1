use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::atomic::{cells_from, read_cells, write_cells, AtomicF64, SharedParams};
use super::barrier::{BarrierError, EpochBarrier};
use super::{AsyncConfig, LockMode, StalenessTrace};
use crate::error::{Error, Result};
use crate::kernel;
use crate::objective::{add_assign, norm2, Problem, GRADIENT_BLOCK};
use crate::schedule::{snapshot_average, ScheduleKind, ScheduleState, SnapshotGroup, Slot};
use crate::solver::{
    pick_rng, Control, ConvergenceTrace, IndexStream, PickRule, Reference, TraceRow, DIVERGENCE_NORM,
};

const NO_PICK: u64 = u64::MAX;

/// Runs the configured schedule with `cfg.threads` workers.
pub fn run_async(p: &Problem, cfg: &AsyncConfig, x0: &[f64]) -> Result<(Vec<f64>, ConvergenceTrace, StalenessTrace)> {
    run_async_observed(p, cfg, x0, None, |_| Control::Continue)
}

/// [`run_async`] with a known optimum for the trace and an observer called
/// inside the epoch barrier.
pub fn run_async_observed<F>(
    p: &Problem,
    cfg: &AsyncConfig,
    x0: &[f64],
    reference: Option<Reference<'_>>,
    observer: F,
) -> Result<(Vec<f64>, ConvergenceTrace, StalenessTrace)>
where
    F: FnMut(&TraceRow) -> Control + Send,
{
    validate(p, cfg)?;
    let mut base = cfg.base.clone();
    if reference.is_some() {
        base.track_anchors = true;
    }
    if !cfg.barrier {
        base.pick_rule = PickRule::Last;
    }
    let (state, setup_evals) = ScheduleState::new(p, &base.schedule, x0, base.track_anchors)?;
    let mut trace = ConvergenceTrace {
        initial_objective: p.full_objective(x0),
        setup_grad_evals: setup_evals,
        ..Default::default()
    };
    if let Some(r) = reference {
        trace.initial_suboptimality = Some(trace.initial_objective - r.f_star);
        trace.initial_lyapunov_g = state.lyapunov_g(p, r.x_star);
    }
    if base.pick_rule == PickRule::Last {
        trace.flags.push("pick-last".into());
    }
    if !cfg.barrier {
        trace.flags.push("unanalyzed-per-epoch".into());
    }
    if base.epochs == 0 {
        return Ok((x0.to_vec(), trace, StalenessTrace::default()));
    }

    let team = Team::new(p, cfg, base, state, x0, reference, observer, trace);
    std::thread::scope(|s| {
        for w in 0..cfg.threads {
            let team = &team;
            s.spawn(move || team.worker(w));
        }
    });
    team.finish()
}

fn validate(p: &Problem, cfg: &AsyncConfig) -> Result<()> {
    if cfg.threads == 0 {
        return Err(Error::InvalidArgument("need at least one thread".into()));
    }
    let spec = &cfg.base.schedule;
    cfg.base.validate(p.n())?;
    let m = spec.epoch_len as u64;
    match spec.kind {
        ScheduleKind::Sag => {
            return Err(Error::Unsupported(
                "sag is biased and has no asynchronous analysis; use svrg, saga or hsag".into(),
            ))
        }
        ScheduleKind::Gd if m != 1 => {
            return Err(Error::Unsupported("asynchronous gd needs epoch length 1".into()))
        }
        ScheduleKind::Hsag => {
            let bad = match &spec.hsag_freq {
                None => false,
                Some(crate::schedule::Frequency::Every(s)) => s % m != 0,
                Some(crate::schedule::Frequency::PerIndex(v)) => {
                    let mut in_s = vec![false; p.n()];
                    spec.hsag_set.iter().for_each(|&i| in_s[i] = true);
                    v.iter().enumerate().any(|(i, s)| !in_s[i] && s % m != 0)
                }
            };
            if bad {
                return Err(Error::Unsupported(
                    "asynchronous hsag refreshes only at epoch barriers; every s_i must be a multiple of m".into(),
                ));
            }
        }
        _ => {}
    }
    if !cfg.barrier && spec.kind != ScheduleKind::Saga {
        return Err(Error::Unsupported(format!(
            "running without epoch barriers is only allowed for saga, not {}",
            spec.kind
        )));
    }
    Ok(())
}

/// Schedule state with every mutable part in atomic cells.
struct SharedSchedule {
    kind: ScheduleKind,
    slots: Vec<Slot>,
    grads: Vec<AtomicF64>,
    table_avg: Vec<AtomicF64>,
    anchors: Vec<AtomicF64>,
    members: Vec<usize>,
    group_anchor: Vec<Vec<AtomicF64>>,
    snap_avg: Vec<AtomicF64>,
}

impl SharedSchedule {
    fn new(s: &ScheduleState) -> Self {
        let (grads, table_avg, anchors, members) = match &s.table {
            None => (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
            Some(t) => (
                cells_from(&t.grads),
                cells_from(&t.avg),
                t.anchors.as_deref().map(cells_from).unwrap_or_default(),
                t.members.clone(),
            ),
        };
        SharedSchedule {
            kind: s.kind(),
            slots: s.slots.clone(),
            grads,
            table_avg,
            anchors,
            members,
            group_anchor: s.groups.iter().map(|g| cells_from(&g.anchor)).collect(),
            snap_avg: cells_from(&s.snap_avg),
        }
    }

    /// Same combination as [`ScheduleState::avg`].
    #[inline]
    fn avg(&self, j: usize) -> f64 {
        match (self.table_avg.is_empty(), self.snap_avg.is_empty()) {
            (false, true) => self.table_avg[j].load(Ordering::Relaxed),
            (true, _) => self.snap_avg[j].load(Ordering::Relaxed),
            (false, false) => self.table_avg[j].load(Ordering::Relaxed) + self.snap_avg[j].load(Ordering::Relaxed),
        }
    }

    fn anchor_gradient(&self, p: &Problem, i: usize, out: &mut [f64], scratch: &mut Vec<f64>) -> u64 {
        match self.slots[i] {
            Slot::Table(off) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.grads[off + k].load(Ordering::Relaxed);
                }
                0
            }
            Slot::Group(g) => {
                let anchor = &self.group_anchor[g];
                scratch.clear();
                scratch.extend(p.support(i).iter().map(|&j| anchor[j].load(Ordering::Relaxed)));
                p.component_gradient_on_support(i, scratch, out);
                1
            }
        }
    }

    #[inline]
    fn uses_current_index_rule(&self, i: usize) -> bool {
        matches!(self.kind, ScheduleKind::Saga | ScheduleKind::Hsag) && matches!(self.slots[i], Slot::Table(_))
    }

    fn set_entry(&self, p: &Problem, i: usize, grad: &[f64], anchor_xs: &[f64], nf: f64) {
        let Slot::Table(off) = self.slots[i] else { unreachable!() };
        for (k, &j) in p.support(i).iter().enumerate() {
            let old = self.grads[off + k].swap(grad[k], Ordering::Relaxed);
            self.table_avg[j].fetch_add(kernel::table_delta(grad[k], old, nf), Ordering::Relaxed);
        }
        if !self.anchors.is_empty() {
            for (k, &a) in anchor_xs.iter().enumerate() {
                self.anchors[off + k].store(a, Ordering::Relaxed);
            }
        }
    }

    fn lyapunov_g(&self, p: &Problem, x_star: &[f64]) -> Option<f64> {
        if self.members.is_empty() {
            return Some(0.0);
        }
        if self.anchors.is_empty() {
            return None;
        }
        let alphas: Vec<(usize, Vec<f64>)> = self
            .members
            .iter()
            .map(|&i| {
                let Slot::Table(off) = self.slots[i] else { unreachable!() };
                let len = p.support(i).len();
                (i, read_cells(&self.anchors[off..off + len]))
            })
            .collect();
        Some(p.lyapunov_g(alphas.iter().map(|(i, a)| (*i, a.as_slice())), x_star))
    }
}

struct RefreshJob {
    anchor: Vec<f64>,
    /// `(group, member range)` per block, in reduction order.
    blocks: Vec<(usize, std::ops::Range<usize>)>,
    partials: Vec<Mutex<Option<Vec<f64>>>>,
}

struct Leader<'r, F> {
    groups: Vec<SnapshotGroup>,
    pick: ChaCha8Rng,
    trace: ConvergenceTrace,
    observer: F,
    reference: Option<Reference<'r>>,
    epoch: usize,
    due: Vec<usize>,
    x_last: Vec<f64>,
    x_tilde: Vec<f64>,
    eval_seconds: f64,
    epoch_evals_base: u64,
    /// Unsynchronized runs: `(epoch, seconds, x)` captured at boundaries.
    boundary_snapshots: Vec<(usize, f64, Vec<f64>)>,
}

struct Team<'a, 'r, F> {
    p: &'a Problem,
    cfg: &'a AsyncConfig,
    epochs: usize,
    eta: f64,
    m: u64,
    nf: f64,
    seed: u64,
    jit: bool,
    x: SharedParams,
    sched: SharedSchedule,
    claim: AtomicU64,
    epoch_end: AtomicU64,
    epoch_start: AtomicU64,
    jit_origin: AtomicU64,
    pick_t: AtomicU64,
    picked: Mutex<Option<Vec<f64>>>,
    rw: RwLock<()>,
    barrier: EpochBarrier,
    evals: AtomicU64,
    epoch_max_staleness: AtomicU64,
    done: AtomicBool,
    error: Mutex<Option<Error>>,
    job: RwLock<RefreshJob>,
    block_next: AtomicUsize,
    leader: Mutex<Leader<'r, F>>,
    staleness: Mutex<StalenessTrace>,
    start: Instant,
}

impl<'a, 'r, F> Team<'a, 'r, F>
where
    F: FnMut(&TraceRow) -> Control + Send,
{
    #[allow(clippy::too_many_arguments)]
    fn new(
        p: &'a Problem,
        cfg: &'a AsyncConfig,
        base: crate::solver::SolverConfig,
        state: ScheduleState,
        x0: &[f64],
        reference: Option<Reference<'r>>,
        observer: F,
        trace: ConvergenceTrace,
    ) -> Self {
        let m = base.m() as u64;
        let mut pick = pick_rng(base.seed);
        let pick_t = match base.pick_rule.sample(base.m(), &mut pick) {
            Some(r) => r as u64,
            None => NO_PICK,
        };
        let total = if cfg.barrier { m } else { m * base.epochs as u64 };
        Team {
            p,
            cfg,
            epochs: base.epochs,
            eta: base.eta,
            m,
            nf: p.n() as f64,
            seed: base.seed,
            jit: base.jit,
            x: SharedParams::new(x0),
            sched: SharedSchedule::new(&state),
            claim: AtomicU64::new(0),
            epoch_end: AtomicU64::new(total),
            epoch_start: AtomicU64::new(0),
            jit_origin: AtomicU64::new(0),
            pick_t: AtomicU64::new(pick_t),
            picked: Mutex::new(None),
            rw: RwLock::new(()),
            barrier: EpochBarrier::new(cfg.threads, cfg.watchdog()),
            evals: AtomicU64::new(0),
            epoch_max_staleness: AtomicU64::new(0),
            done: AtomicBool::new(false),
            error: Mutex::new(None),
            job: RwLock::new(RefreshJob {
                anchor: Vec::new(),
                blocks: Vec::new(),
                partials: Vec::new(),
            }),
            block_next: AtomicUsize::new(0),
            leader: Mutex::new(Leader {
                groups: state.groups.clone(),
                pick,
                trace,
                observer,
                reference,
                epoch: 0,
                due: Vec::new(),
                x_last: Vec::new(),
                x_tilde: Vec::new(),
                eval_seconds: 0.0,
                epoch_evals_base: 0,
                boundary_snapshots: Vec::new(),
            }),
            staleness: Mutex::new(StalenessTrace::default()),
            start: Instant::now(),
        }
    }

    fn fail(&self, e: Error) {
        let mut slot = self.error.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            *slot = Some(e);
        }
        self.done.store(true, Ordering::SeqCst);
        self.barrier.abort();
    }

    fn wait(&self) -> Option<bool> {
        match self.barrier.wait() {
            Ok(leader) => Some(leader),
            Err(BarrierError::Aborted) => None,
            Err(BarrierError::Timeout {
                waited,
                arrived,
                expected,
            }) => {
                self.fail(Error::BarrierTimeout {
                    waited_ms: waited.as_millis(),
                    arrived,
                    expected,
                });
                None
            }
        }
    }

    /// `x^t` on every coordinate.
    fn materialize_all(&self, t: u64) -> Vec<f64> {
        if !self.jit {
            return self.x.snapshot();
        }
        let t0 = self.jit_origin.load(Ordering::Relaxed);
        (0..self.x.len())
            .map(|j| kernel::materialize(self.x.cells[j].load(Ordering::Relaxed), self.eta, t - t0, self.sched.avg(j)))
            .collect()
    }

    fn worker(&self, w: usize) {
        let mut local = StalenessTrace::default();
        if self.cfg.record_claims {
            local.claims = Some(Vec::new());
        }
        let mut idx = IndexStream::new(self.seed, w as u64, self.p.n());
        let mut bufs = Buffers::default();
        loop {
            loop {
                if self.done.load(Ordering::Relaxed) {
                    break;
                }
                let t = self.claim.fetch_add(1, Ordering::AcqRel);
                if t >= self.epoch_end.load(Ordering::Acquire) {
                    break;
                }
                if let Err(e) = self.step(t, &mut idx, &mut bufs, &mut local) {
                    self.fail(e);
                    break;
                }
            }
            if !self.cfg.barrier || self.done.load(Ordering::SeqCst) {
                break;
            }
            let Some(lead) = self.wait() else { break };
            if lead {
                self.close_epoch();
            }
            if self.wait().is_none() {
                break;
            }
            self.refresh_blocks();
            let Some(lead) = self.wait() else { break };
            if lead {
                self.open_epoch();
            }
            if self.wait().is_none() || self.done.load(Ordering::SeqCst) {
                break;
            }
        }
        self.staleness.lock().unwrap_or_else(|e| e.into_inner()).merge(local);
    }

    fn step(&self, t: u64, idx: &mut IndexStream, b: &mut Buffers, stats: &mut StalenessTrace) -> Result<()> {
        let p = self.p;
        let eta = self.eta;
        if let Some(c) = stats.claims.as_mut() {
            c.push(t);
        }
        if t == self.pick_t.load(Ordering::Relaxed) {
            let snap = self.materialize_all(t);
            *self.picked.lock().unwrap_or_else(|e| e.into_inner()) = Some(snap);
        }
        if !self.cfg.barrier && t > 0 && t.is_multiple_of(self.m) {
            let snap = self.x.snapshot();
            let secs = self.start.elapsed().as_secs_f64();
            let mut l = self.leader.lock().unwrap_or_else(|e| e.into_inner());
            l.boundary_snapshots.push(((t / self.m) as usize, secs, snap));
        }

        let i = idx.next();
        let support = p.support(i);
        let n_s = support.len();
        b.xs.clear();
        b.gx.resize(n_s, 0.0);
        b.ga.resize(n_s, 0.0);

        let read_guard = match self.cfg.mode {
            LockMode::Locked => Some(self.rw.read().unwrap_or_else(|e| e.into_inner())),
            LockMode::LockFree => None,
        };
        let seen = self.x.applied.load(Ordering::Acquire);
        if self.jit {
            let t0 = self.jit_origin.load(Ordering::Relaxed);
            b.xs.extend(
                support
                    .iter()
                    .map(|&j| kernel::materialize(self.x.cells[j].load(Ordering::Relaxed), eta, t - t0, self.sched.avg(j))),
            );
        } else {
            b.xs.extend(support.iter().map(|&j| self.x.cells[j].load(Ordering::Relaxed)));
        }
        let mut evals = 1;
        if self.cfg.joint_read {
            evals += self.sched.anchor_gradient(p, i, &mut b.ga, &mut b.scratch);
        }
        drop(read_guard);
        p.component_gradient_on_support(i, &b.xs, &mut b.gx);
        if !self.cfg.joint_read {
            let _g = match self.cfg.mode {
                LockMode::Locked => Some(self.rw.read().unwrap_or_else(|e| e.into_inner())),
                LockMode::LockFree => None,
            };
            evals += self.sched.anchor_gradient(p, i, &mut b.ga, &mut b.scratch);
        }
        self.evals.fetch_add(evals, Ordering::Relaxed);

        let staleness = t.saturating_sub(seen);
        stats.record(staleness);
        if seen < self.epoch_start.load(Ordering::Relaxed) {
            stats.barrier_violations += 1;
        }
        self.epoch_max_staleness.fetch_max(staleness, Ordering::Relaxed);
        if let Some(cap) = self.cfg.tau_cap {
            if staleness > cap {
                return Err(Error::StalenessCap {
                    step: t,
                    observed: staleness,
                    cap,
                });
            }
        }

        let write_guard = match self.cfg.mode {
            LockMode::Locked => Some(self.rw.write().unwrap_or_else(|e| e.into_inner())),
            LockMode::LockFree => None,
        };
        for (k, &j) in support.iter().enumerate() {
            let (v, r) = self.x.cells[j].fetch_add(kernel::correction_delta(eta, b.gx[k], b.ga[k]), Ordering::Relaxed);
            stats.cas_retries += r;
            if !v.is_finite() {
                drop(write_guard);
                return Err(Error::Diverged {
                    step: t,
                    norm: f64::INFINITY,
                });
            }
        }
        if !self.jit {
            for (j, cell) in self.x.cells.iter().enumerate() {
                stats.cas_retries += cell.fetch_add(kernel::average_delta(eta, self.sched.avg(j)), Ordering::Relaxed).1;
            }
        }
        if self.sched.uses_current_index_rule(i) {
            self.sched.set_entry(p, i, &b.gx, &b.xs, self.nf);
        }
        drop(write_guard);
        self.x.applied.fetch_add(1, Ordering::Release);
        Ok(())
    }

    /// Leader work after all steps of the epoch: selects `x~`, restarts the
    /// iterate from it and prepares the anchor refresh.
    fn close_epoch(&self) {
        let mut l = self.leader.lock().unwrap_or_else(|e| e.into_inner());
        let t_next = self.epoch_end.load(Ordering::Relaxed);
        let x_last = self.materialize_all(t_next);
        let x_tilde = self
            .picked
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .take()
            .unwrap_or_else(|| x_last.clone());
        let norm = norm2(&x_tilde);
        if !(norm <= DIVERGENCE_NORM) {
            self.fail(Error::Diverged { step: t_next, norm });
            return;
        }
        write_cells(&self.x.cells, &x_tilde);
        if self.jit {
            self.jit_origin.store(t_next, Ordering::Relaxed);
        }
        self.epoch_start.store(t_next, Ordering::Relaxed);

        l.due = (0..l.groups.len()).filter(|&g| t_next.is_multiple_of(l.groups[g].period())).collect();
        let mut job = self.job.write().unwrap_or_else(|e| e.into_inner());
        job.blocks.clear();
        job.partials.clear();
        if !l.due.is_empty() {
            if self.jit {
                // fold the implicit bracket, as the serial solver does
                let x = self.materialize_all(t_next);
                write_cells(&self.x.cells, &x);
            }
            job.anchor = self.x.snapshot();
            for &g in &l.due {
                write_cells(&self.sched.group_anchor[g], &job.anchor);
                let len = l.groups[g].members().len();
                let mut s = 0;
                while s < len {
                    let e = (s + GRADIENT_BLOCK).min(len);
                    job.blocks.push((g, s..e));
                    s = e;
                }
            }
            job.partials = (0..job.blocks.len()).map(|_| Mutex::new(None)).collect();
        }
        self.block_next.store(0, Ordering::Relaxed);
        l.x_last = x_last;
        l.x_tilde = x_tilde;
    }

    fn refresh_blocks(&self) {
        let job = self.job.read().unwrap_or_else(|e| e.into_inner());
        if job.blocks.is_empty() {
            return;
        }
        let l_groups: Vec<Vec<usize>> = {
            let l = self.leader.lock().unwrap_or_else(|e| e.into_inner());
            l.groups.iter().map(|g| g.members().to_vec()).collect()
        };
        loop {
            let b = self.block_next.fetch_add(1, Ordering::Relaxed);
            if b >= job.blocks.len() {
                break;
            }
            let (g, ref range) = job.blocks[b];
            let partial = self.p.block_gradient_sum(&l_groups[g][range.clone()], &job.anchor);
            *job.partials[b].lock().unwrap_or_else(|e| e.into_inner()) = Some(partial);
        }
    }

    /// Leader work after the refresh: reduces block sums, records the trace
    /// row and arms the next epoch.
    fn open_epoch(&self) {
        let mut guard = self.leader.lock().unwrap_or_else(|e| e.into_inner());
        let l = &mut *guard;
        let t_next = self.epoch_end.load(Ordering::Relaxed);
        if !l.due.is_empty() {
            let job = self.job.read().unwrap_or_else(|e| e.into_inner());
            let mut sums: Vec<Option<Vec<f64>>> = vec![None; l.groups.len()];
            for (b, (g, _)) in job.blocks.iter().enumerate() {
                let partial = job.partials[b].lock().unwrap_or_else(|e| e.into_inner()).take().expect("missing block");
                add_assign(sums[*g].get_or_insert_with(|| vec![0.0; self.p.dim()]), &partial);
            }
            for &g in &l.due {
                let sum = sums[g].take().unwrap_or_else(|| vec![0.0; self.p.dim()]);
                l.groups[g].anchor.clone_from(&job.anchor);
                l.groups[g].grad_sum = sum;
                self.evals.fetch_add(l.groups[g].members().len() as u64, Ordering::Relaxed);
            }
            let snap = snapshot_average(&l.groups, self.nf);
            write_cells(&self.sched.snap_avg, &snap);
        }

        let wall = self.start.elapsed().as_secs_f64() - l.eval_seconds;
        let eval_start = Instant::now();
        l.epoch += 1;
        let evals = self.evals.load(Ordering::Relaxed);
        let objective = self.p.full_objective(&l.x_tilde);
        let row = TraceRow {
            epoch: l.epoch,
            wall_seconds: wall,
            objective,
            last_objective: self.p.full_objective(&l.x_last),
            suboptimality: l.reference.map(|r| objective - r.f_star),
            lyapunov_g: l.reference.and_then(|r| self.sched.lyapunov_g(self.p, r.x_star)),
            grad_evals: evals - l.epoch_evals_base,
            max_staleness: Some(self.epoch_max_staleness.swap(0, Ordering::Relaxed)),
        };
        l.epoch_evals_base = evals;
        let ctl = (l.observer)(&row);
        l.trace.rows.push(row);
        l.eval_seconds += eval_start.elapsed().as_secs_f64();

        if ctl == Control::Stop || l.epoch >= self.epochs {
            self.done.store(true, Ordering::SeqCst);
            return;
        }
        let m = self.m as usize;
        let r = match self.cfg.base.pick_rule {
            rule if self.cfg.barrier => rule.sample(m, &mut l.pick),
            _ => None,
        };
        self.pick_t.store(r.map_or(NO_PICK, |r| t_next + r as u64), Ordering::Relaxed);
        self.claim.store(t_next, Ordering::Relaxed);
        self.epoch_end.store(t_next + self.m, Ordering::Release);
    }

    fn finish(self) -> Result<(Vec<f64>, ConvergenceTrace, StalenessTrace)> {
        if let Some(e) = self.error.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(e);
        }
        let staleness = self.staleness.into_inner().unwrap_or_else(|e| e.into_inner());
        let mut l = self.leader.into_inner().unwrap_or_else(|e| e.into_inner());
        if self.cfg.barrier {
            return Ok((l.x_tilde, l.trace, staleness));
        }
        // unsynchronized run: rows from boundary snapshots, evaluated now
        let x_final = self.x.snapshot();
        let total = self.start.elapsed().as_secs_f64();
        l.boundary_snapshots.sort_by_key(|s| s.0);
        l.boundary_snapshots.push((self.epochs, total, x_final.clone()));
        let evals = self.evals.load(Ordering::Relaxed);
        for (k, secs, x) in &l.boundary_snapshots {
            let objective = self.p.full_objective(x);
            let row = TraceRow {
                epoch: *k,
                wall_seconds: *secs,
                objective,
                last_objective: objective,
                suboptimality: l.reference.map(|r| objective - r.f_star),
                lyapunov_g: None,
                grad_evals: if *k == self.epochs { evals } else { 0 },
                max_staleness: None,
            };
            (l.observer)(&row);
            l.trace.rows.push(row);
        }
        Ok((x_final, l.trace, staleness))
    }
}

#[derive(Default)]
struct Buffers {
    xs: Vec<f64>,
    gx: Vec<f64>,
    ga: Vec<f64>,
    scratch: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, LabelModel, SyntheticSpec};
    use crate::schedule::ScheduleSpec;
    use crate::solver::SolverConfig;

    #[test]
    fn snapshot_gradient_after_barrier() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 300,
            d: 60,
            nnz_per_row: 4,
            label_model: LabelModel::default(),
            seed: 2,
        })
        .unwrap();
        let p = Problem::new(ds, 1.0 / 300.0).unwrap();
        let mut base = SolverConfig::new(0.3 / p.smoothness(), 3, ScheduleSpec::svrg(600));
        base.pick_rule = PickRule::Uniform;
        let cfg = AsyncConfig::new(3, LockMode::LockFree, base.clone());
        let x0 = vec![0.0; 60];
        let (state, _) = ScheduleState::new(&p, &base.schedule, &x0, false).unwrap();
        let trace = ConvergenceTrace::default();
        let team = Team::new(&p, &cfg, base, state, &x0, None, |_: &TraceRow| Control::Continue, trace);
        std::thread::scope(|s| {
            for w in 0..3 {
                let team = &team;
                s.spawn(move || team.worker(w));
            }
        });
        let anchor = read_cells(&team.sched.group_anchor[0]);
        let cached = read_cells(&team.sched.snap_avg);
        let exact = p.full_gradient(&anchor);
        for j in 0..60 {
            assert!((cached[j] - exact[j]).abs() <= 1e-12);
        }
        let (x_tilde, trace, _) = team.finish().unwrap();
        assert_eq!(anchor, x_tilde);
        assert_eq!(trace.rows.len(), 3);
    }
}

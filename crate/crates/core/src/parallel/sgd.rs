use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::atomic::SharedParams;
use super::barrier::{BarrierError, EpochBarrier};
use crate::error::{Error, Result};
use crate::kernel;
use crate::objective::{norm2, Problem};
use crate::solver::{Control, ConvergenceTrace, IndexStream, Reference, TraceRow, DIVERGENCE_NORM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSize {
    Constant { eta: f64 },
    /// `eta0 * sqrt(sigma0 / (t + sigma0))`.
    Decaying { eta0: f64, sigma0: f64 },
}

impl StepSize {
    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSize::Constant { eta } => eta,
            StepSize::Decaying { eta0, sigma0 } => kernel::decaying_step(eta0, sigma0, t),
        }
    }
}

/// Plain lock-free SGD (`x <- x - eta_t grad f_i(x)`), used as a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub threads: usize,
    pub step: StepSize,
    pub epochs: usize,
    /// Steps between trace rows; `None` means `n`.
    #[serde(default)]
    pub epoch_len: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_watchdog_ms")]
    pub watchdog_ms: u64,
}

fn default_watchdog_ms() -> u64 {
    60_000
}

impl SgdConfig {
    pub fn new(threads: usize, step: StepSize, epochs: usize, seed: u64) -> Self {
        SgdConfig {
            threads,
            step,
            epochs,
            epoch_len: None,
            seed,
            watchdog_ms: default_watchdog_ms(),
        }
    }
}

pub fn run_sgd(p: &Problem, cfg: &SgdConfig, x0: &[f64]) -> Result<(Vec<f64>, ConvergenceTrace)> {
    run_sgd_observed(p, cfg, x0, None, |_| Control::Continue)
}

pub fn run_sgd_observed<F>(
    p: &Problem,
    cfg: &SgdConfig,
    x0: &[f64],
    reference: Option<Reference<'_>>,
    observer: F,
) -> Result<(Vec<f64>, ConvergenceTrace)>
where
    F: FnMut(&TraceRow) -> Control + Send,
{
    if cfg.threads == 0 {
        return Err(Error::InvalidArgument("need at least one thread".into()));
    }
    let valid = match cfg.step {
        StepSize::Constant { eta } => eta > 0.0 && eta.is_finite(),
        StepSize::Decaying { eta0, sigma0 } => eta0 > 0.0 && eta0.is_finite() && sigma0 > 0.0,
    };
    if !valid {
        return Err(Error::InvalidArgument(format!("invalid step size {:?}", cfg.step)));
    }
    let m = cfg.epoch_len.unwrap_or(p.n()) as u64;
    if m == 0 {
        return Err(Error::InvalidArgument("epoch length must be positive".into()));
    }
    let initial = p.full_objective(x0);
    let trace = ConvergenceTrace {
        initial_objective: initial,
        initial_suboptimality: reference.map(|r| initial - r.f_star),
        flags: vec!["sgd".into()],
        ..Default::default()
    };
    if cfg.epochs == 0 {
        return Ok((x0.to_vec(), trace));
    }
    let team = SgdTeam {
        p,
        cfg,
        m,
        x: SharedParams::new(x0),
        claim: AtomicU64::new(0),
        epoch_end: AtomicU64::new(m),
        barrier: EpochBarrier::new(cfg.threads, Duration::from_millis(cfg.watchdog_ms)),
        done: AtomicBool::new(false),
        error: Mutex::new(None),
        leader: Mutex::new(SgdLeader {
            trace,
            observer,
            reference,
            epoch: 0,
            eval_seconds: 0.0,
            x: x0.to_vec(),
        }),
        start: Instant::now(),
    };
    std::thread::scope(|s| {
        for w in 0..cfg.threads {
            let team = &team;
            s.spawn(move || team.worker(w));
        }
    });
    if let Some(e) = team.error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    let l = team.leader.into_inner().unwrap_or_else(|e| e.into_inner());
    Ok((l.x, l.trace))
}

struct SgdLeader<'r, F> {
    trace: ConvergenceTrace,
    observer: F,
    reference: Option<Reference<'r>>,
    epoch: usize,
    eval_seconds: f64,
    x: Vec<f64>,
}

struct SgdTeam<'a, 'r, F> {
    p: &'a Problem,
    cfg: &'a SgdConfig,
    m: u64,
    x: SharedParams,
    claim: AtomicU64,
    epoch_end: AtomicU64,
    barrier: EpochBarrier,
    done: AtomicBool,
    error: Mutex<Option<Error>>,
    leader: Mutex<SgdLeader<'r, F>>,
    start: Instant,
}

impl<F> SgdTeam<'_, '_, F>
where
    F: FnMut(&TraceRow) -> Control + Send,
{
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
            Ok(lead) => Some(lead),
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

    fn worker(&self, w: usize) {
        let p = self.p;
        let mut idx = IndexStream::new(self.cfg.seed, w as u64, p.n());
        let mut xs = Vec::new();
        let mut g = Vec::new();
        loop {
            loop {
                if self.done.load(Ordering::Relaxed) {
                    break;
                }
                let t = self.claim.fetch_add(1, Ordering::AcqRel);
                if t >= self.epoch_end.load(Ordering::Acquire) {
                    break;
                }
                let i = idx.next();
                let support = p.support(i);
                xs.clear();
                xs.extend(support.iter().map(|&j| self.x.cells[j].load(Ordering::Relaxed)));
                g.resize(support.len(), 0.0);
                p.component_gradient_on_support(i, &xs, &mut g);
                let eta = self.cfg.step.at(t);
                for (k, &j) in support.iter().enumerate() {
                    let (v, _) = self.x.cells[j].fetch_add(-(eta * g[k]), Ordering::Relaxed);
                    if !v.is_finite() {
                        self.fail(Error::Diverged {
                            step: t,
                            norm: f64::INFINITY,
                        });
                        break;
                    }
                }
            }
            if self.done.load(Ordering::SeqCst) {
                break;
            }
            let Some(lead) = self.wait() else { break };
            if lead {
                self.close_epoch();
            }
            if self.wait().is_none() || self.done.load(Ordering::SeqCst) {
                break;
            }
        }
    }

    fn close_epoch(&self) {
        let mut guard = self.leader.lock().unwrap_or_else(|e| e.into_inner());
        let l = &mut *guard;
        let wall = self.start.elapsed().as_secs_f64() - l.eval_seconds;
        let eval_start = Instant::now();
        let x = self.x.snapshot();
        let norm = norm2(&x);
        if !(norm <= DIVERGENCE_NORM) {
            let t = self.epoch_end.load(Ordering::Relaxed);
            drop(guard);
            self.fail(Error::Diverged { step: t, norm });
            return;
        }
        l.epoch += 1;
        let objective = self.p.full_objective(&x);
        let row = TraceRow {
            epoch: l.epoch,
            wall_seconds: wall,
            objective,
            last_objective: objective,
            suboptimality: l.reference.map(|r| objective - r.f_star),
            lyapunov_g: None,
            grad_evals: self.m,
            max_staleness: None,
        };
        let ctl = (l.observer)(&row);
        l.trace.rows.push(row);
        l.x = x;
        l.eval_seconds += eval_start.elapsed().as_secs_f64();
        if ctl == Control::Stop || l.epoch >= self.cfg.epochs {
            self.done.store(true, Ordering::SeqCst);
            return;
        }
        let t_next = self.epoch_end.load(Ordering::Relaxed);
        self.claim.store(t_next, Ordering::Relaxed);
        self.epoch_end.store(t_next + self.m, Ordering::Release);
    }
}

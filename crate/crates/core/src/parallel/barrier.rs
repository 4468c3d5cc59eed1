use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BarrierError {
    Timeout {
        waited: Duration,
        arrived: usize,
        expected: usize,
    },
    Aborted,
}

#[derive(Debug)]
struct Inner {
    arrived: usize,
    generation: u64,
}

/// Reusable rendezvous of a fixed number of threads with a watchdog and an
/// abort switch that releases every waiter.
#[derive(Debug)]
pub struct EpochBarrier {
    inner: Mutex<Inner>,
    cv: Condvar,
    parties: usize,
    timeout: Duration,
    aborted: AtomicBool,
}

impl EpochBarrier {
    pub fn new(parties: usize, timeout: Duration) -> Self {
        EpochBarrier {
            inner: Mutex::new(Inner {
                arrived: 0,
                generation: 0,
            }),
            cv: Condvar::new(),
            parties,
            timeout,
            aborted: AtomicBool::new(false),
        }
    }

    /// Blocks until all parties arrive. Exactly one caller per generation
    /// (the last to arrive) gets `Ok(true)`.
    pub fn wait(&self) -> Result<bool, BarrierError> {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if self.is_aborted() {
            return Err(BarrierError::Aborted);
        }
        let gen = g.generation;
        g.arrived += 1;
        if g.arrived == self.parties {
            g.arrived = 0;
            g.generation += 1;
            self.cv.notify_all();
            return Ok(true);
        }
        let start = Instant::now();
        loop {
            let left = self.timeout.saturating_sub(start.elapsed());
            let (ng, _) = self.cv.wait_timeout(g, left).unwrap_or_else(|e| e.into_inner());
            g = ng;
            if g.generation != gen {
                return Ok(false);
            }
            if self.is_aborted() {
                return Err(BarrierError::Aborted);
            }
            let waited = start.elapsed();
            if waited >= self.timeout {
                return Err(BarrierError::Timeout {
                    waited,
                    arrived: g.arrived,
                    expected: self.parties,
                });
            }
        }
    }

    pub fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        let _g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        self.cv.notify_all();
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }
}

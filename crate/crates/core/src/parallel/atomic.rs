use std::sync::atomic::{AtomicU64, Ordering};

/// `f64` cell updated with compare-and-swap.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(v: f64) -> Self {
        AtomicF64(AtomicU64::new(v.to_bits()))
    }

    #[inline]
    pub fn load(&self, order: Ordering) -> f64 {
        f64::from_bits(self.0.load(order))
    }

    #[inline]
    pub fn store(&self, v: f64, order: Ordering) {
        self.0.store(v.to_bits(), order)
    }

    #[inline]
    pub fn swap(&self, v: f64, order: Ordering) -> f64 {
        f64::from_bits(self.0.swap(v.to_bits(), order))
    }

    /// Adds `delta` with a CAS retry loop. Returns the new value and the
    /// number of failed attempts.
    #[inline]
    pub fn fetch_add(&self, delta: f64, order: Ordering) -> (f64, u64) {
        let mut retries = 0;
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let new = f64::from_bits(cur) + delta;
            match self.0.compare_exchange_weak(cur, new.to_bits(), order, Ordering::Relaxed) {
                Ok(_) => return (new, retries),
                Err(actual) => {
                    cur = actual;
                    retries += 1;
                }
            }
        }
    }
}

pub(crate) fn cells_from(values: &[f64]) -> Vec<AtomicF64> {
    values.iter().map(|&v| AtomicF64::new(v)).collect()
}

pub(crate) fn read_cells(cells: &[AtomicF64]) -> Vec<f64> {
    cells.iter().map(|c| c.load(Ordering::Relaxed)).collect()
}

pub(crate) fn write_cells(cells: &[AtomicF64], values: &[f64]) {
    for (c, &v) in cells.iter().zip(values) {
        c.store(v, Ordering::Relaxed);
    }
}

/// Shared iterate plus the count of fully applied steps.
#[derive(Debug)]
pub struct SharedParams {
    pub cells: Vec<AtomicF64>,
    pub applied: AtomicU64,
}

impl SharedParams {
    pub fn new(x: &[f64]) -> Self {
        SharedParams {
            cells: cells_from(x),
            applied: AtomicU64::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn snapshot(&self) -> Vec<f64> {
        read_cells(&self.cells)
    }
}

/// Adds `deltas[k]` to coordinate `support[k]` one cell at a time. Returns
/// the number of CAS retries.
pub fn apply_update_lockfree(shared: &SharedParams, support: &[usize], deltas: &[f64]) -> u64 {
    let mut retries = 0;
    for (&j, &d) in support.iter().zip(deltas) {
        retries += shared.cells[j].fetch_add(d, Ordering::Relaxed).1;
    }
    retries
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn empty_support_is_noop() {
        let s = SharedParams::new(&[1.0, 2.0]);
        assert_eq!(apply_update_lockfree(&s, &[], &[]), 0);
        assert_eq!(s.snapshot(), vec![1.0, 2.0]);
    }

    #[test]
    fn disjoint_updates_commute() {
        let s = Arc::new(SharedParams::new(&[0.0; 6]));
        let a = {
            let s = Arc::clone(&s);
            std::thread::spawn(move || apply_update_lockfree(&s, &[0, 2, 4], &[1.0, 2.0, 3.0]))
        };
        let b = {
            let s = Arc::clone(&s);
            std::thread::spawn(move || apply_update_lockfree(&s, &[1, 3, 5], &[-1.0, -2.0, -3.0]))
        };
        a.join().unwrap();
        b.join().unwrap();
        assert_eq!(s.snapshot(), vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0]);
    }

    #[test]
    fn same_cell_keeps_both_updates() {
        let s = Arc::new(SharedParams::new(&[10.0]));
        let hs: Vec<_> = [0.25, 0.5]
            .into_iter()
            .map(|d| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || apply_update_lockfree(&s, &[0], &[d]))
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        assert_eq!(s.snapshot(), vec![10.75]);
    }

    #[test]
    fn swap_returns_previous() {
        let c = AtomicF64::new(1.5);
        assert_eq!(c.swap(-2.0, Ordering::Relaxed), 1.5);
        assert_eq!(c.load(Ordering::Relaxed), -2.0);
    }
}

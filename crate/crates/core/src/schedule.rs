//! Anchor tables `A = {alpha_i}` and the rules that update them.
//!
//! Every schedule is stored as a combination of two physical pieces:
//!
//! * a **gradient table** holding `grad f_i(alpha_i)` on `e_i` for the
//!   indices that follow the per-step rule (SAGA, SAG, HSAG on `S`), together
//!   with their running average; and
//! * **snapshot groups**: an anchor point shared by a set of indices and the
//!   sum of their gradients at that anchor (SVRG, GD, HSAG off `S`).
//!
//! SVRG keeps one snapshot group with period `m`, GD one with period 1, SAGA
//! and SAG only the table, HSAG a table over `S` plus one snapshot group per
//! distinct refresh frequency. Gradients of snapshot members are recomputed
//! at the anchor when needed, so SVRG never stores per-example vectors.
//!
//! Refresh triggers are evaluated against the global step counter: a group
//! with period `s` re-anchors at `x^{t+1}` after step `t` whenever
//! `s | t + 1`, i.e. anchors always describe the iterate at the start of the
//! block of steps that uses them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;
use crate::objective::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Svrg,
    Saga,
    Sag,
    Gd,
    Hsag,
}

impl ScheduleKind {
    /// Only SAG's estimate of the gradient is biased: it refreshes the entry
    /// of the *next* sampled index.
    pub fn is_biased(self) -> bool {
        matches!(self, ScheduleKind::Sag)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScheduleKind::Svrg => "svrg",
            ScheduleKind::Saga => "saga",
            ScheduleKind::Sag => "sag",
            ScheduleKind::Gd => "gd",
            ScheduleKind::Hsag => "hsag",
        };
        f.pad(s)
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svrg" => Ok(ScheduleKind::Svrg),
            "saga" => Ok(ScheduleKind::Saga),
            "sag" => Ok(ScheduleKind::Sag),
            "gd" => Ok(ScheduleKind::Gd),
            "hsag" => Ok(ScheduleKind::Hsag),
            other => Err(Error::InvalidArgument(format!("unknown schedule {other:?}"))),
        }
    }
}

/// Refresh frequencies `s_i` for the indices outside `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Every(u64),
    /// One entry per example; entries for members of `S` are ignored.
    PerIndex(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Epoch length `m`.
    pub epoch_len: usize,
    /// HSAG only: indices following the per-step rule.
    #[serde(default)]
    pub hsag_set: Vec<usize>,
    /// HSAG only: refresh frequencies off `S`; defaults to `m`.
    #[serde(default)]
    pub hsag_freq: Option<Frequency>,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, epoch_len: usize) -> Self {
        ScheduleSpec {
            kind,
            epoch_len,
            hsag_set: Vec::new(),
            hsag_freq: None,
        }
    }

    pub fn svrg(m: usize) -> Self {
        Self::new(ScheduleKind::Svrg, m)
    }

    pub fn saga(m: usize) -> Self {
        Self::new(ScheduleKind::Saga, m)
    }

    pub fn sag(m: usize) -> Self {
        Self::new(ScheduleKind::Sag, m)
    }

    pub fn gd(m: usize) -> Self {
        Self::new(ScheduleKind::Gd, m)
    }

    pub fn hsag(m: usize, set: Vec<usize>, freq: Option<Frequency>) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Hsag,
            epoch_len: m,
            hsag_set: set,
            hsag_freq: freq,
        }
    }

    pub fn is_biased(&self) -> bool {
        self.kind.is_biased()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epoch_len == 0 {
            return Err(Error::InvalidArgument("epoch length m must be positive".into()));
        }
        if self.kind != ScheduleKind::Hsag {
            if !self.hsag_set.is_empty() || self.hsag_freq.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "S and s_i only apply to hsag, not {}",
                    self.kind
                )));
            }
            return Ok(());
        }
        if self.hsag_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("S must be sorted and unique".into()));
        }
        if self.hsag_set.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidArgument(format!("S contains an index >= n = {n}")));
        }
        match &self.hsag_freq {
            Some(Frequency::Every(0)) => {
                Err(Error::InvalidArgument("frequency s_i must be positive".into()))
            }
            Some(Frequency::PerIndex(v)) if v.len() != n => Err(Error::InvalidArgument(format!(
                "per-index frequencies need {n} entries, got {}",
                v.len()
            ))),
            Some(Frequency::PerIndex(v)) if v.contains(&0) => {
                Err(Error::InvalidArgument("frequency s_i must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn frequency_of(&self, i: usize) -> u64 {
        match &self.hsag_freq {
            None => self.epoch_len as u64,
            Some(Frequency::Every(s)) => *s,
            Some(Frequency::PerIndex(v)) => v[i],
        }
    }
}

/// Which physical layout a state uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Snapshot,
    GradTable,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    /// Offset of the entry in the flat table storage.
    Table(usize),
    /// Index of the snapshot group.
    Group(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct GradTable {
    pub(crate) members: Vec<usize>,
    pub(crate) grads: Vec<f64>,
    /// `(1/n) * sum` of the stored gradients, maintained incrementally.
    pub(crate) avg: Vec<f64>,
    /// Anchor points restricted to each member's support, when tracked.
    pub(crate) anchors: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SnapshotGroup {
    pub(crate) period: u64,
    pub(crate) members: Vec<usize>,
    pub(crate) anchor: Vec<f64>,
    pub(crate) grad_sum: Vec<f64>,
}

impl SnapshotGroup {
    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub(crate) fn is_due(&self, t_next: u64) -> bool {
        t_next.is_multiple_of(self.period)
    }

    /// Re-anchors at `x` and recomputes the member gradient sum; returns the
    /// number of component gradients evaluated.
    pub(crate) fn refresh(&mut self, p: &Problem, x: &[f64]) -> u64 {
        self.anchor.clear();
        self.anchor.extend_from_slice(x);
        self.grad_sum = p.gradient_sum(&self.members, &self.anchor);
        self.members.len() as u64
    }
}

/// `(1/n) * sum of the group gradient sums`, reduced in group order.
pub(crate) fn snapshot_average(groups: &[SnapshotGroup], nf: f64) -> Vec<f64> {
    match groups {
        [] => Vec::new(),
        [g] => g.grad_sum.iter().map(|v| v / nf).collect(),
        many => {
            let mut total = vec![0.0; many[0].grad_sum.len()];
            for g in many {
                crate::objective::add_assign(&mut total, &g.grad_sum);
            }
            total.iter().map(|v| v / nf).collect()
        }
    }
}

/// The anchor table `A^t` in its physical representation.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    kind: ScheduleKind,
    n: usize,
    pub(crate) slots: Vec<Slot>,
    pub(crate) table: Option<GradTable>,
    pub(crate) groups: Vec<SnapshotGroup>,
    /// `(1/n) * sum over groups of grad_sum`; empty when there are no groups.
    pub(crate) snap_avg: Vec<f64>,
    epoch_origin: u64,
}

impl ScheduleState {
    /// Initial state `alpha_i = x0` for every `i`. Returns the state and the
    /// number of component gradients evaluated to build it.
    pub fn new(p: &Problem, spec: &ScheduleSpec, x0: &[f64], track_anchors: bool) -> Result<(Self, u64)> {
        let n = p.n();
        spec.validate(n)?;
        if x0.len() != p.dim() {
            return Err(Error::InvalidArgument(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                p.dim()
            )));
        }
        let m = spec.epoch_len as u64;
        let all: Vec<usize> = (0..n).collect();

        let (table_members, groups_spec): (Vec<usize>, Vec<(u64, Vec<usize>)>) = match spec.kind {
            ScheduleKind::Svrg => (Vec::new(), vec![(m, all)]),
            ScheduleKind::Gd => (Vec::new(), vec![(1, all)]),
            ScheduleKind::Saga | ScheduleKind::Sag => (all, Vec::new()),
            ScheduleKind::Hsag => {
                let mut in_set = vec![false; n];
                for &i in &spec.hsag_set {
                    in_set[i] = true;
                }
                let mut by_period: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
                for i in (0..n).filter(|&i| !in_set[i]) {
                    by_period.entry(spec.frequency_of(i)).or_default().push(i);
                }
                (spec.hsag_set.clone(), by_period.into_iter().collect())
            }
        };

        let mut evals = 0u64;
        let mut slots = vec![Slot::Group(usize::MAX); n];

        let table = if table_members.is_empty() {
            None
        } else {
            let mut grads = Vec::new();
            let mut anchors = track_anchors.then(Vec::new);
            let mut buf = Vec::new();
            for &i in &table_members {
                slots[i] = Slot::Table(grads.len());
                let xs = p.gather(i, x0);
                buf.resize(xs.len(), 0.0);
                p.component_gradient_on_support(i, &xs, &mut buf);
                grads.extend_from_slice(&buf);
                if let Some(a) = anchors.as_mut() {
                    a.extend_from_slice(&xs);
                }
            }
            evals += table_members.len() as u64;
            let mut avg = p.gradient_sum(&table_members, x0);
            let nf = n as f64;
            for v in &mut avg {
                *v /= nf;
            }
            Some(GradTable {
                members: table_members,
                grads,
                avg,
                anchors,
            })
        };

        let mut groups = Vec::with_capacity(groups_spec.len());
        for (g, (period, members)) in groups_spec.into_iter().enumerate() {
            for &i in &members {
                slots[i] = Slot::Group(g);
            }
            let mut group = SnapshotGroup {
                period,
                members,
                anchor: Vec::new(),
                grad_sum: Vec::new(),
            };
            evals += group.refresh(p, x0);
            groups.push(group);
        }

        let mut state = ScheduleState {
            kind: spec.kind,
            n,
            slots,
            table,
            groups,
            snap_avg: Vec::new(),
            epoch_origin: 0,
        };
        state.rebuild_snap_avg();
        Ok((state, evals))
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn representation(&self) -> Representation {
        match self.kind {
            ScheduleKind::Svrg | ScheduleKind::Gd => Representation::Snapshot,
            ScheduleKind::Saga | ScheduleKind::Sag => Representation::GradTable,
            ScheduleKind::Hsag => Representation::Hybrid,
        }
    }

    pub fn epoch_origin(&self) -> u64 {
        self.epoch_origin
    }

    pub(crate) fn set_epoch_origin(&mut self, t: u64) {
        self.epoch_origin = t;
    }

    pub fn groups(&self) -> &[SnapshotGroup] {
        &self.groups
    }

    /// Number of reals held in the gradient table (`sum_{i in S} |e_i|`).
    pub fn table_slots(&self) -> usize {
        self.table.as_ref().map_or(0, |t| t.grads.len())
    }

    /// Indices whose anchors are per-example table entries.
    pub fn table_members(&self) -> &[usize] {
        self.table.as_ref().map_or(&[], |t| &t.members)
    }

    pub fn is_table_member(&self, i: usize) -> bool {
        matches!(self.slots[i], Slot::Table(_))
    }

    /// True when the average-gradient vector stays fixed between group
    /// refreshes (no per-step table).
    pub fn has_constant_average(&self) -> bool {
        self.table.is_none()
    }

    /// Average-gradient term `(1/n) sum_i grad f_i(alpha_i)` at coordinate `j`.
    #[inline]
    pub fn avg(&self, j: usize) -> f64 {
        match (&self.table, self.snap_avg.is_empty()) {
            (Some(t), true) => t.avg[j],
            (None, _) => self.snap_avg[j],
            (Some(t), false) => t.avg[j] + self.snap_avg[j],
        }
    }

    pub fn avg_dense(&self) -> Vec<f64> {
        (0..self.snap_avg.len().max(self.table.as_ref().map_or(0, |t| t.avg.len())))
            .map(|j| self.avg(j))
            .collect()
    }

    pub(crate) fn rebuild_snap_avg(&mut self) {
        self.snap_avg = snapshot_average(&self.groups, self.n as f64);
    }

    /// Writes `grad f_i(alpha_i)` on `e_i` into `out`. Returns the number of
    /// gradient evaluations performed (0 for table entries).
    pub fn anchor_gradient(&self, p: &Problem, i: usize, out: &mut [f64], scratch: &mut Vec<f64>) -> u64 {
        match self.slots[i] {
            Slot::Table(off) => {
                let t = self.table.as_ref().expect("table slot without table");
                out.copy_from_slice(&t.grads[off..off + out.len()]);
                0
            }
            Slot::Group(g) => {
                let anchor = &self.groups[g].anchor;
                scratch.clear();
                scratch.extend(p.support(i).iter().map(|&j| anchor[j]));
                p.component_gradient_on_support(i, scratch, out);
                1
            }
        }
    }

    /// `alpha_i` restricted to `e_i`, if it is known.
    pub fn anchor_on_support(&self, p: &Problem, i: usize) -> Option<Vec<f64>> {
        match self.slots[i] {
            Slot::Table(off) => {
                let t = self.table.as_ref()?;
                let a = t.anchors.as_ref()?;
                Some(a[off..off + p.support(i).len()].to_vec())
            }
            Slot::Group(g) => Some(p.gather(i, &self.groups[g].anchor)),
        }
    }

    /// Whether step `t`'s sampled index updates its own entry (SAGA rule).
    #[inline]
    pub fn uses_current_index_rule(&self, i: usize) -> bool {
        matches!(self.kind, ScheduleKind::Saga | ScheduleKind::Hsag) && self.is_table_member(i)
    }

    /// Replaces table entry `i` with `grad` (its anchor being `anchor_xs` on
    /// `e_i`) and updates the running average on `e_i`.
    pub fn set_entry(&mut self, p: &Problem, i: usize, grad: &[f64], anchor_xs: &[f64]) {
        let Slot::Table(off) = self.slots[i] else {
            panic!("example {i} has no table entry");
        };
        let nf = self.n as f64;
        let t = self.table.as_mut().expect("table slot without table");
        let support = p.support(i);
        for (k, &j) in support.iter().enumerate() {
            let old = t.grads[off + k];
            t.avg[j] += kernel::table_delta(grad[k], old, nf);
            t.grads[off + k] = grad[k];
        }
        if let Some(a) = t.anchors.as_mut() {
            a[off..off + support.len()].copy_from_slice(anchor_xs);
        }
    }

    pub fn groups_due(&self, t_next: u64) -> bool {
        self.groups.iter().any(|g| g.is_due(t_next))
    }

    /// Re-anchors every group whose period divides `t_next` at `x_next`.
    pub fn refresh_groups(&mut self, p: &Problem, t_next: u64, x_next: &[f64]) -> u64 {
        let mut evals = 0;
        let mut any = false;
        for g in &mut self.groups {
            if g.is_due(t_next) {
                evals += g.refresh(p, x_next);
                any = true;
            }
        }
        if any {
            self.rebuild_snap_avg();
        }
        evals
    }

    /// Exact average of the stored gradients, recomputed from the table.
    pub fn recomputed_table_avg(&self, p: &Problem) -> Option<Vec<f64>> {
        let t = self.table.as_ref()?;
        let mut sum = vec![0.0; p.dim()];
        for &i in &t.members {
            let Slot::Table(off) = self.slots[i] else { unreachable!() };
            for (k, &j) in p.support(i).iter().enumerate() {
                sum[j] += t.grads[off + k];
            }
        }
        let nf = self.n as f64;
        Some(sum.into_iter().map(|v| v / nf).collect())
    }

    pub fn table_avg(&self) -> Option<&[f64]> {
        self.table.as_ref().map(|t| t.avg.as_slice())
    }

    /// Three-term direction `grad f_i(x) - grad f_i(alpha_i) + avg`, dense.
    pub fn vr_direction(&self, p: &Problem, i: usize, grad_at_x: &[f64]) -> Vec<f64> {
        let support = p.support(i);
        let mut ga = vec![0.0; support.len()];
        self.anchor_gradient(p, i, &mut ga, &mut Vec::new());
        let mut dir = self.avg_dense();
        for (k, &j) in support.iter().enumerate() {
            dir[j] += grad_at_x[k] - ga[k];
        }
        dir
    }

    /// Applies the schedule rule for step `t` with dense iterates. `x_t` is
    /// the iterate the step was computed at, `x_next` the iterate after it,
    /// and `i_next` the index drawn for step `t + 1` (needed by SAG only).
    /// Returns the number of gradient evaluations.
    pub fn update(
        &mut self,
        p: &Problem,
        t: u64,
        i_t: usize,
        i_next: Option<usize>,
        x_t: &[f64],
        x_next: &[f64],
    ) -> Result<u64> {
        let mut evals = 0;
        if self.uses_current_index_rule(i_t) {
            let xs = p.gather(i_t, x_t);
            let mut g = vec![0.0; xs.len()];
            p.component_gradient_on_support(i_t, &xs, &mut g);
            evals += 1;
            self.set_entry(p, i_t, &g, &xs);
        }
        if self.kind == ScheduleKind::Sag {
            let i = i_next.ok_or_else(|| Error::InvalidArgument("sag needs the next index".into()))?;
            let xs = p.gather(i, x_next);
            let mut g = vec![0.0; xs.len()];
            p.component_gradient_on_support(i, &xs, &mut g);
            evals += 1;
            self.set_entry(p, i, &g, &xs);
        }
        evals += self.refresh_groups(p, t + 1, x_next);
        Ok(evals)
    }

    /// `G = (1/n) sum_{i in S} D_{f_i}(alpha_i, x_star)` over the table
    /// members. Requires anchor tracking when the table is non-empty.
    pub fn lyapunov_g(&self, p: &Problem, x_star: &[f64]) -> Option<f64> {
        let t = match &self.table {
            None => return Some(0.0),
            Some(t) => t,
        };
        let anchors = t.anchors.as_ref()?;
        let entries = t.members.iter().map(|&i| {
            let Slot::Table(off) = self.slots[i] else { unreachable!() };
            (i, &anchors[off..off + p.support(i).len()])
        });
        Some(p.lyapunov_g(entries, x_star))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, LabelModel, SyntheticSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(n: usize, d: usize, k: usize) -> Problem {
        let ds = generate_synthetic(&SyntheticSpec {
            n,
            d,
            nnz_per_row: k,
            label_model: LabelModel::default(),
            seed: 11,
        })
        .unwrap();
        Problem::new(ds, 1.0 / n as f64).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn bias_flags() {
        assert!(ScheduleKind::Sag.is_biased());
        for k in [ScheduleKind::Svrg, ScheduleKind::Saga, ScheduleKind::Gd, ScheduleKind::Hsag] {
            assert!(!k.is_biased());
        }
        assert!(!ScheduleSpec::hsag(4, vec![0, 1], None).is_biased());
    }

    #[test]
    fn representations_and_memory() {
        let p = problem(20, 10, 3);
        let x0 = vec![0.0; 10];
        let (svrg, evals) = ScheduleState::new(&p, &ScheduleSpec::svrg(40), &x0, false).unwrap();
        assert_eq!(svrg.representation(), Representation::Snapshot);
        assert_eq!(svrg.table_slots(), 0);
        assert_eq!(evals, 20);
        let (saga, _) = ScheduleState::new(&p, &ScheduleSpec::saga(40), &x0, false).unwrap();
        assert_eq!(saga.representation(), Representation::GradTable);
        assert_eq!(saga.table_slots(), p.data().total_nnz());
        let s: Vec<usize> = (0..10).collect();
        let nnz_s: usize = s.iter().map(|&i| p.support(i).len()).sum();
        let (h, _) = ScheduleState::new(&p, &ScheduleSpec::hsag(40, s, None), &x0, false).unwrap();
        assert_eq!(h.representation(), Representation::Hybrid);
        assert_eq!(h.table_slots(), nnz_s);
        assert_eq!(h.groups().len(), 1);
    }

    #[test]
    fn spec_validation() {
        let p = problem(5, 4, 2);
        let x0 = vec![0.0; 4];
        assert!(ScheduleState::new(&p, &ScheduleSpec::svrg(0), &x0, false).is_err());
        assert!(ScheduleState::new(&p, &ScheduleSpec::hsag(3, vec![2, 1], None), &x0, false).is_err());
        assert!(ScheduleState::new(&p, &ScheduleSpec::hsag(3, vec![7], None), &x0, false).is_err());
        assert!(ScheduleState::new(
            &p,
            &ScheduleSpec::hsag(3, vec![], Some(Frequency::Every(0))),
            &x0,
            false
        )
        .is_err());
        assert!(ScheduleState::new(
            &p,
            &ScheduleSpec::hsag(3, vec![], Some(Frequency::PerIndex(vec![1, 2]))),
            &x0,
            false
        )
        .is_err());
        let mut bad = ScheduleSpec::svrg(3);
        bad.hsag_set = vec![0];
        assert!(ScheduleState::new(&p, &bad, &x0, false).is_err());
        assert!(ScheduleState::new(&p, &ScheduleSpec::svrg(3), &[0.0; 3], false).is_err());
    }

    #[test]
    fn direction_at_anchor_is_full_gradient() {
        let p = problem(7, 5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(&mut rng, 5);
        let full = p.full_gradient(&x);
        for spec in [ScheduleSpec::svrg(3), ScheduleSpec::saga(3), ScheduleSpec::gd(3)] {
            let (st, _) = ScheduleState::new(&p, &spec, &x, false).unwrap();
            for i in 0..7 {
                let gx = p.component_gradient(i, &x).values;
                let dir = st.vr_direction(&p, i, &gx);
                for j in 0..5 {
                    assert!((dir[j] - full[j]).abs() <= 1e-15, "{:?}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn gd_direction_is_exact_gradient() {
        let p = problem(6, 4, 2);
        let x0 = vec![0.1, -0.2, 0.3, 0.0];
        let (mut st, _) = ScheduleState::new(&p, &ScheduleSpec::gd(1), &x0, false).unwrap();
        let x1: Vec<f64> = x0.iter().map(|v| v * 0.5 + 0.01).collect();
        st.update(&p, 0, 2, None, &x0, &x1).unwrap();
        let gx = p.component_gradient(4, &x1).values;
        let dir = st.vr_direction(&p, 4, &gx);
        assert_eq!(dir, p.full_gradient(&x1));
    }

    #[test]
    fn svrg_off_boundary_leaves_state_unchanged() {
        let p = problem(6, 4, 2);
        let x0 = vec![0.0; 4];
        let (mut st, _) = ScheduleState::new(&p, &ScheduleSpec::svrg(5), &x0, false).unwrap();
        let before = (st.groups()[0].anchor().to_vec(), st.avg_dense());
        let x1 = vec![1.0; 4];
        let evals = st.update(&p, 1, 3, None, &x0, &x1).unwrap();
        assert_eq!(evals, 0);
        assert_eq!(before, (st.groups()[0].anchor().to_vec(), st.avg_dense()));
        // t = 4 closes the epoch (5 | 4 + 1)
        let evals = st.update(&p, 4, 3, None, &x0, &x1).unwrap();
        assert_eq!(evals, 6);
        assert_eq!(st.groups()[0].anchor(), &x1[..]);
    }

    #[test]
    fn saga_incremental_average_matches_recompute() {
        let p = problem(9, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = random_point(&mut rng, 6);
        let (mut st, _) = ScheduleState::new(&p, &ScheduleSpec::saga(9), &x0, false).unwrap();
        let mut x = x0.clone();
        for t in 0..200u64 {
            let i = rng.random_range(0..9);
            let before = st.table_avg().unwrap().to_vec();
            let old = {
                let mut g = vec![0.0; p.support(i).len()];
                st.anchor_gradient(&p, i, &mut g, &mut Vec::new());
                g
            };
            let new = p.component_gradient(i, &x).values;
            let x_next = random_point(&mut rng, 6);
            st.update(&p, t, i, None, &x, &x_next).unwrap();
            let after = st.table_avg().unwrap();
            for (k, &j) in p.support(i).iter().enumerate() {
                let expect = before[j] + (new[k] - old[k]) / 9.0;
                assert!((after[j] - expect).abs() <= 1e-15);
            }
            let exact = st.recomputed_table_avg(&p).unwrap();
            for j in 0..6 {
                assert!((after[j] - exact[j]).abs() <= 1e-10);
            }
            x = x_next;
        }
    }

    #[test]
    fn sag_updates_the_next_index() {
        let p = problem(5, 4, 2);
        let x0 = vec![0.0; 4];
        let (mut st, _) = ScheduleState::new(&p, &ScheduleSpec::sag(5), &x0, true).unwrap();
        let x1 = vec![0.5; 4];
        assert!(st.update(&p, 0, 1, None, &x0, &x1).is_err());
        st.update(&p, 0, 1, Some(3), &x0, &x1).unwrap();
        assert_eq!(st.anchor_on_support(&p, 3).unwrap(), p.gather(3, &x1));
        assert_eq!(st.anchor_on_support(&p, 1).unwrap(), p.gather(1, &x0));
    }

    #[test]
    fn hsag_groups_by_frequency() {
        let p = problem(8, 5, 2);
        let x0 = vec![0.0; 5];
        let freq = Frequency::PerIndex(vec![2, 3, 2, 3, 99, 99, 2, 2]);
        let spec = ScheduleSpec::hsag(6, vec![4, 5], Some(freq));
        let (mut st, _) = ScheduleState::new(&p, &spec, &x0, true).unwrap();
        assert_eq!(st.groups().len(), 2);
        assert_eq!(st.groups()[0].members(), &[0, 2, 6, 7]);
        assert_eq!(st.groups()[1].members(), &[1, 3]);
        let x1 = vec![1.0; 5];
        // t + 1 = 2 re-anchors the period-2 group only
        st.update(&p, 1, 0, None, &x0, &x1).unwrap();
        assert_eq!(st.groups()[0].anchor(), &x1[..]);
        assert_eq!(st.groups()[1].anchor(), &x0[..]);
        // index 4 is in S: its own entry moves to x_t
        st.update(&p, 3, 4, None, &x1, &x0).unwrap();
        assert_eq!(st.anchor_on_support(&p, 4).unwrap(), p.gather(4, &x1));
    }

    #[test]
    fn lyapunov_needs_tracking() {
        let p = problem(6, 4, 2);
        let x0 = vec![0.0; 4];
        let (st, _) = ScheduleState::new(&p, &ScheduleSpec::saga(6), &x0, false).unwrap();
        assert!(st.lyapunov_g(&p, &x0).is_none());
        let (st, _) = ScheduleState::new(&p, &ScheduleSpec::saga(6), &x0, true).unwrap();
        assert_eq!(st.lyapunov_g(&p, &x0), Some(0.0));
        let (st, _) = ScheduleState::new(&p, &ScheduleSpec::svrg(6), &x0, false).unwrap();
        assert_eq!(st.lyapunov_g(&p, &[1.0; 4]), Some(0.0));
    }
}

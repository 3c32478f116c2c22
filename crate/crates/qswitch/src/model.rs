//! Core domain types and the exact slot-update queue dynamics.
//!
//! Everything here is protocol-agnostic and free of randomness: symmetric
//! pair-indexed matrices, switch parameters, per-slot queue state and events,
//! live EPR pairs, requests, and the pure `step_queues` update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, zero-diagonal matrix over unordered node pairs `(i, j)`, `i < j`.
///
/// Stores only the strict upper triangle in lexicographic pair order, so
/// symmetry and the zero diagonal hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMatrix<T> {
    k: usize,
    data: Vec<T>,
}

impl<T: Clone + Default> PairMatrix<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            data: vec![T::default(); k * (k - 1) / 2],
        }
    }
}

impl<T> PairMatrix<T> {
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        Self {
            k,
            data: pair_iter(k).map(|(i, j)| f(i, j)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_pairs(&self) -> usize {
        self.data.len()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        assert!(i != j && i < self.k && j < self.k, "invalid pair ({i},{j})");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // offset of row a plus column within the row
        a * self.k - a * (a + 1) / 2 + (b - a - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> T
    where
        T: Copy,
    {
        self.data[self.idx(i, j)]
    }

    pub fn get_ref(&self, i: usize, j: usize) -> &T {
        &self.data[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let ix = self.idx(i, j);
        self.data[ix] = v;
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        let ix = self.idx(i, j);
        &mut self.data[ix]
    }

    /// Iterate `((i, j), &value)` over unordered pairs in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        pair_iter(self.k).zip(self.data.iter())
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn map<U: Clone + Default>(&self, mut f: impl FnMut(&T) -> U) -> PairMatrix<U> {
        PairMatrix {
            k: self.k,
            data: self.data.iter().map(|v| f(v)).collect(),
        }
    }
}

impl PairMatrix<u64> {
    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    /// Sum of entries in column `j` (equivalently row `j`): `Σ_i m[i][j]`.
    pub fn column_sum(&self, j: usize) -> u64 {
        (0..self.k).filter(|&i| i != j).map(|i| self.get(i, j)).sum()
    }
}

impl PairMatrix<f64> {
    pub fn total_f(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn column_sum_f(&self, j: usize) -> f64 {
        (0..self.k).filter(|&i| i != j).map(|i| self.get(i, j)).sum()
    }
}

/// Unordered pairs of `0..k` in lexicographic order.
pub fn pair_iter(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

/// Symmetric nonnegative request-rate matrix (requests per slot per pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    lambda: PairMatrix<f64>,
}

impl RateMatrix {
    pub fn new(lambda: PairMatrix<f64>) -> Result<Self> {
        for ((i, j), &v) in lambda.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "rate for pair ({i},{j}) must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self { lambda })
    }

    /// Same rate for every end-node pair.
    pub fn uniform(k: usize, rate: f64) -> Result<Self> {
        Self::new(PairMatrix::from_fn(k, |_, _| rate))
    }

    pub fn k(&self) -> usize {
        self.lambda.k()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lambda.get(i, j)
    }

    pub fn matrix(&self) -> &PairMatrix<f64> {
        &self.lambda
    }

    /// `Σ_i λ_ij` over the partners of node `j`.
    pub fn column_sum(&self, j: usize) -> f64 {
        self.lambda.column_sum_f(j)
    }

    /// Sum over unordered pairs.
    pub fn total(&self) -> f64 {
        self.lambda.total_f()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.lambda.map(|v| v * alpha))
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.values().all(|&v| v == 0.0)
    }
}

/// Physical and scheduling parameters of the switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    /// Number of end nodes / interfaces.
    pub k: usize,
    /// Per-interface link generation success probability per slot.
    pub p: Vec<f64>,
    /// Entanglement swapping success probability.
    pub q: f64,
    /// Max swap operations per slot; `None` means unbounded.
    pub max_swaps_per_slot: Option<u64>,
    /// Memory slots per interface; `None` means unbounded.
    pub mem_per_interface: Option<u64>,
    /// Dephasing time constant in ns; `f64::INFINITY` disables dephasing.
    pub t2_ns: f64,
    /// Slot duration in ns.
    pub slot_ns: u64,
    /// Pairs with fidelity below this are discarded.
    pub fidelity_threshold: f64,
}

impl SwitchParams {
    /// Uniform link probability, unbounded swaps and memory, no dephasing.
    pub fn uniform(k: usize, p: f64, q: f64) -> Self {
        Self {
            k,
            p: vec![p; k],
            q,
            max_swaps_per_slot: None,
            mem_per_interface: None,
            t2_ns: f64::INFINITY,
            slot_ns: 1000,
            fidelity_threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 end nodes, got {}",
                self.k
            )));
        }
        if self.p.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "p has {} entries for {} interfaces",
                self.p.len(),
                self.k
            )));
        }
        for (k, &p) in self.p.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("p[{k}] = {p} not in [0,1]")));
            }
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidInput(format!("q = {} not in (0,1]", self.q)));
        }
        if self.max_swaps_per_slot == Some(0) {
            return Err(Error::InvalidInput("W must be >= 1 when bounded".into()));
        }
        if self.mem_per_interface == Some(0) {
            return Err(Error::InvalidInput(
                "mem_per_interface must be >= 1 when bounded".into(),
            ));
        }
        if !(self.t2_ns > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t2_ns = {} must be positive (possibly infinite)",
                self.t2_ns
            )));
        }
        if self.slot_ns == 0 {
            return Err(Error::InvalidInput("slot_ns must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.fidelity_threshold) {
            return Err(Error::InvalidInput(format!(
                "fidelity_threshold = {} not in [0.5, 1]",
                self.fidelity_threshold
            )));
        }
        Ok(())
    }
}

/// Per-slot counts: pending requests `U`, stored end-to-end pairs `E`, stored
/// link-level pairs `E0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueState {
    pub u: PairMatrix<u64>,
    pub e: PairMatrix<u64>,
    pub e0: Vec<u64>,
}

impl QueueState {
    pub fn new(k: usize) -> Self {
        Self {
            u: PairMatrix::new(k),
            e: PairMatrix::new(k),
            e0: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.u.k()
    }
}

/// Events of one slot: arrivals `A`, link generations `C0`, swap attempts `F`,
/// swap successes `R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotEvents {
    pub a: PairMatrix<u64>,
    pub c0: Vec<u64>,
    pub f: PairMatrix<u64>,
    pub r: PairMatrix<u64>,
}

impl SlotEvents {
    pub fn new(k: usize) -> Self {
        Self {
            a: PairMatrix::new(k),
            c0: vec![0; k],
            f: PairMatrix::new(k),
            r: PairMatrix::new(k),
        }
    }
}

/// One slot of the queue dynamics:
///
/// ```text
/// U'[i][j] = max(U[i][j] - E[i][j] - R[i][j], 0) + A[i][j]
/// E'[i][j] = max(E[i][j] + R[i][j] - U[i][j], 0)
/// E0'[i]   = E0[i] - Σ_j F[i][j] + C0[i]
/// ```
///
/// `C0` must already be clamped to memory capacity by the caller's admission
/// policy. Attempts may draw on pairs generated in the same slot, so the
/// interface budget is `E0[i] + C0[i]`.
pub fn step_queues(state: &QueueState, ev: &SlotEvents) -> Result<QueueState> {
    let k = state.k();
    for ((i, j), &r) in ev.r.iter() {
        let f = ev.f.get(i, j);
        if r > f {
            return Err(Error::Contract(format!(
                "R[{i}][{j}] = {r} exceeds F[{i}][{j}] = {f}"
            )));
        }
    }
    for i in 0..k {
        let consumed = ev.f.column_sum(i);
        let budget = state.e0[i] + ev.c0[i];
        if consumed > budget {
            return Err(Error::Contract(format!(
                "interface {i}: {consumed} attempts exceed available {budget} link pairs"
            )));
        }
    }

    let mut next = QueueState::new(k);
    for (i, j) in pair_iter(k) {
        let u = state.u.get(i, j);
        let e = state.e.get(i, j);
        let r = ev.r.get(i, j);
        let a = ev.a.get(i, j);
        next.u.set(i, j, u.saturating_sub(e + r) + a);
        next.e.set(i, j, (e + r).saturating_sub(u));
    }
    for i in 0..k {
        next.e0[i] = state.e0[i] + ev.c0[i] - ev.f.column_sum(i);
    }
    Ok(next)
}

/// Total pending requests `Σ_{i<j} U[i][j]`.
pub fn total_backlog(state: &QueueState) -> u64 {
    state.u.total()
}

/// Which end of an EPR pair a qubit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairKind {
    /// Link-level pair between the switch and one end node. Qubit 0 sits in
    /// switch memory, qubit 1 at the end node.
    Link { iface: usize },
    /// End-to-end pair between nodes `a < b`; both qubits at end nodes.
    EndToEnd { a: usize, b: usize },
}

/// A live EPR pair with per-qubit birth timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EprPair {
    pub id: u64,
    pub kind: PairKind,
    /// Creation timestamp of each qubit, ns.
    pub qubit_birth_ns: [u64; 2],
    /// Dwell already accrued by qubits measured away in earlier swaps, ns.
    pub frozen_dwell_ns: u64,
    /// Target pair-tag assigned by the stationary protocol (link pairs only).
    pub label: Option<(usize, usize)>,
}

impl EprPair {
    pub fn link(id: u64, iface: usize, now_ns: u64) -> Self {
        Self {
            id,
            kind: PairKind::Link { iface },
            qubit_birth_ns: [now_ns, now_ns],
            frozen_dwell_ns: 0,
            label: None,
        }
    }

    /// Birth of the switch-side qubit (link pairs).
    pub fn switch_birth_ns(&self) -> u64 {
        self.qubit_birth_ns[0]
    }

    /// Total dwell across live qubits plus dwell frozen at swap time, ns.
    pub fn total_dwell_ns(&self, now_ns: u64) -> u64 {
        let live: u64 = self
            .qubit_birth_ns
            .iter()
            .map(|&b| now_ns.saturating_sub(b))
            .sum();
        live + self.frozen_dwell_ns
    }

    /// Fidelity at `now_ns` under dephasing with time constant `t2_ns`.
    pub fn fidelity(&self, now_ns: u64, t2_ns: f64) -> f64 {
        crate::physics::fidelity_from_total_dwell(self.total_dwell_ns(now_ns) as f64, t2_ns)
    }
}

/// An entanglement request between a pair of end nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub pair: (usize, usize),
    pub arrival_ns: u64,
    pub arrival_slot: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev3() -> SlotEvents {
        SlotEvents::new(3)
    }

    #[test]
    fn pair_matrix_indexing_roundtrip() {
        let mut m = PairMatrix::<u64>::new(5);
        let mut v = 1;
        for (i, j) in pair_iter(5) {
            m.set(i, j, v);
            v += 1;
        }
        let mut seen = 0;
        for (i, j) in pair_iter(5) {
            assert_eq!(m.get(i, j), m.get(j, i));
            seen += 1;
        }
        assert_eq!(seen, 10);
        assert_eq!(m.total(), (1..=10).sum::<u64>());
        assert_eq!(m.column_sum(0), m.get(0, 1) + m.get(0, 2) + m.get(0, 3) + m.get(0, 4));
    }

    #[test]
    #[should_panic]
    fn pair_matrix_rejects_diagonal() {
        let m = PairMatrix::<u64>::new(3);
        m.get(1, 1);
    }

    #[test]
    fn step_all_zero_is_identity() {
        let s = QueueState::new(3);
        let next = step_queues(&s, &ev3()).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn step_update_equation_direct() {
        // U_12 = 3, R_12 = 2, A_12 = 1 -> U' = max(3-0-2,0)+1 = 2
        let mut s = QueueState::new(3);
        s.u.set(0, 1, 3);
        s.e0 = vec![2, 2, 0];
        let mut ev = ev3();
        ev.f.set(0, 1, 2);
        ev.r.set(0, 1, 2);
        ev.a.set(0, 1, 1);
        let next = step_queues(&s, &ev).unwrap();
        assert_eq!(next.u.get(0, 1), 2);
        assert_eq!(next.e.get(0, 1), 0);
        assert_eq!(next.e0, vec![0, 0, 0]);
    }

    #[test]
    fn step_surplus_goes_to_e() {
        // U_12 = 1, R_12 = 3 -> U' = 0, E' = max(0+3-1,0) = 2.
        // Cross-check with a one-slot token walk: three fresh pairs serve the
        // single pending request, the two unmatched ones are stored.
        let mut s = QueueState::new(3);
        s.u.set(0, 1, 1);
        s.e0 = vec![3, 3, 0];
        let mut ev = ev3();
        ev.f.set(0, 1, 3);
        ev.r.set(0, 1, 3);
        let next = step_queues(&s, &ev).unwrap();
        assert_eq!(next.u.get(0, 1), 0);
        assert_eq!(next.e.get(0, 1), 2);

        let mut tokens = 3u64; // successes
        let mut pending = 1u64;
        let served = tokens.min(pending);
        tokens -= served;
        pending -= served;
        assert_eq!(pending, next.u.get(0, 1));
        assert_eq!(tokens, next.e.get(0, 1));
    }

    #[test]
    fn step_rejects_r_above_f() {
        let mut s = QueueState::new(3);
        s.e0 = vec![1, 1, 0];
        let mut ev = ev3();
        ev.f.set(0, 1, 1);
        ev.r.set(0, 1, 2);
        assert!(matches!(step_queues(&s, &ev), Err(Error::Contract(_))));
    }

    #[test]
    fn step_rejects_overdrawn_interface() {
        let s = QueueState::new(3);
        let mut ev = ev3();
        ev.f.set(0, 1, 1);
        assert!(matches!(step_queues(&s, &ev), Err(Error::Contract(_))));
    }

    #[test]
    fn attempts_may_use_same_slot_generation() {
        let s = QueueState::new(3);
        let mut ev = ev3();
        ev.c0 = vec![1, 1, 0];
        ev.f.set(0, 1, 1);
        let next = step_queues(&s, &ev).unwrap();
        assert_eq!(next.e0, vec![0, 0, 0]);
    }

    #[test]
    fn backlog_sums_pairs() {
        let mut s = QueueState::new(3);
        assert_eq!(total_backlog(&s), 0);
        s.u.set(0, 1, 2);
        s.u.set(0, 2, 3);
        assert_eq!(total_backlog(&s), 5);
        // independent re-summation path
        let by_columns: u64 = (0..3).map(|j| s.u.column_sum(j)).sum();
        assert_eq!(by_columns, 2 * total_backlog(&s));
    }

    #[test]
    fn rate_matrix_validation() {
        assert!(RateMatrix::uniform(3, -0.1).is_err());
        assert!(RateMatrix::uniform(3, f64::NAN).is_err());
        let r = RateMatrix::uniform(3, 0.2).unwrap();
        assert_eq!(r.column_sum(0), 0.4);
        assert_eq!(r.get(2, 1), 0.2);
    }

    #[test]
    fn params_validation() {
        let mut p = SwitchParams::uniform(3, 0.9, 0.9);
        p.validate().unwrap();
        p.q = 0.0;
        assert!(p.validate().is_err());
        p.q = 0.9;
        p.fidelity_threshold = 0.4;
        assert!(p.validate().is_err());
    }

    #[test]
    fn epr_pair_dwell_accounting() {
        let mut pair = EprPair::link(0, 1, 1000);
        assert_eq!(pair.total_dwell_ns(1000), 0);
        assert_eq!(pair.total_dwell_ns(1500), 1000); // both qubits dwell
        pair.frozen_dwell_ns = 300;
        assert_eq!(pair.total_dwell_ns(1500), 1300);
        assert_eq!(pair.fidelity(1500, f64::INFINITY), 1.0);
    }
}

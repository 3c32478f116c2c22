//! Scheduling protocols: a common scheduler abstraction plus the stationary,
//! max-weight and on-demand families, with qubit-selection (YQF/OQF) and
//! request-ordering (FIFO) policies.

mod maxweight;
mod on_demand;
mod stationary;

pub use maxweight::{solve_mw, MaxWeight, MaxWeightState};
pub use on_demand::{on_demand_decide, slackness_product, OnDemand};
pub use stationary::{Stationary, StationaryState};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pair_iter, EprPair, PairMatrix, Request};
use crate::stochastic::RngStreams;

/// Which stored qubit a swap consumes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitPolicy {
    /// Youngest qubit first.
    Yqf,
    /// Oldest qubit first.
    Oqf,
}

/// Order in which requests are matched to pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestPolicy {
    Fifo,
}

/// Order in which the on-demand greedy visits pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisitOrder {
    Lexicographic,
    ReverseLexicographic,
}

impl Default for VisitOrder {
    fn default() -> Self {
        VisitOrder::Lexicographic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Stationary,
    StationaryDiscard,
    Maxweight,
    MaxweightDiscard,
    OnDemand,
}

impl ProtocolKind {
    pub fn discards_periodically(self) -> bool {
        matches!(self, ProtocolKind::StationaryDiscard | ProtocolKind::MaxweightDiscard)
    }

    /// Whether the protocol serves arrivals mid-slot by default.
    pub fn immediate_by_default(self) -> bool {
        matches!(
            self,
            ProtocolKind::Stationary | ProtocolKind::StationaryDiscard | ProtocolKind::OnDemand
        )
    }
}

/// One scheduled swap: the two concrete link pairs consumed to attempt an
/// end-to-end pair for `pair`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapAttempt {
    pub pair: (usize, usize),
    /// Link pair consumed on the lower-indexed interface.
    pub left_id: u64,
    /// Link pair consumed on the higher-indexed interface.
    pub right_id: u64,
}

/// Boundary decision of a protocol for one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerDecision {
    /// Swap-attempt counts per pair.
    pub f: PairMatrix<u64>,
    /// Concrete pairs backing each attempt; lengths match `f`.
    pub attempts: Vec<SwapAttempt>,
    /// Set on *-discard protocols at period boundaries.
    pub discard_now: bool,
}

impl SchedulerDecision {
    pub fn idle(k: usize) -> Self {
        Self {
            f: PairMatrix::new(k),
            attempts: Vec::new(),
            discard_now: false,
        }
    }
}

/// Read-only view of the switch handed to a protocol at decision time.
/// Link stores are kept in birth order (oldest at the front).
pub struct DecisionCtx<'a> {
    pub t: u64,
    /// Requests eligible for boundary service (pending at slot start).
    pub eligible_u: &'a PairMatrix<u64>,
    /// Live link pairs per interface, oldest first.
    pub links: &'a [VecDeque<EprPair>],
    pub qubit_policy: QubitPolicy,
    /// Remaining swap budget this slot, when W is bounded.
    pub budget: Option<u64>,
}

impl DecisionCtx<'_> {
    pub fn e0_counts(&self) -> Vec<u64> {
        self.links.iter().map(|v| v.len() as u64).collect()
    }
}

/// The scheduling brain driven by the engine once per slot.
pub trait Scheduler {
    fn kind(&self) -> ProtocolKind;

    /// Label a freshly admitted link pair (stationary protocols).
    fn label_fresh(
        &mut self,
        _iface: usize,
        _pair_id: u64,
        _slot: u64,
        _streams: &RngStreams,
    ) -> Option<(usize, usize)> {
        None
    }

    /// Boundary decision. The engine consumes the returned attempts.
    fn decide(&mut self, ctx: &DecisionCtx<'_>) -> SchedulerDecision;

    /// Pick two link pairs for an immediate mid-slot swap serving `pair`,
    /// when the protocol supports immediate service and has eligible pairs.
    fn immediate_pick(
        &mut self,
        _pair: (usize, usize),
        _links: &[VecDeque<EprPair>],
        _policy: QubitPolicy,
    ) -> Option<(u64, u64)> {
        None
    }

    /// Called for every link pair leaving memory (consumed or discarded).
    fn forget(&mut self, _iface: usize, _pair_id: u64) {}

    /// True when all stored pairs must be discarded after slot `t`'s swaps.
    fn discard_at_end(&self, _t: u64) -> bool {
        false
    }

    /// Whether queued requests may be matched at slot `t`'s boundary.
    /// Max-weight idles between decision slots; everything else serves every
    /// slot.
    fn serves_at(&self, _t: u64) -> bool {
        true
    }
}

/// Pick `n` link pairs from `candidates` by the switch-side qubit birth:
/// youngest first under YQF, oldest first under OQF, ties by id.
pub fn select_qubits(policy: QubitPolicy, candidates: &[&EprPair], n: usize) -> Result<Vec<u64>> {
    if candidates.len() < n {
        return Err(Error::Contract(format!(
            "requested {n} qubits from {} candidates",
            candidates.len()
        )));
    }
    let mut order: Vec<&EprPair> = candidates.to_vec();
    match policy {
        QubitPolicy::Oqf => order.sort_by_key(|p| (p.switch_birth_ns(), p.id)),
        QubitPolicy::Yqf => order.sort_by_key(|p| (std::cmp::Reverse(p.switch_birth_ns()), p.id)),
    }
    Ok(order.iter().take(n).map(|p| p.id).collect())
}

/// The `n` earliest requests by arrival time, ties by id.
pub fn select_requests(queue: &[Request], n: usize) -> Vec<Request> {
    let mut order: Vec<&Request> = queue.iter().collect();
    order.sort_by_key(|r| (r.arrival_ns, r.id));
    order.into_iter().take(n).cloned().collect()
}

/// Truncate an attempt matrix to at most `budget` total attempts, keeping the
/// largest-weight pairs first (ties by lexicographic pair order).
pub fn truncate_to_budget(f: &mut PairMatrix<u64>, weights: &PairMatrix<u64>, budget: u64) {
    if f.total() <= budget {
        return;
    }
    let k = f.k();
    let mut order: Vec<(usize, usize)> = pair_iter(k).collect();
    order.sort_by_key(|&(i, j)| (std::cmp::Reverse(weights.get(i, j)), i, j));
    let mut remaining = budget;
    let mut truncated = PairMatrix::new(k);
    for (i, j) in order {
        let take = f.get(i, j).min(remaining);
        truncated.set(i, j, take);
        remaining -= take;
    }
    *f = truncated;
}

/// Turn an attempt-count matrix into concrete attempts, drawing from each
/// interface's live pairs in policy order (stores are birth-ordered, so YQF
/// takes from the back and OQF from the front). The caller guarantees
/// `Σ_i f_ij <= |links[j]|`.
pub fn choose_attempts(
    f: &PairMatrix<u64>,
    links: &[VecDeque<EprPair>],
    policy: QubitPolicy,
) -> Result<Vec<SwapAttempt>> {
    let k = f.k();
    // per-interface ids, reversed so pop() consumes in policy order
    let mut pool: Vec<Vec<u64>> = Vec::with_capacity(k);
    for (iface, store) in links.iter().enumerate() {
        let needed = f.column_sum(iface) as usize;
        if needed > store.len() {
            return Err(Error::Contract(format!(
                "interface {iface}: {needed} attempts but only {} link pairs",
                store.len()
            )));
        }
        let mut ids: Vec<u64> = match policy {
            QubitPolicy::Yqf => store.iter().rev().take(needed).map(|p| p.id).collect(),
            QubitPolicy::Oqf => store.iter().take(needed).map(|p| p.id).collect(),
        };
        ids.reverse();
        pool.push(ids);
    }
    let mut attempts = Vec::new();
    for (i, j) in pair_iter(k) {
        for _ in 0..f.get(i, j) {
            let left = pool[i].pop().ok_or_else(|| {
                Error::Contract(format!("interface {i} exhausted while scheduling ({i},{j})"))
            })?;
            let right = pool[j].pop().ok_or_else(|| {
                Error::Contract(format!("interface {j} exhausted while scheduling ({i},{j})"))
            })?;
            attempts.push(SwapAttempt { pair: (i, j), left_id: left, right_id: right });
        }
    }
    Ok(attempts)
}

pub(crate) fn normalize_pair(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

//! Stationary protocol: label fresh link pairs with target pair-tags at rates
//! `f̃_ij / p_i`, then swap matched labels until one side runs out. The
//! discard variant additionally flushes all stored pairs every `T0` slots.

use std::collections::VecDeque;

use super::{
    normalize_pair, truncate_to_budget, DecisionCtx, ProtocolKind, QubitPolicy, Scheduler,
    SchedulerDecision, SwapAttempt,
};
use crate::capacity::StationaryPlan;
use crate::model::{pair_iter, EprPair, PairMatrix};
use crate::stochastic::{labeling_draw, RngStreams};

/// Labeled-set bookkeeping: `sets[i][j]` holds the ids of live link pairs on
/// interface `i` labeled `(i, j)`, in admission order.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub plan: StationaryPlan,
    sets: Vec<Vec<Vec<u64>>>,
}

impl StationaryState {
    pub fn labeled(&self, iface: usize, partner: usize) -> &[u64] {
        &self.sets[iface][partner]
    }
}

pub struct Stationary {
    state: StationaryState,
    discard: bool,
}

impl Stationary {
    pub fn new(k: usize, plan: StationaryPlan, discard: bool) -> Self {
        assert_eq!(plan.label_prob.len(), k, "plan dimension mismatch");
        Self {
            state: StationaryState { plan, sets: vec![vec![Vec::new(); k]; k] },
            discard,
        }
    }

    pub fn state(&self) -> &StationaryState {
        &self.state
    }

    /// Tag for a fresh pair on `iface`: partner `j` with probability
    /// `f̃_ij / p_i`, or none with the residual probability.
    pub fn draw_label(
        plan: &StationaryPlan,
        iface: usize,
        slot: u64,
        streams: &RngStreams,
    ) -> Option<usize> {
        let probs = &plan.label_prob[iface];
        debug_assert!(probs.iter().sum::<f64>() <= 1.0 + 1e-9);
        let u = labeling_draw(iface, slot, streams);
        let mut cum = 0.0;
        for (j, &pr) in probs.iter().enumerate() {
            if pr > 0.0 {
                cum += pr;
                if u < cum {
                    return Some(j);
                }
            }
        }
        None
    }

    fn matched(&self, i: usize, j: usize) -> u64 {
        self.state.sets[i][j].len().min(self.state.sets[j][i].len()) as u64
    }

    /// Sets are in admission order, which is birth order on one interface, so
    /// YQF slices the back and OQF the front.
    fn pick_from_set(set: &[u64], n: usize, policy: QubitPolicy) -> Vec<u64> {
        debug_assert!(n <= set.len(), "set size checked by caller");
        match policy {
            QubitPolicy::Yqf => set.iter().rev().take(n).copied().collect(),
            QubitPolicy::Oqf => set.iter().take(n).copied().collect(),
        }
    }
}

impl Scheduler for Stationary {
    fn kind(&self) -> ProtocolKind {
        if self.discard {
            ProtocolKind::StationaryDiscard
        } else {
            ProtocolKind::Stationary
        }
    }

    fn label_fresh(
        &mut self,
        iface: usize,
        pair_id: u64,
        slot: u64,
        streams: &RngStreams,
    ) -> Option<(usize, usize)> {
        let partner = Self::draw_label(&self.state.plan, iface, slot, streams)?;
        self.state.sets[iface][partner].push(pair_id);
        Some(normalize_pair(iface, partner))
    }

    fn decide(&mut self, ctx: &DecisionCtx<'_>) -> SchedulerDecision {
        let k = ctx.eligible_u.k();
        let mut f = PairMatrix::from_fn(k, |i, j| self.matched(i, j));
        if let Some(budget) = ctx.budget {
            let weights = f.clone();
            truncate_to_budget(&mut f, &weights, budget);
        }
        let mut attempts = Vec::new();
        for (i, j) in pair_iter(k) {
            let n = f.get(i, j) as usize;
            if n == 0 {
                continue;
            }
            let left = Self::pick_from_set(&self.state.sets[i][j], n, ctx.qubit_policy);
            let right = Self::pick_from_set(&self.state.sets[j][i], n, ctx.qubit_policy);
            for (l, r) in left.into_iter().zip(right) {
                attempts.push(SwapAttempt { pair: (i, j), left_id: l, right_id: r });
            }
        }
        SchedulerDecision { f, attempts, discard_now: self.discard }
    }

    fn immediate_pick(
        &mut self,
        pair: (usize, usize),
        _links: &[VecDeque<EprPair>],
        policy: QubitPolicy,
    ) -> Option<(u64, u64)> {
        let (i, j) = pair;
        if self.state.sets[i][j].is_empty() || self.state.sets[j][i].is_empty() {
            return None;
        }
        let l = Self::pick_from_set(&self.state.sets[i][j], 1, policy)[0];
        let r = Self::pick_from_set(&self.state.sets[j][i], 1, policy)[0];
        Some((l, r))
    }

    fn forget(&mut self, iface: usize, pair_id: u64) {
        for set in &mut self.state.sets[iface] {
            if let Some(pos) = set.iter().position(|&id| id == pair_id) {
                set.remove(pos);
                return;
            }
        }
    }

    fn discard_at_end(&self, t: u64) -> bool {
        self.discard && (t + 1) % self.state.plan.t0 == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::build_stationary_plan_with_t0;
    use crate::model::{RateMatrix, SwitchParams};
    use crate::protocols::QubitPolicy;

    fn plan3() -> StationaryPlan {
        let rates = RateMatrix::uniform(3, 0.2).unwrap();
        let params = SwitchParams::uniform(3, 0.9, 0.9);
        build_stationary_plan_with_t0(&rates, &params, 0.1, 4).unwrap()
    }

    #[test]
    fn label_frequencies_match_plan() {
        let plan = plan3();
        let streams = RngStreams::new(2024);
        let draws = 100_000u64;
        let mut counts = [0u64; 3]; // partner 1, partner 2, unlabeled
        for t in 0..draws {
            match Stationary::draw_label(&plan, 0, t, &streams) {
                Some(1) => counts[0] += 1,
                Some(2) => counts[1] += 1,
                None => counts[2] += 1,
                Some(other) => panic!("invalid partner {other}"),
            }
        }
        let expect = plan.label_prob[0][1];
        for (ix, expected) in [expect, expect, plan.idle_prob[0]].iter().enumerate() {
            let freq = counts[ix] as f64 / draws as f64;
            assert!((freq - expected).abs() < 0.01, "slot {ix}: {freq} vs {expected}");
        }
    }

    #[test]
    fn zero_probability_is_never_drawn() {
        let mut plan = plan3();
        plan.label_prob[0][1] = 0.0;
        let streams = RngStreams::new(5);
        for t in 0..10_000 {
            assert_ne!(Stationary::draw_label(&plan, 0, t, &streams), Some(1));
        }
    }

    #[test]
    fn decide_drains_matched_labels() {
        let plan = plan3();
        let mut proto = Stationary::new(3, plan, false);
        // three labeled pairs on interface 0 targeting node 1, two on 1 targeting 0
        let mut links: Vec<VecDeque<EprPair>> = vec![VecDeque::new(); 3];
        for id in 0..3u64 {
            links[0].push_back(EprPair::link(id, 0, 10 * id));
            proto.state.sets[0][1].push(id);
        }
        for id in 10..12u64 {
            links[1].push_back(EprPair::link(id, 1, 5 * id));
            proto.state.sets[1][0].push(id);
        }
        let u = PairMatrix::new(3);
        let ctx = DecisionCtx {
            t: 0,
            eligible_u: &u,
            links: &links,
            qubit_policy: QubitPolicy::Yqf,
            budget: None,
        };
        let d = proto.decide(&ctx);
        assert_eq!(d.f.get(0, 1), 2);
        assert_eq!(d.attempts.len(), 2);
        // engine reports consumption back; sets drain to min = 0
        for a in &d.attempts {
            proto.forget(0, a.left_id);
            proto.forget(1, a.right_id);
        }
        assert_eq!(proto.state.labeled(0, 1).len(), 1);
        assert!(proto.state.labeled(1, 0).is_empty());
        let d2 = proto.decide(&ctx);
        assert_eq!(d2.f.total(), 0);
    }

    #[test]
    fn empty_sets_decide_idle() {
        let plan = plan3();
        let mut proto = Stationary::new(3, plan, false);
        let links: Vec<VecDeque<EprPair>> = vec![VecDeque::new(); 3];
        let u = PairMatrix::new(3);
        let ctx = DecisionCtx {
            t: 0,
            eligible_u: &u,
            links: &links,
            qubit_policy: QubitPolicy::Oqf,
            budget: None,
        };
        assert_eq!(proto.decide(&ctx).f.total(), 0);
    }

    #[test]
    fn discard_fires_at_period_boundaries() {
        let plan = plan3(); // t0 = 4
        let proto = Stationary::new(3, plan, true);
        assert!(!proto.discard_at_end(0));
        assert!(proto.discard_at_end(3));
        assert!(proto.discard_at_end(7));
        let plain = Stationary::new(3, plan3(), false);
        assert!(!plain.discard_at_end(3));
    }
}

//! On-demand protocols: per-slot greedy schedulers that swap only against
//! existing requests (`F <= U`) and leave no pair with simultaneous slack in
//! both interfaces and in demand.

use std::collections::VecDeque;

use super::{
    choose_attempts, truncate_to_budget, DecisionCtx, ProtocolKind, QubitPolicy, Scheduler,
    SchedulerDecision, VisitOrder,
};
use crate::model::{pair_iter, EprPair, PairMatrix};

/// Greedy construction of an attempt matrix satisfying the on-demand
/// constraints: visit pairs in `order`, setting `F_ij` as large as the demand
/// `U_ij` and the remaining link pairs on both interfaces allow. The result
/// satisfies `Σ_i F_ij <= E0_j`, `F_ij <= U_ij`, symmetry, and the
/// complementary-slackness product
/// `(E0_i - Σ_k F_ik)(E0_j - Σ_k F_kj)(U_ij - F_ij) = 0` for every pair.
pub fn on_demand_decide(u: &PairMatrix<u64>, e0: &[u64], order: VisitOrder) -> PairMatrix<u64> {
    let k = u.k();
    assert_eq!(e0.len(), k, "capacity vector length mismatch");
    let mut remaining = e0.to_vec();
    let mut f = PairMatrix::new(k);
    let mut pairs: Vec<(usize, usize)> = pair_iter(k).collect();
    if order == VisitOrder::ReverseLexicographic {
        pairs.reverse();
    }
    for (i, j) in pairs {
        let take = u.get(i, j).min(remaining[i]).min(remaining[j]);
        if take > 0 {
            f.set(i, j, take);
            remaining[i] -= take;
            remaining[j] -= take;
        }
    }
    f
}

pub struct OnDemand {
    order: VisitOrder,
}

impl OnDemand {
    pub fn new(order: VisitOrder) -> Self {
        Self { order }
    }
}

impl Scheduler for OnDemand {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::OnDemand
    }

    fn decide(&mut self, ctx: &DecisionCtx<'_>) -> SchedulerDecision {
        let mut f = on_demand_decide(ctx.eligible_u, &ctx.e0_counts(), self.order);
        if let Some(budget) = ctx.budget {
            truncate_to_budget(&mut f, ctx.eligible_u, budget);
        }
        let attempts = choose_attempts(&f, ctx.links, ctx.qubit_policy)
            .expect("greedy respects interface capacities");
        SchedulerDecision { f, attempts, discard_now: false }
    }

    fn immediate_pick(
        &mut self,
        pair: (usize, usize),
        links: &[VecDeque<EprPair>],
        policy: QubitPolicy,
    ) -> Option<(u64, u64)> {
        let (i, j) = pair;
        if links[i].is_empty() || links[j].is_empty() {
            return None;
        }
        // stores are birth-ordered
        let pick = |iface: &VecDeque<EprPair>| match policy {
            QubitPolicy::Yqf => iface.back().expect("nonempty").id,
            QubitPolicy::Oqf => iface.front().expect("nonempty").id,
        };
        Some((pick(&links[i]), pick(&links[j])))
    }
}

/// The Eq.-(27)-style slackness product for one pair under a decision.
pub fn slackness_product(u: &PairMatrix<u64>, e0: &[u64], f: &PairMatrix<u64>, i: usize, j: usize) -> u64 {
    let slack_i = e0[i] - f.column_sum(i);
    let slack_j = e0[j] - f.column_sum(j);
    let slack_u = u.get(i, j) - f.get(i, j);
    slack_i * slack_j * slack_u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_demand_idles() {
        let u = PairMatrix::new(3);
        let f = on_demand_decide(&u, &[5, 5, 5], VisitOrder::Lexicographic);
        assert_eq!(f.total(), 0);
    }

    #[test]
    fn worked_example_satisfies_all_constraints() {
        // U_01 = 2, U_02 = 1, U_12 = 0, E0 = (2,1,1)
        let mut u = PairMatrix::new(3);
        u.set(0, 1, 2);
        u.set(0, 2, 1);
        let e0 = [2u64, 1, 1];
        let f = on_demand_decide(&u, &e0, VisitOrder::Lexicographic);
        assert_eq!(f.get(0, 1), 1); // capped by E0_1
        assert_eq!(f.get(0, 2), 1);
        assert_eq!(f.get(1, 2), 0);
        for j in 0..3 {
            assert!(f.column_sum(j) <= e0[j]);
        }
        for ((i, j), &fij) in f.iter() {
            assert!(fij <= u.get(i, j));
            assert_eq!(slackness_product(&u, &e0, &f, i, j), 0);
        }
    }

    #[test]
    fn idempotent_on_residual_state() {
        let mut u = PairMatrix::new(4);
        u.set(0, 1, 3);
        u.set(2, 3, 2);
        u.set(0, 3, 1);
        let e0 = [2u64, 4, 1, 2];
        let f = on_demand_decide(&u, &e0, VisitOrder::Lexicographic);
        // residual demand and stock after applying the decision
        let u_res = PairMatrix::from_fn(4, |i, j| u.get(i, j) - f.get(i, j));
        let e0_res: Vec<u64> = (0..4).map(|i| e0[i] - f.column_sum(i)).collect();
        let again = on_demand_decide(&u_res, &e0_res, VisitOrder::Lexicographic);
        assert_eq!(again.total(), 0);
    }

    #[test]
    fn visit_order_changes_allocation() {
        let mut u = PairMatrix::new(3);
        u.set(0, 1, 1);
        u.set(1, 2, 1);
        let e0 = [1u64, 1, 1];
        let lex = on_demand_decide(&u, &e0, VisitOrder::Lexicographic);
        assert_eq!(lex.get(0, 1), 1);
        assert_eq!(lex.get(1, 2), 0);
        let rev = on_demand_decide(&u, &e0, VisitOrder::ReverseLexicographic);
        assert_eq!(rev.get(1, 2), 1);
        assert_eq!(rev.get(0, 1), 0);
    }
}

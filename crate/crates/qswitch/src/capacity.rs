//! Analytical capacity computations: region membership and margin,
//! stationary-protocol rate construction, discard-period selection, and
//! boundary-point solving for sweeps.
//!
//! The capacity region is the set of rate matrices admitting nonnegative
//! symmetric flows `f` with `Σ_i f_ij <= p_j` per interface, `Σ_{i<j} f_ij <=
//! W`, and `λ_ij <= q f_ij`. The last constraint makes `f = λ/q` the minimal
//! feasible flow, so membership reduces to checking that flow — an LP
//! feasibility oracle exists only in the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pair_iter, PairMatrix, RateMatrix, SwitchParams};
use crate::stochastic::ArrivalSpec;

/// Comparison tolerance for boundary classification.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Default cap on computed discard periods.
pub const T0_CAP: u64 = 10_000_000;

/// Expected swap attempts per slot per pair.
pub type FlowMatrix = PairMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Inside,
    Boundary,
    Outside,
}

/// Result of a capacity-region membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    /// Minimal feasible flow `λ/q`.
    pub flow: FlowMatrix,
    /// Smallest slack across all constraints at the minimal flow, in
    /// probability units: `min(min_j (p_j - Σ_i λ_ij/q), W - Σ_{i<j} λ_ij/q)`.
    pub margin: f64,
    pub verdict: Verdict,
    /// Largest uniform ε such that `(λ_ij + ε)` stays in the region; 0 when
    /// the rates are not strictly inside.
    pub max_epsilon: f64,
}

/// Membership and margin for the capacity region.
pub fn region_membership(rates: &RateMatrix, params: &SwitchParams) -> Result<RegionReport> {
    params.validate()?;
    check_dims(rates, params)?;
    let k = params.k;
    let q = params.q;
    let flow = rates.matrix().map(|&l| l / q);

    let mut margin = f64::INFINITY;
    for j in 0..k {
        margin = margin.min(params.p[j] - flow.column_sum_f(j));
    }
    if let Some(w) = params.max_swaps_per_slot {
        margin = margin.min(w as f64 - flow.total_f());
    }

    let verdict = if margin > BOUNDARY_TOL {
        Verdict::Inside
    } else if margin >= -BOUNDARY_TOL {
        Verdict::Boundary
    } else {
        Verdict::Outside
    };

    let max_epsilon = if verdict == Verdict::Inside {
        let mut eps = f64::INFINITY;
        for j in 0..k {
            eps = eps.min((params.p[j] * q - rates.column_sum(j)) / (k - 1) as f64);
        }
        if let Some(w) = params.max_swaps_per_slot {
            let n_pairs = (k * (k - 1) / 2) as f64;
            eps = eps.min((w as f64 * q - rates.total()) / n_pairs);
        }
        eps.max(0.0)
    } else {
        0.0
    };

    Ok(RegionReport { flow, margin, verdict, max_epsilon })
}

/// Rate construction for the stationary protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPlan {
    pub f_tilde: FlowMatrix,
    pub epsilon: f64,
    /// `label_prob[i][j] = f̃_ij / p_i`: probability that a fresh link pair on
    /// interface `i` is labeled `(i, j)`.
    pub label_prob: Vec<Vec<f64>>,
    /// Residual probability of leaving a fresh pair on interface `i` unlabeled.
    pub idle_prob: Vec<f64>,
    /// Discard-protocol constant satisfying
    /// `λ_ij - δ + ε/4 <= q (f̃_ij - ε/2)(1 - δ)`.
    pub delta: f64,
    /// Discard / decision period.
    pub t0: u64,
}

/// Build the stationary plan `f̃_ij = (λ_ij + ε)/q` with δ from a geometric
/// grid and T₀ from [`select_t0`] for the given arrival family.
pub fn build_stationary_plan(
    rates: &RateMatrix,
    params: &SwitchParams,
    epsilon: f64,
    arrivals: &ArrivalSpec,
) -> Result<StationaryPlan> {
    let mut plan = plan_without_t0(rates, params, epsilon)?;
    plan.t0 = select_t0(&plan, rates, plan.delta, arrivals, T0_CAP)?;
    Ok(plan)
}

/// Same plan with a caller-supplied period, for arrival processes without an
/// analytic concentration bound.
pub fn build_stationary_plan_with_t0(
    rates: &RateMatrix,
    params: &SwitchParams,
    epsilon: f64,
    t0: u64,
) -> Result<StationaryPlan> {
    if t0 == 0 {
        return Err(Error::InvalidInput("T0 must be positive".into()));
    }
    let mut plan = plan_without_t0(rates, params, epsilon)?;
    plan.t0 = t0;
    Ok(plan)
}

fn plan_without_t0(rates: &RateMatrix, params: &SwitchParams, epsilon: f64) -> Result<StationaryPlan> {
    params.validate()?;
    check_dims(rates, params)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon = {epsilon} must be positive")));
    }
    let k = params.k;
    let q = params.q;

    let shifted = RateMatrix::new(rates.matrix().map(|&l| l + epsilon))?;
    let report = region_membership(&shifted, params)?;
    if report.verdict == Verdict::Outside {
        return Err(Error::InfeasibleEpsilon {
            epsilon,
            reason: format!("(λ + ε) leaves the capacity region (margin {})", report.margin),
        });
    }

    let f_tilde = rates.matrix().map(|&l| (l + epsilon) / q);
    for j in 0..k {
        let col = f_tilde.column_sum_f(j);
        if col > params.p[j] + BOUNDARY_TOL {
            return Err(Error::InfeasibleEpsilon {
                epsilon,
                reason: format!("Σ_i f̃_i{j} = {col} exceeds p_{j} = {}", params.p[j]),
            });
        }
    }

    let mut label_prob = vec![vec![0.0; k]; k];
    let mut idle_prob = vec![0.0; k];
    for i in 0..k {
        let mut total = 0.0;
        for j in 0..k {
            if j != i {
                let f = f_tilde.get(i, j);
                let prob = if f == 0.0 { 0.0 } else { f / params.p[i] };
                if !(0.0..=1.0 + BOUNDARY_TOL).contains(&prob) {
                    return Err(Error::InfeasibleEpsilon {
                        epsilon,
                        reason: format!("label probability {prob} for ({i},{j}) outside [0,1]"),
                    });
                }
                label_prob[i][j] = prob.min(1.0);
                total += label_prob[i][j];
            }
        }
        if total > 1.0 + BOUNDARY_TOL {
            return Err(Error::InfeasibleEpsilon {
                epsilon,
                reason: format!("interface {i} label mass {total} exceeds 1"),
            });
        }
        idle_prob[i] = (1.0 - total).max(0.0);
    }

    let delta = select_delta(rates, &f_tilde, epsilon, q)?;

    Ok(StationaryPlan {
        f_tilde,
        epsilon,
        label_prob,
        idle_prob,
        delta,
        t0: 1,
    })
}

/// Largest value on the geometric grid `{ε/4 · 2^-m}` satisfying
/// `λ_ij - δ + ε/4 <= q (f̃_ij - ε/2)(1 - δ)` for every pair.
fn select_delta(rates: &RateMatrix, f_tilde: &FlowMatrix, epsilon: f64, q: f64) -> Result<f64> {
    let satisfies = |delta: f64| {
        pair_iter(rates.k()).all(|(i, j)| {
            let lhs = rates.get(i, j) - delta + epsilon / 4.0;
            let rhs = q * (f_tilde.get(i, j) - epsilon / 2.0) * (1.0 - delta);
            lhs <= rhs
        })
    };
    let mut delta = epsilon / 4.0;
    for _ in 0..200 {
        if delta < 1.0 && satisfies(delta) {
            return Ok(delta);
        }
        delta /= 2.0;
    }
    Err(Error::InfeasibleEpsilon {
        epsilon,
        reason: "no δ on the geometric grid satisfies the discard condition".into(),
    })
}

/// Bernoulli divergence `D(x‖y) = x ln(x/y) + (1-x) ln((1-x)/(1-y))`.
pub fn divergence(x: f64, y: f64) -> f64 {
    let part = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    part(x, y) + part(1.0 - x, 1.0 - y)
}

/// Smallest period making both discard-protocol conditions hold:
///
/// (a) the empirical arrival mean over `T0` slots deviates from `λ` by more
///     than `δ` with probability at most `δ` (family concentration bound);
/// (b) per pair, each Bernoulli labeling stream of mean `f̃` undershoots
///     `T0 (f̃ - ε/2)` with probability at most `δ/2`, via the Chernoff bound
///     `exp(-T0 · D(f̃ - ε/2 ‖ f̃)) <= δ/2`.
pub fn select_t0(
    plan: &StationaryPlan,
    rates: &RateMatrix,
    delta: f64,
    arrivals: &ArrivalSpec,
    cap: u64,
) -> Result<u64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta = {delta} must be positive")));
    }
    let mut t0 = t0_mean_deviation_part(arrivals, delta, cap)?;
    for (i, j) in pair_iter(rates.k()) {
        t0 = t0.max(t0_chernoff_part(plan.f_tilde.get(i, j), plan.epsilon, delta)?);
        if t0 > cap {
            return Err(Error::PeriodOverflow {
                cap,
                reason: format!("labeling Chernoff bound for pair ({i},{j})"),
            });
        }
    }
    Ok(t0)
}

/// Part (b): smallest `T0` with `exp(-T0 · D(f̃ - ε/2 ‖ f̃)) <= δ/2`.
pub fn t0_chernoff_part(f_tilde: f64, epsilon: f64, delta: f64) -> Result<u64> {
    if delta >= 2.0 {
        return Ok(1);
    }
    let x = f_tilde - epsilon / 2.0;
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!(
            "f̃ - ε/2 = {x} must be positive for the Chernoff bound"
        )));
    }
    if f_tilde >= 1.0 {
        // deterministic stream: the undershoot event has probability zero
        return Ok(1);
    }
    let d = divergence(x, f_tilde);
    if d <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "divergence D({x}‖{f_tilde}) is not positive"
        )));
    }
    let t0 = ((2.0 / delta).ln() / d).ceil();
    Ok((t0 as u64).max(1))
}

/// Part (a): family-specific concentration bound for the empirical arrival
/// mean. Refuses families without an analytic bound.
pub fn t0_mean_deviation_part(arrivals: &ArrivalSpec, delta: f64, cap: u64) -> Result<u64> {
    arrivals.validate()?;
    if delta >= 1.0 {
        return Ok(1);
    }
    match *arrivals {
        // Hoeffding on [0,1]: 2 exp(-2 T0 δ^2) <= δ
        ArrivalSpec::Bernoulli { .. } => {
            let t0 = ((2.0 / delta).ln() / (2.0 * delta * delta)).ceil();
            if t0 > cap as f64 {
                return Err(Error::PeriodOverflow { cap, reason: "Hoeffding inversion".into() });
            }
            Ok((t0 as u64).max(1))
        }
        ArrivalSpec::Constant { .. } => Ok(1),
        // Chernoff with the mixture MGF, inverted numerically.
        ArrivalSpec::MixedPoisson { lambda1, lambda2 } => {
            let lambda = (lambda1 + lambda2) / 2.0;
            let up = chernoff_rate_mixture(lambda1, lambda2, lambda + delta, true);
            let lo = chernoff_rate_mixture(lambda1, lambda2, (lambda - delta).max(0.0), false);
            let mut t0 = 1u64;
            loop {
                let mut tail = (-(t0 as f64) * up).exp();
                if lambda - delta > 0.0 {
                    tail += (-(t0 as f64) * lo).exp();
                }
                if tail <= delta {
                    return Ok(t0);
                }
                t0 = t0.saturating_mul(2);
                if t0 > cap {
                    return Err(Error::PeriodOverflow {
                        cap,
                        reason: "mixed-Poisson Chernoff inversion".into(),
                    });
                }
            }
        }
    }
}

/// Best exponential decay rate `sup_s [ s·a - ln M(s) ]` for the upper
/// (`upper = true`, `s > 0`) or lower (`s < 0`) tail of a half/half Poisson
/// mixture at threshold `a` per slot.
fn chernoff_rate_mixture(lambda1: f64, lambda2: f64, a: f64, upper: bool) -> f64 {
    let ln_mgf = |s: f64| {
        let g1 = lambda1 * (s.exp() - 1.0);
        let g2 = lambda2 * (s.exp() - 1.0);
        // ln(0.5 e^g1 + 0.5 e^g2), stabilized
        let m = g1.max(g2);
        m + (0.5 * (g1 - m).exp() + 0.5 * (g2 - m).exp()).ln()
    };
    let mut best: f64 = 0.0;
    for step in 1..=4000 {
        let s = step as f64 * 0.005;
        let s = if upper { s } else { -s };
        let rate = s * a - ln_mgf(s);
        if rate > best {
            best = rate;
        }
    }
    best
}

/// Smallest swap probability stabilizing the given rates:
/// `q* = max(max_j Σ_i λ_ij / p_j, Σ_{i<j} λ_ij / W)`. Values above 1 mean
/// the rates are never stable; zero rates give 0.
pub fn boundary_q(rates: &RateMatrix, params: &SwitchParams) -> Result<f64> {
    check_dims(rates, params)?;
    let mut q_star: f64 = 0.0;
    for j in 0..params.k {
        let demand = rates.column_sum(j);
        if demand > 0.0 {
            q_star = q_star.max(if params.p[j] > 0.0 {
                demand / params.p[j]
            } else {
                f64::INFINITY
            });
        }
    }
    if let Some(w) = params.max_swaps_per_slot {
        q_star = q_star.max(rates.total() / w as f64);
    }
    Ok(q_star)
}

/// Shortfall of the best possible service rate against the offered load,
/// requests per slot: `Σ_{i<j} λ_ij - q · min(Σ_k p_k / 2, W)`, clamped at 0.
pub fn deficit_rate(rates: &RateMatrix, params: &SwitchParams) -> f64 {
    let supply_pairs = params.p.iter().sum::<f64>() / 2.0;
    let supply = match params.max_swaps_per_slot {
        Some(w) => supply_pairs.min(w as f64),
        None => supply_pairs,
    };
    (rates.total() - params.q * supply).max(0.0)
}

fn check_dims(rates: &RateMatrix, params: &SwitchParams) -> Result<()> {
    if rates.k() != params.k {
        return Err(Error::InvalidInput(format!(
            "rate matrix is over {} nodes but params declare {}",
            rates.k(),
            params.k
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_setting(lambda: f64) -> (RateMatrix, SwitchParams) {
        (
            RateMatrix::uniform(5, lambda).unwrap(),
            SwitchParams::uniform(5, 0.9, 0.9),
        )
    }

    #[test]
    fn membership_table_ii_setting() {
        let (rates, params) = table_setting(0.2);
        let rep = region_membership(&rates, &params).unwrap();
        assert_eq!(rep.verdict, Verdict::Inside);
        assert_relative_eq!(rep.margin, 0.9 - 4.0 * 0.2 / 0.9, epsilon = 1e-15);
        assert!((rep.margin - 0.0111111111111).abs() < 1e-10);
        assert_relative_eq!(rep.flow.get(0, 1), 0.2 / 0.9, epsilon = 1e-15);
    }

    #[test]
    fn membership_zero_rates() {
        let (rates, params) = table_setting(0.0);
        let rep = region_membership(&rates, &params).unwrap();
        assert_eq!(rep.verdict, Verdict::Inside);
        assert_relative_eq!(rep.margin, 0.9, epsilon = 1e-15);
    }

    #[test]
    fn membership_outside() {
        let (rates, params) = table_setting(0.25);
        let rep = region_membership(&rates, &params).unwrap();
        assert_eq!(rep.verdict, Verdict::Outside);
        assert!(rep.margin < 0.0);
        assert_eq!(rep.max_epsilon, 0.0);
    }

    #[test]
    fn membership_w_cap_binds() {
        let (rates, mut params) = table_setting(0.2);
        params.max_swaps_per_slot = Some(2);
        let rep = region_membership(&rates, &params).unwrap();
        // Σ_{i<j} λ/q = 10 * 0.2/0.9 = 2.22 > 2
        assert_eq!(rep.verdict, Verdict::Outside);
    }

    #[test]
    fn max_epsilon_is_tight() {
        let (rates, params) = table_setting(0.2);
        let rep = region_membership(&rates, &params).unwrap();
        assert!(rep.max_epsilon > 0.0);
        let shifted = RateMatrix::new(rates.matrix().map(|&l| l + rep.max_epsilon)).unwrap();
        let rep2 = region_membership(&shifted, &params).unwrap();
        assert!(rep2.margin.abs() < 1e-12);
        let over = RateMatrix::new(rates.matrix().map(|&l| l + rep.max_epsilon * 1.01)).unwrap();
        assert_eq!(region_membership(&over, &params).unwrap().verdict, Verdict::Outside);
    }

    #[test]
    fn plan_flow_value() {
        let rates = RateMatrix::uniform(3, 0.2).unwrap();
        let params = SwitchParams::uniform(3, 0.9, 0.9);
        let plan = build_stationary_plan_with_t0(&rates, &params, 0.01, 5).unwrap();
        assert_relative_eq!(plan.f_tilde.get(0, 1), 0.21 / 0.9, epsilon = 1e-15);
        assert_eq!(plan.t0, 5);
    }

    #[test]
    fn plan_rejects_oversized_epsilon() {
        let (rates, params) = table_setting(0.2);
        let max_eps = region_membership(&rates, &params).unwrap().max_epsilon;
        let err = build_stationary_plan_with_t0(&rates, &params, max_eps * 2.0, 5);
        assert!(matches!(err, Err(Error::InfeasibleEpsilon { .. })));
    }

    #[test]
    fn plan_invariants_hold() {
        let rates = RateMatrix::uniform(5, 0.1).unwrap();
        let params = SwitchParams::uniform(5, 0.9, 0.9);
        let eps = region_membership(&rates, &params).unwrap().max_epsilon / 2.0;
        let plan =
            build_stationary_plan(&rates, &params, eps, &ArrivalSpec::Bernoulli { rate: 0.1 })
                .unwrap();
        let k = params.k;
        for j in 0..k {
            assert!(plan.f_tilde.column_sum_f(j) <= params.p[j] + 1e-12);
        }
        for (i, j) in pair_iter(k) {
            assert!(rates.get(i, j) + eps <= params.q * plan.f_tilde.get(i, j) + 1e-12);
            // discard condition, Eq.-style
            let lhs = rates.get(i, j) - plan.delta + eps / 4.0;
            let rhs = params.q * (plan.f_tilde.get(i, j) - eps / 2.0) * (1.0 - plan.delta);
            assert!(lhs <= rhs + 1e-12);
        }
        for i in 0..k {
            let mass: f64 = plan.label_prob[i].iter().sum();
            assert!(mass <= 1.0 + 1e-12);
            assert!((0.0..=1.0).contains(&plan.idle_prob[i]));
            assert_relative_eq!(mass + plan.idle_prob[i], 1.0, epsilon = 1e-9);
        }
        assert!(plan.t0 >= 1);
    }

    #[test]
    fn chernoff_part_matches_hand_inversion() {
        // D(0.4‖0.5) ≈ 0.0201367; T0 = ceil(ln 20 / D) = 149
        let d = divergence(0.4, 0.5);
        assert_relative_eq!(d, 0.4 * (0.8f64).ln() + 0.6 * (1.2f64).ln(), epsilon = 1e-15);
        assert!((d - 0.020136).abs() < 1e-5);
        assert_eq!(t0_chernoff_part(0.5, 0.2, 0.1).unwrap(), 149);
    }

    #[test]
    fn hoeffding_part_matches_closed_form() {
        let spec = ArrivalSpec::Bernoulli { rate: 0.3 };
        assert_eq!(t0_mean_deviation_part(&spec, 0.1, T0_CAP).unwrap(), 150);
    }

    #[test]
    fn vacuous_delta_gives_t0_one() {
        let spec = ArrivalSpec::Bernoulli { rate: 0.3 };
        assert_eq!(t0_mean_deviation_part(&spec, 1.0, T0_CAP).unwrap(), 1);
        assert_eq!(t0_chernoff_part(0.9, 0.2, 2.0).unwrap(), 1);
    }

    #[test]
    fn t0_cap_is_enforced() {
        let spec = ArrivalSpec::Bernoulli { rate: 0.3 };
        assert!(matches!(
            t0_mean_deviation_part(&spec, 1e-5, 1000),
            Err(Error::PeriodOverflow { .. })
        ));
    }

    #[test]
    fn mixed_poisson_part_is_finite_and_monotone() {
        let spec = ArrivalSpec::MixedPoisson { lambda1: 0.1, lambda2: 0.3 };
        let loose = t0_mean_deviation_part(&spec, 0.3, T0_CAP).unwrap();
        let tight = t0_mean_deviation_part(&spec, 0.05, T0_CAP).unwrap();
        assert!(loose >= 1);
        assert!(tight > loose);
    }

    #[test]
    fn boundary_q_closed_form() {
        let rates = RateMatrix::uniform(3, 0.1).unwrap();
        let params = SwitchParams::uniform(3, 0.9, 0.9);
        let q_star = boundary_q(&rates, &params).unwrap();
        assert_relative_eq!(q_star, 0.2 / 0.9, epsilon = 1e-15);

        let zero = RateMatrix::uniform(3, 0.0).unwrap();
        assert_eq!(boundary_q(&zero, &params).unwrap(), 0.0);
    }

    #[test]
    fn boundary_q_flags_never_stable() {
        let rates = RateMatrix::uniform(3, 0.6).unwrap();
        let params = SwitchParams::uniform(3, 0.9, 0.9);
        assert!(boundary_q(&rates, &params).unwrap() > 1.0);
    }

    #[test]
    fn deficit_rate_matches_uniform_arithmetic() {
        let (rates, params) = table_setting(0.25);
        // Σλ = 2.5, supply = 0.9 * 4.5/2 = 2.025
        assert_relative_eq!(deficit_rate(&rates, &params), 2.5 - 2.025, epsilon = 1e-12);
        let (inside, params) = table_setting(0.1);
        assert_eq!(deficit_rate(&inside, &params), 0.0);
    }

    #[test]
    fn membership_monotone_in_rates() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.random_range(2..6);
            let params = SwitchParams::uniform(k, rng.random_range(0.3..1.0), rng.random_range(0.3..1.0));
            let base = RateMatrix::new(PairMatrix::from_fn(k, |_, _| rng.random_range(0.0..0.4))).unwrap();
            let scaled = base.scaled(rng.random_range(1.0..3.0)).unwrap();
            let v0 = region_membership(&base, &params).unwrap().verdict;
            let v1 = region_membership(&scaled, &params).unwrap().verdict;
            if v0 == Verdict::Outside {
                assert_eq!(v1, Verdict::Outside);
            }
        }
    }
}

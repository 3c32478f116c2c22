//! Dephasing and fidelity of stored and swapped EPR pairs.
//!
//! Each idle qubit dephases with time constant `T2`; its coherence factor
//! after dwelling `Δt` is `exp(-Δt/T2)`. Coherence factors multiply across
//! the qubits of a pair and carry through an ideal Bell measurement, so the
//! fidelity of any pair is `(1 + Π_m exp(-Δt_m/T2)) / 2` over all qubits in
//! its history. A density-matrix oracle pinning down this composition rule
//! lives in the integration tests.

use serde::{Deserialize, Serialize};

use crate::model::SwitchParams;

/// Dwell bookkeeping for one qubit; the coherence factor is computed at read
/// time as `exp(-Δt/T2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceRecord {
    pub dwell_start_ns: u64,
}

impl CoherenceRecord {
    pub fn coherence(&self, now_ns: u64, t2_ns: f64) -> f64 {
        coherence_factor(now_ns.saturating_sub(self.dwell_start_ns) as f64, t2_ns)
    }
}

/// `exp(-dt/T2)`; 1 when `T2` is infinite.
pub fn coherence_factor(dt_ns: f64, t2_ns: f64) -> f64 {
    debug_assert!(dt_ns >= 0.0);
    if t2_ns.is_infinite() {
        1.0
    } else {
        (-dt_ns / t2_ns).exp()
    }
}

/// Dephasing probability `(1 - exp(-dt/T2)) / 2` of a qubit idle for `dt`.
pub fn dephase_prob(dt_ns: f64, t2_ns: f64) -> f64 {
    (1.0 - coherence_factor(dt_ns, t2_ns)) / 2.0
}

/// Fidelity of a pair whose qubits dwelled for the given times:
/// `(1 + Π_m exp(-dt_m/T2)) / 2`.
pub fn pair_fidelity(dwell_ns: &[f64], t2_ns: f64) -> f64 {
    let c: f64 = dwell_ns.iter().map(|&dt| coherence_factor(dt, t2_ns)).product();
    (1.0 + c) / 2.0
}

/// Fidelity from the summed dwell of all qubits in a pair's history; equals
/// [`pair_fidelity`] because the per-qubit factors multiply.
pub fn fidelity_from_total_dwell(total_dwell_ns: f64, t2_ns: f64) -> f64 {
    (1.0 + coherence_factor(total_dwell_ns, t2_ns)) / 2.0
}

/// Fidelity of the end-to-end pair produced by an ideal Bell measurement on
/// two link pairs, evaluated at the moment of the measurement. All four
/// qubits' coherence factors multiply; the two surviving qubits keep accruing
/// dephasing afterwards on their own dwell clocks.
pub fn swap_fidelity(pair_a_dwell_ns: [f64; 2], pair_b_dwell_ns: [f64; 2], t2_ns: f64) -> f64 {
    let total: f64 = pair_a_dwell_ns.iter().chain(pair_b_dwell_ns.iter()).sum();
    fidelity_from_total_dwell(total, t2_ns)
}

/// True when the pair's fidelity at `now_ns` has fallen below the configured
/// threshold. A threshold of exactly 0.5 never discards since the dephasing
/// fidelity stays strictly above 1/2.
pub fn should_discard(pair: &crate::model::EprPair, now_ns: u64, params: &SwitchParams) -> bool {
    pair.fidelity(now_ns, params.t2_ns) < params.fidelity_threshold
}

/// Dwell cutoff equivalent to a fidelity threshold for a pair's *total*
/// dwell: `-T2 * ln(2*threshold - 1)`. Infinite when the threshold is 0.5.
pub fn dwell_cutoff_ns(threshold: f64, t2_ns: f64) -> f64 {
    if threshold <= 0.5 {
        f64::INFINITY
    } else {
        -t2_ns * (2.0 * threshold - 1.0).ln()
    }
}

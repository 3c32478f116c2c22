//! Seeded randomness: arrival processes, link generation, swap outcomes and
//! stationary-protocol labeling draws.
//!
//! Every draw site gets its own substream keyed by `(kind, index, slot)`,
//! derived from the master seed with a splitmix chain. Protocol decisions can
//! therefore never perturb the arrival or channel randomness, which enables
//! paired comparisons across protocols with common random numbers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Law of per-slot request arrivals for one node pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ArrivalSpec {
    /// One request with probability `rate`, none otherwise.
    Bernoulli { rate: f64 },
    /// Poisson(λ1) or Poisson(λ2), each branch with probability 1/2.
    MixedPoisson { lambda1: f64, lambda2: f64 },
    /// Exactly `count` requests every slot.
    Constant { count: u64 },
}

impl ArrivalSpec {
    /// Mean requests per slot.
    pub fn rate(&self) -> f64 {
        match *self {
            ArrivalSpec::Bernoulli { rate } => rate,
            ArrivalSpec::MixedPoisson { lambda1, lambda2 } => (lambda1 + lambda2) / 2.0,
            ArrivalSpec::Constant { count } => count as f64,
        }
    }

    /// Documented bound `A_max^2 >= E[A^2]` for the family.
    pub fn a_max_sq(&self) -> f64 {
        match *self {
            ArrivalSpec::Bernoulli { .. } => 1.0,
            ArrivalSpec::MixedPoisson { lambda1, lambda2 } => {
                // E[A^2] = 1/2 (λ1 + λ1^2) + 1/2 (λ2 + λ2^2)
                0.5 * (lambda1 + lambda1 * lambda1) + 0.5 * (lambda2 + lambda2 * lambda2)
            }
            ArrivalSpec::Constant { count } => (count * count) as f64,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = match *self {
            ArrivalSpec::Bernoulli { rate } => (0.0..=1.0).contains(&rate),
            ArrivalSpec::MixedPoisson { lambda1, lambda2 } => {
                lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()
            }
            ArrivalSpec::Constant { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidInput(format!("invalid arrival spec {self:?}")))
        }
    }

    fn sample_count(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            ArrivalSpec::Bernoulli { rate } => u64::from(rng.random_bool(rate)),
            ArrivalSpec::MixedPoisson { lambda1, lambda2 } => {
                let lambda = if rng.random_bool(0.5) { lambda1 } else { lambda2 };
                sample_poisson(lambda, rng)
            }
            ArrivalSpec::Constant { count } => count,
        }
    }
}

fn sample_poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("validated lambda").sample(rng) as u64
}

/// Substream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Arrivals,
    Channel,
    Swap,
    Labeling,
    Timestamps,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Arrivals => 1,
            StreamKind::Channel => 2,
            StreamKind::Swap => 3,
            StreamKind::Labeling => 4,
            StreamKind::Timestamps => 5,
        }
    }
}

/// Named, independently addressable substreams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStreams {
    master: u64,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// The substream for `(kind, (a, b), slot)`. Each call returns a fresh
    /// generator positioned at the stream start.
    pub fn stream(&self, kind: StreamKind, a: u64, b: u64, slot: u64) -> ChaCha8Rng {
        let mut s = self.master;
        let mut acc = splitmix(&mut s) ^ kind.tag().wrapping_mul(0xA24B_AED4_963E_E407);
        acc = acc.wrapping_add(splitmix(&mut s) ^ a.wrapping_mul(0x9FB2_1C65_1E98_DF25));
        acc = acc.wrapping_add(splitmix(&mut s) ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        acc = acc.wrapping_add(splitmix(&mut s) ^ slot.wrapping_mul(0xCA5A_8263_95121157));
        let mut seed = [0u8; 32];
        let mut word = acc;
        for chunk in seed.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut word).to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }

    fn pair_stream(&self, kind: StreamKind, pair: (usize, usize), slot: u64) -> ChaCha8Rng {
        self.stream(kind, pair.0 as u64, pair.1 as u64, slot)
    }
}

/// Draw this slot's request count for one pair plus sorted within-slot
/// offsets (ns) for each arrival.
pub fn sample_arrivals(
    spec: &ArrivalSpec,
    pair: (usize, usize),
    slot: u64,
    slot_ns: u64,
    streams: &RngStreams,
) -> (u64, Vec<u64>) {
    let count = spec.sample_count(&mut streams.pair_stream(StreamKind::Arrivals, pair, slot));
    let mut offsets = Vec::with_capacity(count as usize);
    if count > 0 {
        let mut rng = streams.pair_stream(StreamKind::Timestamps, pair, slot);
        for _ in 0..count {
            offsets.push(rng.random_range(0..slot_ns));
        }
        offsets.sort_unstable();
    }
    (count, offsets)
}

/// Bernoulli(p_k) link generation per interface.
pub fn sample_link_generation(p: &[f64], slot: u64, streams: &RngStreams) -> Vec<u64> {
    p.iter()
        .enumerate()
        .map(|(k, &pk)| {
            if pk <= 0.0 {
                0
            } else if pk >= 1.0 {
                1
            } else {
                let mut rng = streams.stream(StreamKind::Channel, k as u64, 0, slot);
                u64::from(rng.random_bool(pk))
            }
        })
        .collect()
}

/// Per-attempt swap outcomes for one pair in one slot, so each success is
/// attributable to a concrete consumed EPR pair. Draw all attempts for a
/// pair-slot from one call; repeated calls restart the substream.
pub fn sample_swap_outcomes(
    q: f64,
    attempts: usize,
    pair: (usize, usize),
    slot: u64,
    streams: &RngStreams,
) -> Vec<bool> {
    let mut rng = streams.pair_stream(StreamKind::Swap, pair, slot);
    (0..attempts).map(|_| rng.random_bool(q)).collect()
}

/// A cursor over one pair-slot's swap outcomes, for callers that interleave
/// attempts across the slot.
#[derive(Clone)]
pub struct SwapDraws {
    rng: ChaCha8Rng,
    q: f64,
}

impl SwapDraws {
    pub fn new(q: f64, pair: (usize, usize), slot: u64, streams: &RngStreams) -> Self {
        Self {
            rng: streams.pair_stream(StreamKind::Swap, pair, slot),
            q,
        }
    }

    pub fn next_outcome(&mut self) -> bool {
        self.rng.random_bool(self.q)
    }
}

/// One uniform draw in `[0, 1)` from the labeling stream of interface `k`.
pub fn labeling_draw(iface: usize, slot: u64, streams: &RngStreams) -> f64 {
    let mut rng = streams.stream(StreamKind::Labeling, iface as u64, 0, slot);
    rng.random_range(0.0..1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_zero_yields_nothing() {
        let streams = RngStreams::new(42);
        let (n, offs) = sample_arrivals(&ArrivalSpec::Constant { count: 0 }, (0, 1), 3, 1000, &streams);
        assert_eq!(n, 0);
        assert!(offs.is_empty());
    }

    #[test]
    fn offsets_sorted_within_slot() {
        let streams = RngStreams::new(7);
        let (n, offs) =
            sample_arrivals(&ArrivalSpec::Constant { count: 5 }, (1, 2), 11, 1000, &streams);
        assert_eq!(n, 5);
        assert!(offs.windows(2).all(|w| w[0] <= w[1]));
        assert!(offs.iter().all(|&o| o < 1000));
    }

    #[test]
    fn mixed_poisson_mean() {
        // mean = (0.1 + 0.3)/2 = 0.2; sigma^2 = E[A^2] - mean^2 = 0.25 - 0.04
        let spec = ArrivalSpec::MixedPoisson { lambda1: 0.1, lambda2: 0.3 };
        assert_eq!(spec.rate(), 0.2);
        let streams = RngStreams::new(1234);
        let n = 1_000_000u64;
        let mut total = 0u64;
        for t in 0..n {
            total += sample_arrivals(&spec, (0, 1), t, 1000, &streams).0;
        }
        let mean = total as f64 / n as f64;
        let sigma = (spec.a_max_sq() - 0.04f64).sqrt();
        let tol = 3.0 * sigma / 1000.0;
        assert!((mean - 0.2).abs() <= tol, "mean {mean} outside 0.2 +/- {tol}");
    }

    #[test]
    fn bernoulli_second_moment_bound() {
        let spec = ArrivalSpec::Bernoulli { rate: 0.2 };
        let streams = RngStreams::new(5);
        let n = 100_000u64;
        let mut sq = 0.0;
        for t in 0..n {
            let a = sample_arrivals(&spec, (0, 1), t, 1000, &streams).0 as f64;
            sq += a * a;
        }
        let mean_sq = sq / n as f64;
        assert!((mean_sq - 0.2).abs() < 0.01);
        assert!(mean_sq <= spec.a_max_sq());
    }

    #[test]
    fn link_generation_extremes_and_mean() {
        let streams = RngStreams::new(99);
        let mut ones = 0u64;
        for t in 0..100_000u64 {
            let c0 = sample_link_generation(&[0.0, 1.0, 0.9], t, &streams);
            assert_eq!(c0[0], 0);
            assert_eq!(c0[1], 1);
            ones += c0[2];
        }
        let mean = ones as f64 / 100_000.0;
        assert!((mean - 0.9).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn swap_outcomes_extremes_and_ci() {
        let streams = RngStreams::new(3);
        assert!(sample_swap_outcomes(1.0, 10, (0, 1), 0, &streams).iter().all(|&b| b));
        assert!(sample_swap_outcomes(1e-12, 10, (0, 1), 0, &streams).iter().all(|&b| !b));
        let mut successes = 0u64;
        let total = 100_000usize;
        for t in 0..100u64 {
            successes += sample_swap_outcomes(0.9, total / 100, (0, 1), t, &streams)
                .iter()
                .filter(|&&b| b)
                .count() as u64;
        }
        let frac = successes as f64 / total as f64;
        assert!((0.897..=0.903).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn determinism_same_seed_same_trace() {
        let a = RngStreams::new(4242);
        let b = RngStreams::new(4242);
        for t in 0..50 {
            assert_eq!(
                sample_arrivals(&ArrivalSpec::MixedPoisson { lambda1: 0.5, lambda2: 1.5 }, (0, 2), t, 1000, &a),
                sample_arrivals(&ArrivalSpec::MixedPoisson { lambda1: 0.5, lambda2: 1.5 }, (0, 2), t, 1000, &b),
            );
            assert_eq!(
                sample_link_generation(&[0.3, 0.7], t, &a),
                sample_link_generation(&[0.3, 0.7], t, &b)
            );
        }
    }

    #[test]
    fn substreams_do_not_interfere() {
        let streams = RngStreams::new(77);
        let spec = ArrivalSpec::Bernoulli { rate: 0.5 };
        // consume channel first, then arrivals
        let c_first = sample_link_generation(&[0.5; 4], 9, &streams);
        let a_after = sample_arrivals(&spec, (1, 3), 9, 1000, &streams);
        // opposite order
        let a_first = sample_arrivals(&spec, (1, 3), 9, 1000, &streams);
        let c_after = sample_link_generation(&[0.5; 4], 9, &streams);
        assert_eq!(a_after, a_first);
        assert_eq!(c_first, c_after);
    }
}

//! The slot-by-slot simulation loop.
//!
//! Per slot: (1) sample arrivals with ns offsets; (2) process arrivals in
//! time order, serving the queue head immediately from stored end-to-end
//! pairs or an immediate swap when the protocol allows it; (3) sample link
//! generation, apply memory admission and stationary labeling; (4) ask the
//! protocol for its boundary decision; (5) draw swap outcomes and build the
//! resulting end-to-end pairs; (6) match supply to queued requests FIFO,
//! recording latency and fidelity; (7) discard pairs below the fidelity
//! threshold; (8) advance the queue-state bookkeeping; (9) run periodic
//! protocol discards. Boundary requests become eligible one slot after
//! arrival, so with immediate service disabled the queue counts follow the
//! slot-update equations of [`crate::model::step_queues`] exactly.

mod config;
mod result;

pub use config::{
    ArrivalsConfig, MemoryDrop, ProtocolConfig, RunConfig, RunSection, ScalarOrVec, SwitchConfig,
    TraceDetail,
};
pub use result::{
    format_float, Aggregates, DiscardCause, DiscardRow, DiscardTotals, RunResult, ServedRecord,
    TraceSeries,
};

use std::collections::VecDeque;

use crate::capacity::{self, StationaryPlan, Verdict};
use crate::error::{Error, Result};
use crate::model::{
    pair_iter, step_queues, EprPair, PairKind, PairMatrix, QueueState, RateMatrix, Request,
    SlotEvents, SwitchParams,
};
use crate::protocols::{
    MaxWeight, OnDemand, ProtocolKind, QubitPolicy, Scheduler, Stationary,
};
use crate::stochastic::{
    sample_arrivals, sample_link_generation, ArrivalSpec, RngStreams, SwapDraws,
};

/// Outcome of offering a fresh link pair to an interface's memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdmitOutcome {
    Admitted,
    /// Memory full; the fresh pair was dropped.
    DroppedNew,
    /// Memory full; the oldest stored pair (returned id) was evicted.
    EvictedOldest(u64),
}

/// Admission policy for one freshly generated pair. Stores stay in birth
/// order.
pub fn admit_pair(
    store: &mut VecDeque<EprPair>,
    pair: EprPair,
    mem_per_interface: Option<u64>,
    drop: MemoryDrop,
) -> AdmitOutcome {
    let full = mem_per_interface.is_some_and(|m| store.len() as u64 >= m);
    if !full {
        store.push_back(pair);
        return AdmitOutcome::Admitted;
    }
    match drop {
        MemoryDrop::Newest => AdmitOutcome::DroppedNew,
        MemoryDrop::Oldest => {
            let evicted = store.pop_front().expect("full store is nonempty");
            store.push_back(pair);
            AdmitOutcome::EvictedOldest(evicted.id)
        }
    }
}

/// Remove a pair by id, searching from both ends (scheduled consumption
/// happens at the ends of birth-ordered stores).
fn take_by_id(store: &mut VecDeque<EprPair>, id: u64) -> Option<EprPair> {
    let n = store.len();
    for step in 0..n.div_ceil(2) {
        if store[step].id == id {
            return store.remove(step);
        }
        let back = n - 1 - step;
        if store[back].id == id {
            return store.remove(back);
        }
    }
    None
}

/// The end-to-end pair produced by a Bell measurement on two link pairs at
/// `swap_ns`: the two switch-side dwells freeze, the end-node qubits keep
/// their birth clocks.
fn combine(left: &EprPair, right: &EprPair, pair: (usize, usize), id: u64, swap_ns: u64) -> EprPair {
    let frozen = left.frozen_dwell_ns
        + right.frozen_dwell_ns
        + (swap_ns - left.qubit_birth_ns[0])
        + (swap_ns - right.qubit_birth_ns[0]);
    EprPair {
        id,
        kind: PairKind::EndToEnd { a: pair.0, b: pair.1 },
        qubit_birth_ns: [left.qubit_birth_ns[1], right.qubit_birth_ns[1]],
        frozen_dwell_ns: frozen,
        label: None,
    }
}

/// Execute one simulation run. Deterministic given the config (seed
/// included).
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let params = config.switch.params()?;
    let specs = config.arrivals.specs(params.k)?;
    let rates = config.arrivals.rates(params.k)?;
    let scheduler = build_scheduler(config, &params, &rates)?;
    Runner::new(config, params, specs, scheduler)?.run()
}

/// Instantiate the configured protocol.
pub fn build_scheduler(
    config: &RunConfig,
    params: &SwitchParams,
    rates: &RateMatrix,
) -> Result<Box<dyn Scheduler>> {
    let pc = &config.protocol;
    match pc.name {
        ProtocolKind::OnDemand => Ok(Box::new(OnDemand::new(pc.visit_order))),
        ProtocolKind::Maxweight | ProtocolKind::MaxweightDiscard => {
            let t0 = match pc.t0 {
                Some(t0) => t0,
                None => derived_t0(config, params, rates)?,
            };
            Ok(Box::new(MaxWeight::new(params.k, t0, pc.name == ProtocolKind::MaxweightDiscard)))
        }
        ProtocolKind::Stationary | ProtocolKind::StationaryDiscard => {
            let discard = pc.name == ProtocolKind::StationaryDiscard;
            let plan = stationary_plan(config, params, rates)?;
            Ok(Box::new(Stationary::new(params.k, plan, discard)))
        }
    }
}

/// Period for max-weight protocols when the config leaves it out: built from
/// the concentration bounds at ε = half the feasible maximum.
fn derived_t0(config: &RunConfig, params: &SwitchParams, rates: &RateMatrix) -> Result<u64> {
    let report = capacity::region_membership(rates, params)?;
    if report.verdict != Verdict::Inside {
        return Err(Error::Config(
            "cannot derive t0 for rates outside the capacity region; set protocol.t0".into(),
        ));
    }
    if !config.arrivals.is_uniform() {
        return Err(Error::Config(
            "cannot derive t0 for per-pair arrival rates; set protocol.t0".into(),
        ));
    }
    let epsilon = config.protocol.epsilon.unwrap_or(report.max_epsilon / 2.0);
    let plan = capacity::build_stationary_plan(rates, params, epsilon, &config.arrivals.spec)?;
    Ok(plan.t0)
}

/// Stationary plan for the configured ε. Rates outside the region get a
/// best-effort plan with label probabilities scaled to fit each interface,
/// so that unstable operating points can still be simulated.
fn stationary_plan(
    config: &RunConfig,
    params: &SwitchParams,
    rates: &RateMatrix,
) -> Result<StationaryPlan> {
    let report = capacity::region_membership(rates, params)?;
    let needs_t0 = config.protocol.name == ProtocolKind::StationaryDiscard;
    if report.verdict == Verdict::Inside {
        let epsilon = config.protocol.epsilon.unwrap_or(report.max_epsilon / 2.0);
        return match (needs_t0, config.protocol.t0) {
            (_, Some(t0)) => capacity::build_stationary_plan_with_t0(rates, params, epsilon, t0),
            (true, None) if config.arrivals.is_uniform() => {
                capacity::build_stationary_plan(rates, params, epsilon, &config.arrivals.spec)
            }
            (true, None) => Err(Error::Config(
                "cannot derive t0 for per-pair arrival rates; set protocol.t0".into(),
            )),
            (false, None) => capacity::build_stationary_plan_with_t0(rates, params, epsilon, 1),
        };
    }
    if needs_t0 && config.protocol.t0.is_none() {
        return Err(Error::Config(
            "rates are not inside the capacity region; set protocol.t0 explicitly".into(),
        ));
    }
    Ok(clamped_plan(rates, params, config.protocol.t0.unwrap_or(1)))
}

/// Best-effort labeling plan for rates at or beyond the boundary: label in
/// proportion to `λ_ij / (q p_i)`, scaled per interface to total mass <= 1.
fn clamped_plan(rates: &RateMatrix, params: &SwitchParams, t0: u64) -> StationaryPlan {
    let k = params.k;
    let f_tilde = rates.matrix().map(|&l| l / params.q);
    let mut label_prob = vec![vec![0.0; k]; k];
    let mut idle_prob = vec![0.0; k];
    for i in 0..k {
        let raw: Vec<f64> = (0..k)
            .map(|j| {
                if j == i || params.p[i] == 0.0 {
                    0.0
                } else {
                    f_tilde.get(i, j) / params.p[i]
                }
            })
            .collect();
        let mass: f64 = raw.iter().sum();
        let scale = if mass > 1.0 { 1.0 / mass } else { 1.0 };
        for j in 0..k {
            label_prob[i][j] = raw[j] * scale;
        }
        idle_prob[i] = (1.0 - mass * scale).max(0.0);
    }
    StationaryPlan { f_tilde, epsilon: 0.0, label_prob, idle_prob, delta: 0.0, t0 }
}

struct Runner<'a> {
    config: &'a RunConfig,
    params: SwitchParams,
    specs: PairMatrix<ArrivalSpec>,
    scheduler: Box<dyn Scheduler>,
    immediate: bool,
    sweep_active: bool,
    streams: RngStreams,
    links: Vec<VecDeque<EprPair>>,
    e2e: PairMatrix<VecDeque<EprPair>>,
    queues: PairMatrix<VecDeque<Request>>,
    arrivals_cum: PairMatrix<u64>,
    served_cum: PairMatrix<u64>,
    next_pair_id: u64,
    next_request_id: u64,
    served: Vec<ServedRecord>,
    discard_rows: Vec<DiscardRow>,
    totals: DiscardTotals,
}

impl<'a> Runner<'a> {
    fn new(
        config: &'a RunConfig,
        params: SwitchParams,
        specs: PairMatrix<ArrivalSpec>,
        scheduler: Box<dyn Scheduler>,
    ) -> Result<Self> {
        let k = params.k;
        let immediate = config
            .protocol
            .immediate_service
            .unwrap_or_else(|| config.protocol.name.immediate_by_default());
        let sweep_active = params.fidelity_threshold > 0.5 && params.t2_ns.is_finite();
        Ok(Self {
            config,
            specs,
            scheduler,
            immediate,
            sweep_active,
            streams: RngStreams::new(config.run.seed),
            links: vec![VecDeque::new(); k],
            e2e: PairMatrix::new(k),
            queues: PairMatrix::new(k),
            arrivals_cum: PairMatrix::new(k),
            served_cum: PairMatrix::new(k),
            next_pair_id: 0,
            next_request_id: 0,
            served: Vec::new(),
            discard_rows: Vec::new(),
            totals: DiscardTotals::default(),
            params,
        })
    }

    fn run(mut self) -> Result<RunResult> {
        let k = self.params.k;
        let horizon = self.config.run.horizon_slots;
        let warmup = self.config.warmup();
        let slot_ns = self.params.slot_ns;
        let keep_series = self.config.run.trace == TraceDetail::Full;

        let mut state = QueueState::new(k);
        let mut series = keep_series.then(|| TraceSeries {
            u: vec![state.u.clone()],
            e: vec![state.e.clone()],
            e0: vec![state.e0.clone()],
            a: Vec::new(),
            c0: Vec::new(),
            f: Vec::new(),
            r: Vec::new(),
        });
        let mut backlog_sum = 0u64;
        let mut backlog_slots = 0u64;
        let mut arrivals_total = 0u64;

        for t in 0..horizon {
            if t >= warmup {
                backlog_sum += state.u.total();
                backlog_slots += 1;
            }
            let now_end = (t + 1) * slot_ns;
            let mut ev = SlotEvents::new(k);
            let mut budget = self.params.max_swaps_per_slot;
            let mut draws: PairMatrix<Option<SwapDraws>> = PairMatrix::new(k);
            let mut clean_slot = !self.immediate;

            // (1)-(2) arrivals in time order, with immediate service
            let mut slot_arrivals: Vec<(u64, (usize, usize))> = Vec::new();
            for (i, j) in pair_iter(k) {
                let (count, offsets) =
                    sample_arrivals(&self.specs.get(i, j), (i, j), t, slot_ns, &self.streams);
                ev.a.set(i, j, count);
                arrivals_total += count;
                for off in offsets {
                    slot_arrivals.push((off, (i, j)));
                }
            }
            slot_arrivals.sort_by_key(|&(off, pair)| (off, pair));
            for (off, (i, j)) in slot_arrivals {
                let arrival_ns = t * slot_ns + off;
                let request = Request {
                    id: self.next_request_id,
                    pair: (i, j),
                    arrival_ns,
                    arrival_slot: t,
                };
                self.next_request_id += 1;
                *self.arrivals_cum.get_mut(i, j) += 1;
                self.queues.get_mut(i, j).push_back(request);
                if self.immediate {
                    self.try_immediate((i, j), arrival_ns, t, &mut ev, &mut budget, &mut draws);
                }
            }

            // (3) link generation, admission, labeling
            let c0_raw = sample_link_generation(&self.params.p, t, &self.streams);
            for iface in 0..k {
                for _ in 0..c0_raw[iface] {
                    let mut pair = EprPair::link(self.next_pair_id, iface, now_end);
                    self.next_pair_id += 1;
                    let id = pair.id;
                    match admit_pair(
                        &mut self.links[iface],
                        pair.clone(),
                        self.params.mem_per_interface,
                        self.config.protocol.memory_drop,
                    ) {
                        AdmitOutcome::Admitted => {
                            ev.c0[iface] += 1;
                            if let Some(tag) = self.scheduler.label_fresh(iface, id, t, &self.streams) {
                                pair.label = Some(tag);
                                self.links[iface].back_mut().expect("just pushed").label = Some(tag);
                            }
                        }
                        AdmitOutcome::DroppedNew => {
                            self.discard(t, DiscardCause::MemoryFull, 1);
                            clean_slot = false;
                        }
                        AdmitOutcome::EvictedOldest(old_id) => {
                            ev.c0[iface] += 1;
                            self.scheduler.forget(iface, old_id);
                            self.discard(t, DiscardCause::MemoryFull, 1);
                            clean_slot = false;
                            if let Some(tag) = self.scheduler.label_fresh(iface, id, t, &self.streams) {
                                self.links[iface].back_mut().expect("just pushed").label = Some(tag);
                            }
                        }
                    }
                }
            }

            // (4) boundary decision
            let eligible = self.eligible_matrix(t);
            let decision = {
                let ctx = crate::protocols::DecisionCtx {
                    t,
                    eligible_u: &eligible,
                    links: &self.links,
                    qubit_policy: self.config.protocol.qubit_policy,
                    budget,
                };
                self.scheduler.decide(&ctx)
            };
            if let Some(b) = budget {
                if decision.f.total() > b {
                    return Err(Error::RunAborted {
                        slot: t,
                        cause: format!(
                            "protocol scheduled {} attempts over budget {b}",
                            decision.f.total()
                        ),
                    });
                }
            }

            // (5) swap outcomes and fidelities
            let mut fresh: PairMatrix<Vec<EprPair>> = PairMatrix::new(k);
            for attempt in &decision.attempts {
                let (i, j) = attempt.pair;
                let left = self.take_link(t, i, attempt.left_id)?;
                let right = self.take_link(t, j, attempt.right_id)?;
                *ev.f.get_mut(i, j) += 1;
                let ok = draws
                    .get_mut(i, j)
                    .get_or_insert_with(|| SwapDraws::new(self.params.q, (i, j), t, &self.streams))
                    .next_outcome();
                if ok {
                    *ev.r.get_mut(i, j) += 1;
                    let id = self.next_pair_id;
                    self.next_pair_id += 1;
                    fresh.get_mut(i, j).push(combine(&left, &right, (i, j), id, now_end));
                }
            }

            // (6) match supply to queued requests, oldest request first;
            // max-weight matches only at its decision slots
            let serves = self.scheduler.serves_at(t);
            if !serves {
                clean_slot = false;
            }
            for (i, j) in pair_iter(k) {
                if !serves {
                    break;
                }
                let mut fresh_pairs: VecDeque<EprPair> = std::mem::take(fresh.get_mut(i, j)).into();
                let eligible_n = eligible.get(i, j);
                let policy = self.config.protocol.qubit_policy;
                let stored = self.e2e.get_mut(i, j);
                let supply_n = stored.len() as u64 + fresh_pairs.len() as u64;
                let serve_n = eligible_n.min(supply_n);
                let mut records = Vec::with_capacity(serve_n as usize);
                {
                    let queue = self.queues.get_mut(i, j);
                    for _ in 0..serve_n {
                        let pair = match policy {
                            // YQF: freshest supply first (this slot's swaps,
                            // then newest stored); OQF: oldest stored first
                            QubitPolicy::Yqf => fresh_pairs
                                .pop_back()
                                .or_else(|| stored.pop_back())
                                .expect("supply sized above"),
                            QubitPolicy::Oqf => stored
                                .pop_front()
                                .or_else(|| fresh_pairs.pop_front())
                                .expect("supply sized above"),
                        };
                        let request = queue.pop_front().expect("eligible requests queued");
                        debug_assert!(request.arrival_slot < t, "boundary serves earlier arrivals");
                        records.push(ServedRecord {
                            pair: (i, j),
                            arrival_ns: request.arrival_ns,
                            served_ns: now_end,
                            fidelity: pair.fidelity(now_end, self.params.t2_ns),
                            arrival_slot: request.arrival_slot,
                            serve_slot: t,
                        });
                    }
                    stored.extend(fresh_pairs);
                }
                *self.served_cum.get_mut(i, j) += records.len() as u64;
                self.served.extend(records);
            }

            // (7) fidelity-threshold discards
            if self.sweep_active {
                let dropped = self.fidelity_sweep(t, now_end);
                if dropped > 0 {
                    clean_slot = false;
                }
            }

            // (9) periodic protocol discards
            if self.scheduler.discard_at_end(t) {
                self.flush_all(t);
                clean_slot = false;
            }

            // (8) bookkeeping
            let next_state = self.observed_state();
            #[cfg(debug_assertions)]
            self.assert_accounting(t);
            if clean_slot && self.params.mem_per_interface.is_none() {
                debug_assert_eq!(
                    step_queues(&state, &ev).expect("engine events satisfy the contract"),
                    next_state,
                    "slot {t}: queue dynamics diverged from the update equations"
                );
            }
            state = next_state;
            if let Some(s) = series.as_mut() {
                s.u.push(state.u.clone());
                s.e.push(state.e.clone());
                s.e0.push(state.e0.clone());
                s.a.push(ev.a);
                s.c0.push(ev.c0);
                s.f.push(ev.f);
                s.r.push(ev.r);
            }
        }

        let n_pairs = (k * (k - 1) / 2) as u64;
        let post: Vec<&ServedRecord> =
            self.served.iter().filter(|s| s.arrival_slot >= warmup).collect();
        let served_count = post.len() as u64;
        let mean = |f: &dyn Fn(&ServedRecord) -> f64| -> Option<f64> {
            (!post.is_empty()).then(|| post.iter().map(|s| f(s)).sum::<f64>() / post.len() as f64)
        };
        let mean_total_backlog = if backlog_slots > 0 {
            backlog_sum as f64 / backlog_slots as f64
        } else {
            0.0
        };
        let aggregates = Aggregates {
            arrivals_total,
            served_count,
            mean_fidelity: mean(&|s| s.fidelity),
            mean_latency_ns: mean(&|s| s.latency_ns() as f64),
            mean_latency_slots: mean(&|s| s.latency_slots() as f64),
            mean_total_backlog,
            mean_backlog_per_pair: mean_total_backlog / n_pairs as f64,
            final_total_backlog: state.u.total(),
        };
        Ok(RunResult {
            config: self.config.clone(),
            k,
            horizon,
            warmup,
            slot_ns,
            aggregates,
            discard_totals: self.totals,
            series,
            served: self.served,
            discard_rows: self.discard_rows,
        })
    }

    /// Requests eligible for boundary service: everything that arrived
    /// before this slot. This slot's arrivals sit at the queue tail.
    fn eligible_matrix(&self, t: u64) -> PairMatrix<u64> {
        PairMatrix::from_fn(self.params.k, |i, j| {
            let queue = self.queues.get_ref(i, j);
            let this_slot = queue.iter().rev().take_while(|r| r.arrival_slot == t).count();
            (queue.len() - this_slot) as u64
        })
    }

    /// Serve the queue head at arrival time: first from a stored end-to-end
    /// pair, otherwise through an immediate swap when the protocol offers
    /// one. One service opportunity per arrival.
    fn try_immediate(
        &mut self,
        pair: (usize, usize),
        now_ns: u64,
        t: u64,
        ev: &mut SlotEvents,
        budget: &mut Option<u64>,
        draws: &mut PairMatrix<Option<SwapDraws>>,
    ) {
        let (i, j) = pair;
        let policy = self.config.protocol.qubit_policy;
        let stored = self.e2e.get_mut(i, j);
        if let Some(e2e) = match policy {
            QubitPolicy::Yqf => stored.pop_back(),
            QubitPolicy::Oqf => stored.pop_front(),
        } {
            self.record_immediate(pair, &e2e, now_ns, t);
            return;
        }
        if budget.is_some_and(|b| b == 0) {
            return;
        }
        let Some((left_id, right_id)) = self.scheduler.immediate_pick(pair, &self.links, policy)
        else {
            return;
        };
        let left = take_by_id(&mut self.links[i], left_id).expect("protocol picked a live pair");
        let right = take_by_id(&mut self.links[j], right_id).expect("protocol picked a live pair");
        self.scheduler.forget(i, left_id);
        self.scheduler.forget(j, right_id);
        *ev.f.get_mut(i, j) += 1;
        if let Some(b) = budget.as_mut() {
            *b -= 1;
        }
        let ok = draws
            .get_mut(i, j)
            .get_or_insert_with(|| SwapDraws::new(self.params.q, (i, j), t, &self.streams))
            .next_outcome();
        if ok {
            *ev.r.get_mut(i, j) += 1;
            let id = self.next_pair_id;
            self.next_pair_id += 1;
            let e2e = combine(&left, &right, pair, id, now_ns);
            self.record_immediate(pair, &e2e, now_ns, t);
        }
    }

    fn record_immediate(&mut self, pair: (usize, usize), e2e: &EprPair, now_ns: u64, t: u64) {
        let (i, j) = pair;
        let request = self
            .queues
            .get_mut(i, j)
            .pop_front()
            .expect("immediate service triggered by an arrival");
        *self.served_cum.get_mut(i, j) += 1;
        self.served.push(ServedRecord {
            pair,
            arrival_ns: request.arrival_ns,
            served_ns: now_ns,
            fidelity: e2e.fidelity(now_ns, self.params.t2_ns),
            arrival_slot: request.arrival_slot,
            serve_slot: t,
        });
    }

    fn take_link(&mut self, t: u64, iface: usize, id: u64) -> Result<EprPair> {
        let pair = take_by_id(&mut self.links[iface], id).ok_or(Error::RunAborted {
            slot: t,
            cause: format!("protocol consumed unknown pair {id} on interface {iface}"),
        })?;
        self.scheduler.forget(iface, id);
        Ok(pair)
    }

    fn fidelity_sweep(&mut self, t: u64, now_ns: u64) -> u64 {
        let mut dropped = 0;
        for iface in 0..self.params.k {
            let store = &mut self.links[iface];
            let mut keep = VecDeque::with_capacity(store.len());
            for pair in store.drain(..) {
                if crate::physics::should_discard(&pair, now_ns, &self.params) {
                    self.scheduler.forget(iface, pair.id);
                    dropped += 1;
                } else {
                    keep.push_back(pair);
                }
            }
            *store = keep;
        }
        for (i, j) in pair_iter(self.params.k) {
            let store = self.e2e.get_mut(i, j);
            let before = store.len();
            let params = &self.params;
            store.retain(|pair| !crate::physics::should_discard(pair, now_ns, params));
            dropped += (before - store.len()) as u64;
        }
        if dropped > 0 {
            self.discard(t, DiscardCause::Fidelity, dropped);
        }
        dropped
    }

    fn flush_all(&mut self, t: u64) {
        let mut dropped = 0;
        for iface in 0..self.params.k {
            while let Some(pair) = self.links[iface].pop_front() {
                self.scheduler.forget(iface, pair.id);
                dropped += 1;
            }
        }
        for (i, j) in pair_iter(self.params.k) {
            dropped += self.e2e.get_mut(i, j).drain(..).count() as u64;
        }
        if dropped > 0 {
            self.discard(t, DiscardCause::ProtocolDiscard, dropped);
        }
    }

    fn discard(&mut self, t: u64, cause: DiscardCause, count: u64) {
        match cause {
            DiscardCause::MemoryFull => self.totals.memory_full += count,
            DiscardCause::Fidelity => self.totals.fidelity += count,
            DiscardCause::ProtocolDiscard => self.totals.protocol_discard += count,
        }
        if let Some(last) = self.discard_rows.last_mut() {
            if last.t == t && last.cause == cause {
                last.count += count;
                return;
            }
        }
        self.discard_rows.push(DiscardRow { t, cause, count });
    }

    /// Queue state derived from the object stores.
    fn observed_state(&self) -> QueueState {
        let k = self.params.k;
        QueueState {
            u: PairMatrix::from_fn(k, |i, j| self.queues.get_ref(i, j).len() as u64),
            e: PairMatrix::from_fn(k, |i, j| self.e2e.get_ref(i, j).len() as u64),
            e0: self.links.iter().map(|s| s.len() as u64).collect(),
        }
    }

    #[cfg(debug_assertions)]
    fn assert_accounting(&self, t: u64) {
        for (i, j) in pair_iter(self.params.k) {
            let arrived = self.arrivals_cum.get(i, j);
            let served = self.served_cum.get(i, j);
            let queued = self.queues.get_ref(i, j).len() as u64;
            assert_eq!(
                arrived,
                served + queued,
                "slot {t}: pair ({i},{j}) lost requests"
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(id: u64, birth: u64) -> EprPair {
        EprPair::link(id, 0, birth)
    }

    #[test]
    fn admission_respects_capacity() {
        let mut store = VecDeque::new();
        assert_eq!(admit_pair(&mut store, link(0, 10), None, MemoryDrop::Newest), AdmitOutcome::Admitted);
        assert_eq!(admit_pair(&mut store, link(1, 20), Some(1), MemoryDrop::Newest), AdmitOutcome::DroppedNew);
        assert_eq!(store.len(), 1);
        assert_eq!(
            admit_pair(&mut store, link(2, 30), Some(1), MemoryDrop::Oldest),
            AdmitOutcome::EvictedOldest(0)
        );
        assert_eq!(store.front().unwrap().id, 2);
    }

    #[test]
    fn take_by_id_searches_both_ends() {
        let mut store: VecDeque<EprPair> = (0..6).map(|i| link(i, i * 10)).collect();
        assert_eq!(take_by_id(&mut store, 5).unwrap().id, 5);
        assert_eq!(take_by_id(&mut store, 0).unwrap().id, 0);
        assert_eq!(take_by_id(&mut store, 2).unwrap().id, 2);
        assert!(take_by_id(&mut store, 9).is_none());
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn combine_freezes_switch_dwell() {
        // link pairs born at 1000 and 3000, swapped at 5000
        let a = link(0, 1000);
        let b = EprPair::link(1, 1, 3000);
        let e2e = combine(&a, &b, (0, 1), 7, 5000);
        assert_eq!(e2e.frozen_dwell_ns, 4000 + 2000);
        assert_eq!(e2e.qubit_birth_ns, [1000, 3000]);
        // at swap time: total dwell = frozen + survivors' dwell
        assert_eq!(e2e.total_dwell_ns(5000), 6000 + 4000 + 2000);
        assert_eq!(
            e2e.fidelity(5000, 1e6),
            crate::physics::swap_fidelity([4000.0, 4000.0], [2000.0, 2000.0], 1e6)
        );
    }

    #[test]
    fn zero_horizon_is_empty() {
        let config = RunConfig::from_json(
            r#"{
                "switch": {"k": 3, "p": 0.9, "q": 0.9},
                "arrivals": {"family": "bernoulli", "rate": 0.2},
                "protocol": {"name": "on-demand"},
                "run": {"horizon_slots": 0, "seed": 1}
            }"#,
        )
        .unwrap();
        let result = run(&config).unwrap();
        assert_eq!(result.aggregates.arrivals_total, 0);
        assert!(result.served.is_empty());
        assert_eq!(result.series.as_ref().unwrap().u.len(), 1);
    }
}

//! CLI driver: config ingestion, single runs, parameter sweeps, and
//! experiment presets, with data-only CSV/JSON outputs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{stability_verdict_for_run, StabilityVerdict};
use crate::capacity::{boundary_q, region_membership};
use crate::engine::{self, format_float, RunConfig, RunResult, ScalarOrVec, TraceDetail};
use crate::error::{Error, Result};
use crate::model::pair_iter;
use crate::protocols::{ProtocolKind, QubitPolicy};
use crate::stochastic::ArrivalSpec;

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Q,
    T2,
    Mem,
    LambdaScale,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "q" => Ok(SweepParam::Q),
            "T2" | "t2" => Ok(SweepParam::T2),
            "mem" => Ok(SweepParam::Mem),
            "lambda_scale" => Ok(SweepParam::LambdaScale),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected q, T2, mem, or lambda_scale"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Q => "q",
            SweepParam::T2 => "T2",
            SweepParam::Mem => "mem",
            SweepParam::LambdaScale => "lambda_scale",
        }
    }
}

/// A config with one parameter overridden.
pub fn apply_param(base: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig> {
    let mut config = base.clone();
    match param {
        SweepParam::Q => config.switch.q = value,
        SweepParam::T2 => config.switch.t2_ns = Some(value),
        SweepParam::Mem => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("mem value {value} must be a positive integer")));
            }
            config.switch.mem_per_interface = Some(value as u64);
        }
        SweepParam::LambdaScale => {
            config.arrivals.spec = scale_spec(&config.arrivals.spec, value)?;
            if let Some(matrix) = config.arrivals.rate_matrix.as_mut() {
                for row in matrix {
                    for entry in row {
                        *entry *= value;
                    }
                }
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn scale_spec(spec: &ArrivalSpec, alpha: f64) -> Result<ArrivalSpec> {
    match *spec {
        ArrivalSpec::Bernoulli { rate } => Ok(ArrivalSpec::Bernoulli { rate: rate * alpha }),
        ArrivalSpec::MixedPoisson { lambda1, lambda2 } => Ok(ArrivalSpec::MixedPoisson {
            lambda1: lambda1 * alpha,
            lambda2: lambda2 * alpha,
        }),
        ArrivalSpec::Constant { .. } => Err(Error::Config(
            "lambda_scale does not apply to constant arrivals".into(),
        )),
    }
}

/// Capacity membership report for a config.
pub fn cmd_capacity(config: &RunConfig, out: &mut dyn std::io::Write) -> Result<()> {
    let params = config.switch.params()?;
    let rates = config.arrivals.rates(params.k)?;
    let report = region_membership(&rates, &params)?;
    let q_star = boundary_q(&rates, &params)?;
    writeln!(out, "verdict: {}", serde_json::to_value(report.verdict)?.as_str().unwrap())?;
    writeln!(out, "margin: {}", format_float(report.margin))?;
    writeln!(out, "max_epsilon: {}", format_float(report.max_epsilon))?;
    if q_star > 1.0 {
        writeln!(out, "boundary_q: {} (never stable)", format_float(q_star))?;
    } else {
        writeln!(out, "boundary_q: {}", format_float(q_star))?;
    }
    writeln!(out, "minimal_flow (f = lambda/q):")?;
    for (i, j) in pair_iter(params.k) {
        writeln!(out, "  f_{}_{} = {}", i + 1, j + 1, format_float(report.flow.get(i, j)))?;
    }
    Ok(())
}

/// Execute one run and write `summary.json` plus the CSV traces into `out`.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<RunResult> {
    let result = engine::run(config)?;
    result.write_outputs(out_dir)?;
    Ok(result)
}

fn verdict_label(v: StabilityVerdict) -> &'static str {
    match v {
        StabilityVerdict::Stable => "stable",
        StabilityVerdict::Unstable => "unstable",
        StabilityVerdict::Inconclusive => "inconclusive",
    }
}

struct SweepRow {
    value: f64,
    seed: String,
    mean_fidelity: Option<f64>,
    mean_latency_ns: Option<f64>,
    verdict: String,
}

/// Run `values × seeds` simulations and write one CSV: a row per
/// `(value, seed)` plus a mean row per value. Columns: `param`, `value`,
/// `seed`, `mean_fidelity`, `mean_latency_ns`, `stability_verdict`.
pub fn cmd_sweep(
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
    seeds: u64,
    jobs: usize,
    out_path: &Path,
) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let mut tasks = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        let mut config = apply_param(base, param, value)?;
        config.run.trace = TraceDetail::Full;
        for s in 0..seeds {
            let mut run_config = config.clone();
            run_config.run.seed = base.run.seed + s;
            tasks.push((vi, value, s, run_config));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut outcomes: Vec<(usize, u64, SweepRow)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(vi, value, s, run_config)| {
                let result = engine::run(run_config)?;
                let verdict = stability_verdict_for_run(&result)?.verdict;
                let row = SweepRow {
                    value: *value,
                    seed: run_config.run.seed.to_string(),
                    mean_fidelity: result.aggregates.mean_fidelity,
                    mean_latency_ns: result.aggregates.mean_latency_ns,
                    verdict: verdict_label(verdict).to_string(),
                };
                Ok((*vi, *s, row))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    outcomes.sort_by_key(|&(vi, s, _)| (vi, s));

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(out_path)?;
    w.write_record(["param", "value", "seed", "mean_fidelity", "mean_latency_ns", "stability_verdict"])?;
    for (vi, _) in values.iter().enumerate() {
        let rows: Vec<&SweepRow> =
            outcomes.iter().filter(|&&(i, _, _)| i == vi).map(|(_, _, r)| r).collect();
        for row in &rows {
            write_sweep_row(&mut w, param, row)?;
        }
        let mean_row = SweepRow {
            value: rows[0].value,
            seed: "mean".to_string(),
            mean_fidelity: mean_of(rows.iter().map(|r| r.mean_fidelity)),
            mean_latency_ns: mean_of(rows.iter().map(|r| r.mean_latency_ns)),
            verdict: combine_verdicts(rows.iter().map(|r| r.verdict.as_str())),
        };
        write_sweep_row(&mut w, param, &mean_row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sweep_row(w: &mut csv::Writer<std::fs::File>, param: SweepParam, row: &SweepRow) -> Result<()> {
    w.write_record(&[
        param.label().to_string(),
        format_float(row.value),
        row.seed.clone(),
        row.mean_fidelity.map(format_float).unwrap_or_default(),
        row.mean_latency_ns.map(format_float).unwrap_or_default(),
        row.verdict.clone(),
    ])?;
    Ok(())
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

fn combine_verdicts<'a>(verdicts: impl Iterator<Item = &'a str>) -> String {
    let all: Vec<&str> = verdicts.collect();
    if all.iter().all(|&v| v == all[0]) {
        all[0].to_string()
    } else {
        "mixed".to_string()
    }
}

pub const PRESET_NAMES: &[&str] = &["table-heavy", "table-light", "fig-memory", "fig-T2", "fig-q"];

const PRESET_HORIZON: u64 = 20_000;

fn base_config(k: usize, rate: f64, seed: u64) -> RunConfig {
    RunConfig {
        switch: engine::SwitchConfig {
            k,
            p: ScalarOrVec::Scalar(0.9),
            q: 0.9,
            max_swaps_per_slot: None,
            mem_per_interface: Some(100),
            t2_ns: Some(1e6),
            slot_ns: 1000,
            fidelity_threshold: 0.8,
        },
        arrivals: engine::ArrivalsConfig {
            spec: ArrivalSpec::MixedPoisson { lambda1: 0.5 * rate, lambda2: 1.5 * rate },
            rate_matrix: None,
        },
        protocol: engine::ProtocolConfig {
            name: ProtocolKind::OnDemand,
            qubit_policy: QubitPolicy::Yqf,
            request_policy: crate::protocols::RequestPolicy::Fifo,
            visit_order: Default::default(),
            epsilon: None,
            t0: None,
            immediate_service: None,
            memory_drop: Default::default(),
        },
        run: engine::RunSection {
            horizon_slots: PRESET_HORIZON,
            seed,
            warmup_slots: None,
            trace: TraceDetail::Aggregates,
        },
    }
}

fn table_protocols() -> Vec<(&'static str, ProtocolKind, Option<u64>)> {
    vec![
        ("stationary", ProtocolKind::Stationary, None),
        ("maxweight-t0-1", ProtocolKind::Maxweight, Some(1)),
        ("maxweight-t0-20", ProtocolKind::Maxweight, Some(20)),
        ("on-demand", ProtocolKind::OnDemand, None),
    ]
}

/// Run a named experiment preset and write its combined CSV into `out_dir`.
///
/// - `table-heavy` / `table-light`: the four protocol variants under YQF and
///   OQF at per-pair rate 0.2 / 0.12 (K = 5).
/// - `fig-memory`, `fig-T2`, `fig-q`: on-demand YQF/OQF curves for K = 4 and
///   K = 8 over the swept parameter, 3 seeds per point.
pub fn cmd_preset(name: &str, seed: u64, jobs: usize, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match name {
        "table-heavy" => preset_table(0.2, seed, jobs, &out_dir.join("table-heavy.csv")),
        "table-light" => preset_table(0.12, seed, jobs, &out_dir.join("table-light.csv")),
        "fig-memory" => preset_fig(
            SweepParam::Mem,
            &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            seed,
            jobs,
            &out_dir.join("fig-memory.csv"),
        ),
        "fig-T2" => preset_fig(
            SweepParam::T2,
            &[2e5, 5e5, 1e6, 2e6, 5e6],
            seed,
            jobs,
            &out_dir.join("fig-T2.csv"),
        ),
        "fig-q" => preset_fig(
            SweepParam::Q,
            &(6..=19).map(|i| i as f64 * 0.05).collect::<Vec<_>>(),
            seed,
            jobs,
            &out_dir.join("fig-q.csv"),
        ),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

/// Protocol-comparison table: 8 rows (protocol × qubit policy).
fn preset_table(rate: f64, seed: u64, jobs: usize, out_path: &Path) -> Result<()> {
    let mut tasks = Vec::new();
    for (pi, (label, kind, t0)) in table_protocols().into_iter().enumerate() {
        for (qi, policy) in [QubitPolicy::Yqf, QubitPolicy::Oqf].into_iter().enumerate() {
            let mut config = base_config(5, rate, seed + (pi * 2 + qi) as u64);
            config.protocol.name = kind;
            config.protocol.t0 = t0;
            config.protocol.qubit_policy = policy;
            tasks.push((pi, qi, label, policy, config));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<(usize, usize, String, String, Option<f64>, Option<f64>)> =
        pool.install(|| {
            tasks
                .par_iter()
                .map(|(pi, qi, label, policy, config)| {
                    let result = engine::run(config)?;
                    Ok((
                        *pi,
                        *qi,
                        label.to_string(),
                        policy_label(*policy).to_string(),
                        result.aggregates.mean_fidelity,
                        result.aggregates.mean_latency_ns,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
    rows.sort_by_key(|&(pi, qi, ..)| (pi, qi));

    let mut w = csv::Writer::from_path(out_path)?;
    w.write_record(["protocol", "policy", "mean_fidelity", "mean_latency_us"])?;
    for (_, _, label, policy, fid, lat) in rows {
        w.write_record(&[
            label,
            policy,
            fid.map(format_float).unwrap_or_default(),
            lat.map(|ns| format_float(ns / 1000.0)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn policy_label(policy: QubitPolicy) -> &'static str {
    match policy {
        QubitPolicy::Yqf => "yqf",
        QubitPolicy::Oqf => "oqf",
    }
}

/// Figure presets: on-demand YQF/OQF, K in {4, 8}, 3 seeds per grid point.
/// K = 4 runs at a per-pair rate beyond its boundary, K = 8 inside, matching
/// the qualitative split in the reference curves.
fn preset_fig(
    param: SweepParam,
    values: &[f64],
    seed: u64,
    jobs: usize,
    out_path: &Path,
) -> Result<()> {
    const SEEDS: u64 = 3;
    let rate_for = |k: usize| match (param, k) {
        // q sweep: boundaries fall mid-grid (q* = 0.575 and ~0.425)
        (SweepParam::Q, 4) => 0.1725,
        (SweepParam::Q, 8) => 0.0546,
        // memory / T2 sweeps: K=4 beyond its boundary, K=8 inside
        (_, 4) => 0.32,
        _ => 0.0429,
    };
    let mut tasks = Vec::new();
    for (ki, &k) in [4usize, 8].iter().enumerate() {
        for (qi, policy) in [QubitPolicy::Yqf, QubitPolicy::Oqf].into_iter().enumerate() {
            for (vi, &value) in values.iter().enumerate() {
                let base = base_config(k, rate_for(k), seed);
                let mut config = apply_param(&base, param, value)?;
                config.protocol.qubit_policy = policy;
                for s in 0..SEEDS {
                    let mut run_config = config.clone();
                    run_config.run.seed = seed + s + (((ki * 2 + qi) * values.len() + vi) as u64) * SEEDS;
                    tasks.push((ki, qi, vi, s, k, policy, value, run_config));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<(usize, usize, usize, u64, usize, QubitPolicy, f64, Option<f64>, Option<f64>)> =
        pool.install(|| {
            tasks
                .par_iter()
                .map(|(ki, qi, vi, s, k, policy, value, run_config)| {
                    let result = engine::run(run_config)?;
                    Ok((
                        *ki,
                        *qi,
                        *vi,
                        *s,
                        *k,
                        *policy,
                        *value,
                        result.aggregates.mean_fidelity,
                        result.aggregates.mean_latency_ns,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
    rows.sort_by_key(|&(ki, qi, vi, s, ..)| (ki, qi, vi, s));

    let mut w = csv::Writer::from_path(out_path)?;
    w.write_record(["k", "policy", param.label(), "seed", "mean_fidelity", "mean_latency_us"])?;
    for group in rows.chunks(SEEDS as usize) {
        for &(_, _, _, s, k, policy, value, fid, lat) in group {
            w.write_record(&[
                k.to_string(),
                policy_label(policy).to_string(),
                format_float(value),
                s.to_string(),
                fid.map(format_float).unwrap_or_default(),
                lat.map(|ns| format_float(ns / 1000.0)).unwrap_or_default(),
            ])?;
        }
        let (_, _, _, _, k, policy, value, ..) = group[0];
        w.write_record(&[
            k.to_string(),
            policy_label(policy).to_string(),
            format_float(value),
            "mean".to_string(),
            mean_of(group.iter().map(|r| r.7)).map(format_float).unwrap_or_default(),
            mean_of(group.iter().map(|r| r.8))
                .map(|ns| format_float(ns / 1000.0))
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Post-hoc diagnostics over completed traces: the empirical stability
//! functional, backlog-growth verdicts, T-step Lyapunov drift samples, and
//! the Little's-law latency cross-check.
//!
//! All quantities are finite-horizon plug-in proxies for the asymptotic
//! definitions; horizons and windows are reported alongside. The verdict
//! thresholds are engineering defaults, not derived constants.

use serde::{Deserialize, Serialize};

use crate::engine::{RunResult, ServedRecord, TraceSeries};
use crate::error::{Error, Result};
use crate::model::{pair_iter, PairMatrix};

/// Default `V` grid for ĝ curves.
pub const DEFAULT_V_GRID: &[u64] = &[0, 1, 2, 5, 10, 20, 50, 100, 200, 500];

/// Verdict thresholds (documented heuristics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    /// ĝ at `V = stable_v_factor × mean backlog` must fall below this for a
    /// stable verdict.
    pub stable_g_max: f64,
    /// ĝ at the top of the grid must exceed this for an unstable verdict.
    pub unstable_g_min: f64,
    /// Multiplier on the per-pair mean backlog for the stable ĝ probe.
    pub stable_v_factor: f64,
    /// Absolute slope (requests/slot) below which growth is treated as zero.
    pub slope_zero_tol: f64,
    /// Number of batch means used for the slope confidence interval.
    pub batches: usize,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            stable_g_max: 0.05,
            unstable_g_min: 0.1,
            stable_v_factor: 10.0,
            slope_zero_tol: 1e-3,
            batches: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Least-squares slope of a series with a batch-means confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// First slot of the fitted window.
    pub window_start: u64,
    pub window_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub slope: SlopeEstimate,
    pub v_grid: Vec<u64>,
    /// `g_curves[p][v]` = ĝ for pair `p` (lexicographic order) at `v_grid[v]`.
    pub g_curves: Vec<Vec<f64>>,
    /// Worst-pair ĝ at the top of the grid.
    pub g_at_vmax: f64,
    /// Worst-pair ĝ at `stable_v_factor ×` that pair's mean backlog.
    pub g_at_scaled_mean: f64,
    pub horizon: u64,
    pub thresholds: VerdictConfig,
}

/// Finite-horizon estimator of the stability functional: the fraction of
/// slots with backlog above `V`, per pair, over the supplied grid.
pub fn empirical_g(u_series: &[PairMatrix<u64>], v_grid: &[u64]) -> Result<Vec<Vec<f64>>> {
    let n = u_series.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let k = u_series[0].k();
    let n_pairs = k * (k - 1) / 2;
    let mut curves = vec![vec![0.0; v_grid.len()]; n_pairs];
    for state in u_series {
        for (p, (i, j)) in pair_iter(k).enumerate() {
            let u = state.get(i, j);
            for (vi, &v) in v_grid.iter().enumerate() {
                if u > v {
                    curves[p][vi] += 1.0;
                }
            }
        }
    }
    for curve in &mut curves {
        for val in curve.iter_mut() {
            *val /= n as f64;
        }
    }
    Ok(curves)
}

/// ĝ for one pair's scalar series at a single threshold.
pub fn empirical_g_scalar(series: &[u64], v: u64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    series.iter().filter(|&&u| u > v).count() as f64 / series.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LyapunovKind {
    /// `L(u) = Σ u_ij²`
    Quadratic,
    /// `L(u) = Σ u_ij`
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub t_step: u64,
    pub kind: LyapunovKind,
    /// `(t, L(U(t+T)) - L(U(t)))` at `t = mT`.
    pub samples: Vec<(u64, f64)>,
    pub mean: f64,
    /// Affine fit `drift ≈ c - θ · Σ u_ij(t)` over the samples.
    pub fit_c: f64,
    pub fit_theta: f64,
    /// Mean drift over samples whose total backlog is at or above the 90th
    /// percentile; `None` with fewer than 10 samples.
    pub mean_high_backlog: Option<f64>,
}

fn lyapunov(state: &PairMatrix<u64>, kind: LyapunovKind) -> f64 {
    state
        .values()
        .map(|&u| match kind {
            LyapunovKind::Quadratic => (u as f64) * (u as f64),
            LyapunovKind::Linear => u as f64,
        })
        .sum()
}

/// Sampled T-step Lyapunov drift along a trace.
pub fn drift_estimate(
    u_series: &[PairMatrix<u64>],
    t_step: u64,
    kind: LyapunovKind,
) -> Result<DriftEstimate> {
    if t_step == 0 {
        return Err(Error::InvalidInput("T must be positive".into()));
    }
    if (u_series.len() as u64) <= t_step {
        return Err(Error::InvalidInput(format!(
            "trace of {} states is too short for T = {t_step}",
            u_series.len()
        )));
    }
    let mut samples = Vec::new();
    let mut backlogs = Vec::new();
    let mut t = 0u64;
    while (t + t_step) < u_series.len() as u64 {
        let drift = lyapunov(&u_series[(t + t_step) as usize], kind)
            - lyapunov(&u_series[t as usize], kind);
        samples.push((t, drift));
        backlogs.push(u_series[t as usize].total() as f64);
        t += t_step;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&(_, d)| d).sum::<f64>() / n;

    // least squares of drift on total backlog
    let mean_x = backlogs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&(_, d), &x) in samples.iter().zip(&backlogs) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (d - mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let fit_theta = -slope;
    let fit_c = mean + fit_theta * mean_x;

    let mean_high_backlog = (samples.len() >= 10).then(|| {
        let mut sorted = backlogs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite backlogs"));
        let q90 = sorted[(0.9 * (sorted.len() - 1) as f64).round() as usize];
        let high: Vec<f64> = samples
            .iter()
            .zip(&backlogs)
            .filter(|&(_, &x)| x >= q90)
            .map(|(&(_, d), _)| d)
            .collect();
        high.iter().sum::<f64>() / high.len() as f64
    });

    Ok(DriftEstimate { t_step, kind, samples, mean, fit_c, fit_theta, mean_high_backlog })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LittlesLawCheck {
    /// Mean whole-slot latency of served requests.
    pub mean_latency_slots: Option<f64>,
    /// Time-averaged total backlog.
    pub mean_queue: f64,
    /// Served requests per slot.
    pub rate: f64,
    /// `mean_queue / (rate × mean_latency_slots)`; 1 when Little's law holds
    /// on the trace.
    pub ratio: Option<f64>,
}

/// Cross-check `L = λ W` on a completed run: time-averaged backlog against
/// throughput times mean latency, both in slot units.
pub fn littles_law_check(served: &[ServedRecord], u_series: &[PairMatrix<u64>]) -> LittlesLawCheck {
    let slots = u_series.len().saturating_sub(1);
    let mean_queue = if slots > 0 {
        u_series[..slots].iter().map(|s| s.total() as f64).sum::<f64>() / slots as f64
    } else {
        0.0
    };
    if served.is_empty() || slots == 0 {
        return LittlesLawCheck { mean_latency_slots: None, mean_queue, rate: 0.0, ratio: None };
    }
    let mean_latency =
        served.iter().map(|s| s.latency_slots() as f64).sum::<f64>() / served.len() as f64;
    let rate = served.len() as f64 / slots as f64;
    let ratio = (mean_latency > 0.0).then(|| mean_queue / (rate * mean_latency));
    LittlesLawCheck { mean_latency_slots: Some(mean_latency), mean_queue, rate, ratio }
}

/// OLS slope of `series` over its last half, with a confidence interval from
/// batch means (autocorrelation-robust at simulation scale).
pub fn backlog_slope(series: &[f64], batches: usize) -> SlopeEstimate {
    let n = series.len();
    let start = n / 2;
    let window = &series[start..];
    let m = window.len();
    if m < 4 {
        return SlopeEstimate {
            slope: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            window_start: start as u64,
            window_len: m as u64,
        };
    }
    let b = batches.clamp(2, m / 2);
    let batch_len = m / b;
    let mut xs = Vec::with_capacity(b);
    let mut ys = Vec::with_capacity(b);
    for batch in 0..b {
        let lo = batch * batch_len;
        let hi = lo + batch_len;
        let mean = window[lo..hi].iter().sum::<f64>() / batch_len as f64;
        xs.push((lo + hi) as f64 / 2.0);
        ys.push(mean);
    }
    let mean_x = xs.iter().sum::<f64>() / b as f64;
    let mean_y = ys.iter().sum::<f64>() / b as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mut sse = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let fit = mean_y + slope * (x - mean_x);
        sse += (y - fit) * (y - fit);
    }
    let dof = (b - 2).max(1) as f64;
    let se = (sse / dof / sxx.max(f64::MIN_POSITIVE)).sqrt();
    // two-sided ~97.5% t quantile for moderate dof
    let t_crit = 2.01;
    SlopeEstimate {
        slope,
        ci_low: slope - t_crit * se,
        ci_high: slope + t_crit * se,
        window_start: start as u64,
        window_len: m as u64,
    }
}

/// Finite-horizon stability verdict: growth-slope test on the total backlog
/// over the last half of the trace combined with ĝ probes.
pub fn stability_verdict(series: &TraceSeries, cfg: &VerdictConfig) -> Result<StabilityReport> {
    let u_series = &series.u;
    let horizon = u_series.len().saturating_sub(1) as u64;
    if u_series.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let k = u_series[0].k();

    let totals: Vec<f64> = u_series.iter().map(|s| s.total() as f64).collect();
    let slope = backlog_slope(&totals, cfg.batches);

    let g_curves = empirical_g(u_series, DEFAULT_V_GRID)?;
    let g_at_vmax = g_curves
        .iter()
        .map(|c| *c.last().expect("nonempty grid"))
        .fold(0.0f64, f64::max);

    // per-pair ĝ at stable_v_factor × that pair's mean backlog
    let n = u_series.len() as f64;
    let mut g_at_scaled_mean = 0.0f64;
    for (p, (i, j)) in pair_iter(k).enumerate() {
        let _ = p;
        let mean = u_series.iter().map(|s| s.get(i, j) as f64).sum::<f64>() / n;
        let v = (cfg.stable_v_factor * mean).ceil() as u64;
        let pair_series: Vec<u64> = u_series.iter().map(|s| s.get(i, j)).collect();
        g_at_scaled_mean = g_at_scaled_mean.max(empirical_g_scalar(&pair_series, v));
    }

    let slope_zero = (slope.ci_low <= 0.0 && slope.ci_high >= 0.0)
        || slope.slope.abs() < cfg.slope_zero_tol;
    let growing = slope.ci_low > 0.0 && slope.slope >= cfg.slope_zero_tol;

    let verdict = if growing && g_at_vmax > cfg.unstable_g_min {
        StabilityVerdict::Unstable
    } else if slope_zero && g_at_scaled_mean < cfg.stable_g_max {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Inconclusive
    };

    Ok(StabilityReport {
        verdict,
        slope,
        v_grid: DEFAULT_V_GRID.to_vec(),
        g_curves,
        g_at_vmax,
        g_at_scaled_mean,
        horizon,
        thresholds: *cfg,
    })
}

/// Convenience wrapper over a finished run (requires a full trace).
pub fn stability_verdict_for_run(result: &RunResult) -> Result<StabilityReport> {
    let series = result.series.as_ref().ok_or_else(|| {
        Error::InvalidInput("stability verdict needs a full trace (run.trace = \"full\")".into())
    })?;
    stability_verdict(series, &VerdictConfig::default())
}

/// Write ĝ curves as CSV: `pair`, `v`, `g`.
pub fn write_g_curves_csv(report: &StabilityReport, k: usize, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pair", "v", "g"])?;
    for (p, (i, j)) in pair_iter(k).enumerate() {
        for (vi, &v) in report.v_grid.iter().enumerate() {
            w.write_record(&[
                format!("{}-{}", i + 1, j + 1),
                v.to_string(),
                format!("{}", report.g_curves[p][vi]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_series(vals: &[u64]) -> Vec<PairMatrix<u64>> {
        vals.iter()
            .map(|&v| {
                let mut m = PairMatrix::new(2);
                m.set(0, 1, v);
                m
            })
            .collect()
    }

    #[test]
    fn g_zero_trace() {
        let series = scalar_series(&[0, 0, 0, 0]);
        let curves = empirical_g(&series, &[0, 1, 5]).unwrap();
        assert_eq!(curves[0], vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn g_direct_count() {
        let series = scalar_series(&[0, 5, 0, 5]);
        let curves = empirical_g(&series, &[3]).unwrap();
        assert_eq!(curves[0][0], 0.5);
    }

    #[test]
    fn g_nonincreasing_in_v() {
        let series = scalar_series(&[3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5]);
        let grid: Vec<u64> = (0..10).collect();
        let curves = empirical_g(&series, &grid).unwrap();
        for w in curves[0].windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(curves[0][0] <= 1.0);
    }

    #[test]
    fn drift_constant_trace_is_zero() {
        let series = scalar_series(&[4; 20]);
        let d = drift_estimate(&series, 3, LyapunovKind::Quadratic).unwrap();
        assert!(d.samples.iter().all(|&(_, v)| v == 0.0));
        assert_eq!(d.mean, 0.0);
    }

    #[test]
    fn drift_linear_growth_quadratic_lyapunov() {
        // U(t) = t, T = 2: samples (t+2)^2 - t^2 = 4t + 4
        let vals: Vec<u64> = (0..20).collect();
        let series = scalar_series(&vals);
        let d = drift_estimate(&series, 2, LyapunovKind::Quadratic).unwrap();
        for &(t, v) in &d.samples {
            assert_eq!(v, (4 * t + 4) as f64);
        }
    }

    #[test]
    fn drift_needs_enough_trace() {
        let series = scalar_series(&[1, 2]);
        assert!(drift_estimate(&series, 5, LyapunovKind::Linear).is_err());
    }

    #[test]
    fn littles_empty_served() {
        let series = scalar_series(&[0, 0, 0]);
        let check = littles_law_check(&[], &series);
        assert!(check.mean_latency_slots.is_none());
        assert!(check.ratio.is_none());
    }

    #[test]
    fn littles_identity_on_synthetic_trace() {
        // one request per slot, each waiting exactly one slot: mean queue 1,
        // rate 1, latency 1
        let series = scalar_series(&[1; 101]);
        let served: Vec<ServedRecord> = (0..100)
            .map(|t| ServedRecord {
                pair: (0, 1),
                arrival_ns: t * 1000 + 500,
                served_ns: (t + 2) * 1000,
                fidelity: 1.0,
                arrival_slot: t,
                serve_slot: t + 1,
            })
            .collect();
        let check = littles_law_check(&served, &series);
        assert_eq!(check.mean_latency_slots, Some(1.0));
        let ratio = check.ratio.unwrap();
        assert!((ratio - 1.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn slope_flat_vs_growing() {
        let flat: Vec<f64> = (0..1000).map(|i| 5.0 + ((i * 37) % 11) as f64 * 0.1).collect();
        let s = backlog_slope(&flat, 50);
        assert!(s.ci_low <= 0.0 && s.ci_high >= 0.0 || s.slope.abs() < 1e-3);

        let growing: Vec<f64> = (0..1000).map(|i| i as f64 * 0.05).collect();
        let s = backlog_slope(&growing, 50);
        assert!(s.ci_low > 0.0);
        assert!((s.slope - 0.05).abs() < 0.01);
    }

    #[test]
    fn verdict_zero_arrivals_is_stable() {
        let series = TraceSeries {
            u: scalar_series(&vec![0; 20001]),
            e: scalar_series(&vec![0; 20001]),
            e0: vec![vec![0, 0]; 20001],
            a: scalar_series(&vec![0; 20000]),
            c0: vec![vec![0, 0]; 20000],
            f: scalar_series(&vec![0; 20000]),
            r: scalar_series(&vec![0; 20000]),
        };
        let report = stability_verdict(&series, &VerdictConfig::default()).unwrap();
        assert_eq!(report.verdict, StabilityVerdict::Stable);
    }

    #[test]
    fn verdict_linear_growth_is_unstable() {
        let vals: Vec<u64> = (0..20001).map(|t| t / 10).collect();
        let series = TraceSeries {
            u: scalar_series(&vals),
            e: scalar_series(&vec![0; 20001]),
            e0: vec![vec![0, 0]; 20001],
            a: scalar_series(&vec![0; 20000]),
            c0: vec![vec![0, 0]; 20000],
            f: scalar_series(&vec![0; 20000]),
            r: scalar_series(&vec![0; 20000]),
        };
        let report = stability_verdict(&series, &VerdictConfig::default()).unwrap();
        assert_eq!(report.verdict, StabilityVerdict::Unstable);
    }
}

//! Run outputs: per-slot series, served-request records, discard counts,
//! aggregate metrics, and the JSON/CSV emitters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{pair_iter, PairMatrix};

use super::config::RunConfig;

/// Why a stored pair left memory early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardCause {
    MemoryFull,
    Fidelity,
    ProtocolDiscard,
}

impl DiscardCause {
    pub fn label(self) -> &'static str {
        match self {
            DiscardCause::MemoryFull => "memory-full",
            DiscardCause::Fidelity => "fidelity",
            DiscardCause::ProtocolDiscard => "protocol-discard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardRow {
    pub t: u64,
    pub cause: DiscardCause,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardTotals {
    pub memory_full: u64,
    pub fidelity: u64,
    pub protocol_discard: u64,
}

/// One served entanglement request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServedRecord {
    pub pair: (usize, usize),
    pub arrival_ns: u64,
    pub served_ns: u64,
    pub fidelity: f64,
    pub arrival_slot: u64,
    /// Slot during whose processing the request was served.
    pub serve_slot: u64,
}

impl ServedRecord {
    pub fn latency_ns(&self) -> u64 {
        self.served_ns - self.arrival_ns
    }

    /// Whole-slot latency: slots survived between arrival and service. A
    /// request arriving in slot `t` and served at slot `t+1`'s boundary
    /// processing has latency 1; mid-slot immediate service gives 0.
    pub fn latency_slots(&self) -> u64 {
        self.serve_slot - self.arrival_slot
    }
}

/// Full per-slot series. `u[t]`, `e[t]`, `e0[t]` describe the state at the
/// start of slot `t` (index 0 through `horizon` inclusive); `a`, `c0`, `f`,
/// `r` are the events of slot `t` (length `horizon`). `c0` counts admitted
/// generations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub u: Vec<PairMatrix<u64>>,
    pub e: Vec<PairMatrix<u64>>,
    pub e0: Vec<Vec<u64>>,
    pub a: Vec<PairMatrix<u64>>,
    pub c0: Vec<Vec<u64>>,
    pub f: Vec<PairMatrix<u64>>,
    pub r: Vec<PairMatrix<u64>>,
}

/// Aggregate metrics over the post-warmup window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub arrivals_total: u64,
    pub served_count: u64,
    pub mean_fidelity: Option<f64>,
    pub mean_latency_ns: Option<f64>,
    pub mean_latency_slots: Option<f64>,
    /// Time average of the total backlog `Σ_{i<j} U_ij`.
    pub mean_total_backlog: f64,
    /// `mean_total_backlog` divided by the number of pairs.
    pub mean_backlog_per_pair: f64,
    pub final_total_backlog: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub k: usize,
    pub horizon: u64,
    pub warmup: u64,
    pub slot_ns: u64,
    pub aggregates: Aggregates,
    pub discard_totals: DiscardTotals,
    #[serde(skip)]
    pub series: Option<TraceSeries>,
    #[serde(skip)]
    pub served: Vec<ServedRecord>,
    #[serde(skip)]
    pub discard_rows: Vec<DiscardRow>,
}

impl RunResult {
    /// Drop the bulky per-slot data, keeping aggregates (for sweeps).
    pub fn into_light(mut self) -> Self {
        self.series = None;
        self.served.clear();
        self.served.shrink_to_fit();
        self.discard_rows.clear();
        self
    }

    /// Write `summary.json`, `slots.csv`, `served.csv` and `discards.csv`
    /// into `dir`. Column layout is fixed: see the README.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_summary(&dir.join("summary.json"))?;
        self.write_slots_csv(&dir.join("slots.csv"))?;
        self.write_served_csv(&dir.join("served.csv"))?;
        self.write_discards_csv(&dir.join("discards.csv"))?;
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    /// `t`, per-pair `u_i_j`, per-interface `e0_k`, per-pair `f_i_j`,
    /// per-pair `r_i_j`; node labels are 1-based. The state columns describe
    /// the start of slot `t`; `f`/`r` are the events of slot `t`.
    pub fn write_slots_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let k = self.k;
        let mut header = vec!["t".to_string()];
        for (i, j) in pair_iter(k) {
            header.push(format!("u_{}_{}", i + 1, j + 1));
        }
        for i in 0..k {
            header.push(format!("e0_{}", i + 1));
        }
        for (i, j) in pair_iter(k) {
            header.push(format!("f_{}_{}", i + 1, j + 1));
        }
        for (i, j) in pair_iter(k) {
            header.push(format!("r_{}_{}", i + 1, j + 1));
        }
        w.write_record(&header)?;
        if let Some(series) = &self.series {
            for t in 0..self.horizon as usize {
                let mut row = vec![t.to_string()];
                row.extend(series.u[t].values().map(|v| v.to_string()));
                row.extend(series.e0[t].iter().map(|v| v.to_string()));
                row.extend(series.f[t].values().map(|v| v.to_string()));
                row.extend(series.r[t].values().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `pair`, `arrival_ns`, `served_ns`, `latency_ns`, `fidelity`.
    pub fn write_served_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pair", "arrival_ns", "served_ns", "latency_ns", "fidelity"])?;
        for s in &self.served {
            w.write_record(&[
                format!("{}-{}", s.pair.0 + 1, s.pair.1 + 1),
                s.arrival_ns.to_string(),
                s.served_ns.to_string(),
                s.latency_ns().to_string(),
                format_float(s.fidelity),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `t`, `cause`, `count`; one row per slot and cause with discards.
    pub fn write_discards_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "cause", "count"])?;
        for row in &self.discard_rows {
            w.write_record(&[row.t.to_string(), row.cause.label().to_string(), row.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Locale-independent float formatting for CSV cells.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

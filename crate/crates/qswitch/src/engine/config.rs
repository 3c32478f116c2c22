//! Run configuration: the JSON document consumed by the CLI and FFI.
//!
//! Top-level keys: `switch`, `arrivals`, `protocol`, `run`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PairMatrix, RateMatrix, SwitchParams};
use crate::protocols::{ProtocolKind, QubitPolicy, RequestPolicy, VisitOrder};
use crate::stochastic::ArrivalSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub switch: SwitchConfig,
    pub arrivals: ArrivalsConfig,
    pub protocol: ProtocolConfig,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    PerInterface(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    pub k: usize,
    /// Link generation probability: a scalar or one value per interface.
    pub p: ScalarOrVec,
    pub q: f64,
    /// Max swaps per slot; absent or null means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_swaps_per_slot: Option<u64>,
    /// Memory slots per interface; absent or null means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_per_interface: Option<u64>,
    /// Dephasing time constant in ns; absent or null means no dephasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2_ns: Option<f64>,
    #[serde(default = "default_slot_ns")]
    pub slot_ns: u64,
    #[serde(default = "default_threshold")]
    pub fidelity_threshold: f64,
}

fn default_slot_ns() -> u64 {
    1000
}

fn default_threshold() -> f64 {
    0.5
}

impl SwitchConfig {
    pub fn params(&self) -> Result<SwitchParams> {
        let p = match &self.p {
            ScalarOrVec::Scalar(v) => vec![*v; self.k],
            ScalarOrVec::PerInterface(v) => v.clone(),
        };
        let params = SwitchParams {
            k: self.k,
            p,
            q: self.q,
            max_swaps_per_slot: self.max_swaps_per_slot,
            mem_per_interface: self.mem_per_interface,
            t2_ns: self.t2_ns.unwrap_or(f64::INFINITY),
            slot_ns: self.slot_ns,
            fidelity_threshold: self.fidelity_threshold,
        };
        params.validate()?;
        Ok(params)
    }
}

// no deny_unknown_fields: serde cannot combine it with flatten
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalsConfig {
    /// Arrival family applied to every pair.
    #[serde(flatten)]
    pub spec: ArrivalSpec,
    /// Optional per-pair Bernoulli rates overriding the uniform family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_matrix: Option<Vec<Vec<f64>>>,
}

impl ArrivalsConfig {
    pub fn specs(&self, k: usize) -> Result<PairMatrix<ArrivalSpec>> {
        self.spec.validate()?;
        if let Some(rows) = &self.rate_matrix {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return Err(Error::Config(format!("rate_matrix must be {k}x{k}")));
            }
            for i in 0..k {
                if rows[i][i] != 0.0 {
                    return Err(Error::Config("rate_matrix diagonal must be zero".into()));
                }
                for j in 0..k {
                    if (rows[i][j] - rows[j][i]).abs() > 1e-12 {
                        return Err(Error::Config("rate_matrix must be symmetric".into()));
                    }
                }
            }
            let specs = PairMatrix::from_fn(k, |i, j| ArrivalSpec::Bernoulli { rate: rows[i][j] });
            for s in specs.values() {
                s.validate()?;
            }
            Ok(specs)
        } else {
            Ok(PairMatrix::from_fn(k, |_, _| self.spec))
        }
    }

    pub fn rates(&self, k: usize) -> Result<RateMatrix> {
        let specs = self.specs(k)?;
        RateMatrix::new(specs.map(|s| s.rate()))
    }

    pub fn is_uniform(&self) -> bool {
        self.rate_matrix.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryDrop {
    /// Reject the freshly generated pair when the interface is full.
    Newest,
    /// Evict the oldest stored pair to admit the fresh one.
    Oldest,
}

impl Default for MemoryDrop {
    fn default() -> Self {
        MemoryDrop::Newest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolKind,
    #[serde(default = "default_qubit_policy")]
    pub qubit_policy: QubitPolicy,
    #[serde(default = "default_request_policy")]
    pub request_policy: RequestPolicy,
    #[serde(default)]
    pub visit_order: VisitOrder,
    /// Stationary slack; absent means half the largest feasible uniform ε.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Period for max-weight and *-discard protocols; absent means derive it
    /// from the concentration bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<u64>,
    /// Serve arrivals mid-slot; absent means the protocol default
    /// (stationary and on-demand yes, max-weight no).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immediate_service: Option<bool>,
    #[serde(default)]
    pub memory_drop: MemoryDrop,
}

fn default_qubit_policy() -> QubitPolicy {
    QubitPolicy::Yqf
}

fn default_request_policy() -> RequestPolicy {
    RequestPolicy::Fifo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceDetail {
    /// Keep full per-slot series.
    Full,
    /// Keep only aggregate metrics and served records.
    Aggregates,
}

impl Default for TraceDetail {
    fn default() -> Self {
        TraceDetail::Full
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon_slots: u64,
    pub seed: u64,
    /// Slots excluded from aggregates; absent means 10% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_slots: Option<u64>,
    #[serde(default)]
    pub trace: TraceDetail,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{e} (line {}, column {})", e.line(), e.column())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.switch.params()?;
        self.arrivals.specs(self.switch.k)?;
        let warmup = self.warmup();
        if warmup > self.run.horizon_slots {
            return Err(Error::Config(format!(
                "warmup {warmup} exceeds horizon {}",
                self.run.horizon_slots
            )));
        }
        if self.protocol.t0 == Some(0) {
            return Err(Error::Config("t0 must be positive".into()));
        }
        if let Some(eps) = self.protocol.epsilon {
            if !(eps > 0.0) {
                return Err(Error::Config("epsilon must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn warmup(&self) -> u64 {
        self.run.warmup_slots.unwrap_or(self.run.horizon_slots / 10)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"{
        "switch": {"k": 3, "p": 0.9, "q": 0.9},
        "arrivals": {"family": "bernoulli", "rate": 0.1},
        "protocol": {"name": "on-demand"},
        "run": {"horizon_slots": 100, "seed": 7}
    }"#;

    #[test]
    fn parse_and_roundtrip() {
        let config = RunConfig::from_json(SAMPLE).unwrap();
        assert_eq!(config.switch.k, 3);
        assert_eq!(config.protocol.qubit_policy, QubitPolicy::Yqf);
        assert_eq!(config.warmup(), 10);
        let text = config.to_json();
        let again = RunConfig::from_json(&text).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn unknown_field_is_rejected_with_context() {
        let bad = SAMPLE.replace("\"seed\": 7", "\"seed\": 7, \"sneed\": 1");
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn rate_matrix_must_be_symmetric() {
        let mut config = RunConfig::from_json(SAMPLE).unwrap();
        config.arrivals.rate_matrix =
            Some(vec![vec![0.0, 0.1, 0.2], vec![0.1, 0.0, 0.3], vec![0.2, 0.4, 0.0]]);
        assert!(config.validate().is_err());
        config.arrivals.rate_matrix =
            Some(vec![vec![0.0, 0.1, 0.2], vec![0.1, 0.0, 0.3], vec![0.2, 0.3, 0.0]]);
        config.validate().unwrap();
        assert_eq!(config.arrivals.rates(3).unwrap().get(1, 2), 0.3);
    }

    #[test]
    fn per_interface_p_vector() {
        let text = SAMPLE.replace("\"p\": 0.9", "\"p\": [0.9, 0.8, 0.7]");
        let config = RunConfig::from_json(&text).unwrap();
        assert_eq!(config.switch.params().unwrap().p, vec![0.9, 0.8, 0.7]);
    }
}

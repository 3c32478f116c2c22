//! Discrete-time simulator and analysis toolkit for a star-topology quantum
//! entanglement switch.
//!
//! A switch with `K` interfaces generates link-level EPR pairs with its end
//! nodes, performs probabilistic entanglement swapping to serve randomly
//! arriving end-to-end entanglement requests, and schedules those swaps with
//! one of several protocols (stationary, max-weight, on-demand). The crate
//! provides:
//!
//! - exact slot-update queue dynamics ([`model`]),
//! - capacity-region membership, stationary-plan construction and boundary
//!   solving ([`capacity`]),
//! - seeded, independently addressable random streams ([`stochastic`]),
//! - the scheduling protocols and an exact max-weight solver ([`protocols`]),
//! - dephasing/fidelity bookkeeping ([`physics`]),
//! - the slot-by-slot simulation loop ([`engine`]),
//! - stability and latency diagnostics ([`analysis`]),
//! - a CLI driver with run/sweep/preset commands ([`cli`]).

pub mod analysis;
pub mod capacity;
pub mod cli;
pub mod engine;
pub mod error;
pub mod model;
pub mod physics;
pub mod protocols;
pub mod stochastic;

pub use error::{Error, Result};
pub use model::{PairMatrix, QueueState, RateMatrix, SlotEvents, SwitchParams};

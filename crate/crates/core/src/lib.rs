//! Analytical model, optimizer, and slot-level simulator for the IEEE 802.11
//! distributed coordination function (DCF) under finite offered load.
//!
//! The crate answers three questions about a cell of `N` stations running
//! slotted binary-exponential backoff over a noisy channel:
//!
//! 1. **Equilibrium** — given a per-station Poisson arrival rate λ and a packet
//!    error probability, what are the per-slot transmission probability τ, the
//!    conditional collision probability, and the aggregate throughput? Solved
//!    as a one-dimensional fixed point ([`fixed_point`]), cross-checked against
//!    a brute-force stationary distribution of the underlying backoff Markov
//!    chain ([`chain`]).
//! 2. **Capacity** — what is the highest throughput the cell can sustain, at
//!    which transmission probability, and below which arrival rate does the
//!    offered load pass through undistorted? Closed forms in [`throughput`].
//! 3. **Tuning** — which contention window (saturated regime) or payload size
//!    (unsaturated regime) moves the cell to that optimum? ([`optimizer`]).
//!
//! Every analytical claim is cross-validated by [`sim`], a deterministic
//! slot-level discrete-event simulator of the same protocol.
//!
//! The `dcf` binary exposes the library through JSON-configured subcommands
//! (`solve`, `sweep`, `optimize`, `simulate`, `fig7`) writing CSV reports.

pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixed_point;
pub mod optimizer;
pub mod params;
pub mod sim;
pub mod throughput;

pub use error::{Error, Result};
pub use fixed_point::{solve_equilibrium, solve_saturated, EquilibriumSolution, SolverSettings};
pub use params::{
    packet_error_rate, slot_durations, ProtocolTiming, Recovery, ScenarioParams, SlotDurations,
};
pub use throughput::{throughput, OperatingPoint, Region};

/// Crate version string embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

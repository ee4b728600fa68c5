//! Slotted-time simulator and learning library for small-cell sleep
//! scheduling in heterogeneous cellular networks.
//!
//! The crate covers the full pipeline: ingesting or synthesizing per-grid
//! traffic traces, turning them into per-station load series, training a
//! federated next-slot load predictor, training a multi-head actor-critic
//! switching agent, and benchmarking the learned policy against all-on
//! operation, exhaustive search and clustering heuristics. The `cellsleep`
//! binary drives experiments from a JSON config; see the harness module for
//! the file formats involved.

pub mod agent;
pub mod baselines;
pub mod fedlearn;
pub mod harness;
pub mod network;
pub mod nn;
pub mod power;
pub mod traffic;

pub use network::{
    coverage_loss, energy_over_horizon, energy_saved, evaluate_switch, offloaded_mbs_load,
    power_saved, qos_feasible, MacroCellConfig, NetworkError, NetworkSnapshot, OffloadScaling,
    SwitchOutcome, SwitchVector,
};
pub use power::{
    bs_load, instantaneous_power, required_rbs, total_network_power, user_rate, BsClass,
    LoadFraction, PowerError, PowerProfile, ProfileSet, RbDemand,
};

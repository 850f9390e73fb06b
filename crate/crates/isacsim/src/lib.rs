//! Link-level simulator for uplink ISAC-NOMA over OFDM.
//!
//! A single communication transmitter (pilots plus data) and `U` sensing
//! transmitters share the full time-frequency grid. Four pilot architectures
//! (CI, CIN, PS, PSN) are paired with joint and sequential iterative
//! interference cancellation receivers, and every receiver run carries an
//! arithmetic counter whose totals reproduce the closed-form cost model
//! exactly.
//!
//! The `isacsim` binary drives Monte Carlo sweeps and emits CSV; see the
//! crate README for the experiment presets.

pub mod channel;
pub mod cli;
pub mod complexity;
pub mod config;
pub mod harness;
pub mod metrics;
pub mod modem;
pub mod pilots;
pub mod receivers;
pub mod transforms;

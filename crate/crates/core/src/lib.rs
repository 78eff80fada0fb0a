//! Deterministic desk-scale simulator of an SMS/call fire-alert system.
//!
//! The pieces mirror the real installation: [`envmodel`] turns temperature
//! and smoke into sensor voltages, [`firmware`] samples them and streams
//! alert bytes over a [`serialnet`] link, [`gateway`] latches alerts and
//! drives the [`gsm`] modem with AT commands, and [`sim`] advances all of it
//! on one logical millisecond clock.

pub mod batch;
pub mod config;
pub mod envmodel;
pub mod error;
pub mod firmware;
pub mod gateway;
pub mod gsm;
pub mod scenario;
pub mod serialnet;
pub mod sim;
pub mod trace;

pub use config::{LoadError, SimConfig};
pub use error::DomainError;
pub use scenario::{Scenario, ScenarioEvent, ScenarioOp};
pub use sim::{run, ExpectationFailure, RunOutcome, SimError, Simulator, Snapshot};
pub use trace::{compare_traces, Trace, TraceComparison, TraceEvent};

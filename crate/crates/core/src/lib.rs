//! Deterministic simulator of a battery-free, water-activated LTE-M leak
//! beacon: an electrochemical harvester charges a supercapacitor through a
//! boost converter, and a hysteretic gate powers the modem in bursts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod harvester;
pub mod modem;
pub mod node;
pub mod output;
pub mod power_path;
pub mod scenario;

pub use engine::{run, run_monte_carlo, sweep, Event, EventBody, Jitter, SimResult, Summary};
pub use error::{Result, SimError};
pub use scenario::Scenario;

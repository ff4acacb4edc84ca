//! Simulation platform for agent-based manufacturing control.
//!
//! - [`petri`]: timed colored Petri-net kernel (the hardware simulation).
//! - [`fms`]: the three-station flexible manufacturing cell as a net.
//! - [`mes`]: the multi-agent manufacturing execution layer.
//! - [`bridge`]: the hybrid agent coupling both sides over an XML protocol.
//! - [`metrics`]: scenarios, KPIs, the conventional baseline and reports.

pub mod bridge;
pub mod config;
pub mod fms;
pub mod mes;
pub mod metrics;
pub mod petri;

//! Simulator and fault-injection lab for soft-error-resilient asynchronous
//! bundled-data pipelines.

pub mod config;
pub mod control;
pub mod edl;
pub mod faultlab;
pub mod kernel;
pub mod logic;
pub mod netlist;
pub mod parse;
pub mod report;
pub mod sim;
pub mod timing;
pub mod variants;
pub mod vcd;

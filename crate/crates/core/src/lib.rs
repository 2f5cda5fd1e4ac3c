//! Discovery, simulation and accuracy assessment of business process
//! simulation (BPS) models from event logs.

pub mod accuracy;
pub mod conformance;
pub mod discovery;
pub mod event_log;
pub mod optimizer;
pub mod parameters;
pub mod process_model;
pub mod replay;
pub mod simulator;

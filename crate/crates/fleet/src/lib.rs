//! Electric ride-hailing fleet simulation and charging optimization.
//!
//! The crate couples a deterministic continuous-time discrete-event simulator
//! with three MILP layers: per-minute batch dispatch of customers to idle
//! vehicles, a day-ahead charging plan over 30-minute epochs, and an online
//! vehicle-to-charger assignment that reacts to live queue congestion.
//! Benchmark charging policies (nearest / fastest / minimum-operational-time /
//! dynamic-threshold) and queue behaviors are provided for comparison runs.

pub mod assigner;
pub mod core;
pub mod dispatch;
pub mod planner;
pub mod policies;
pub mod scenario;
pub mod sim;

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum FleetError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("solver: {0}")]
    Solver(#[from] milp::MilpError),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FleetError>;

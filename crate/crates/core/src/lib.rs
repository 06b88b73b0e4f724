//! Flowline modelling, the flowline language, cost models, scheduling and
//! cluster simulation.

pub mod cost;
pub mod expr;
pub mod fixtures;
pub mod flowline;
pub mod gfl;
pub mod registry;
pub mod scheduler;
pub mod sim;

//! Bidirectional evolutionary optimizer for binary topologies.

mod moves;
mod optimize;
mod smoothing;

pub use moves::{schedule, solve_subproblem, MoveConstraints, VolumeSchedule};
pub use optimize::{
    optimize, optimize_with, IterationRecord, Optimized, OptimizerConfig, SensitivityMethod, StopReason,
};
pub use smoothing::{ConicFilter, Momentum};

//! Benchmark problems, run configuration and the studies behind the `fvsa` binary.

mod config;
mod problems;
mod studies;

pub use config::{MethodSpec, RunConfig, TopologySource, LARGE_GUARD};
pub use problems::{
    tie_elements, Benchmark, ProblemId, COUNTEREXAMPLE_VOIDS, EPS_K, MBB_LOAD, MBB_THICKNESS, MBB_YOUNGS, TIE_COLUMN,
};
pub use studies::{
    build, cgm_step_counts, norms, read_topology, run_cgm_steps, run_compare, run_norms, run_optimize, topology,
    write_topology_csv, write_topology_pgm, MethodError, NormTable, OptimizeReport, StepCounts, SCHEMA_VERSION,
};

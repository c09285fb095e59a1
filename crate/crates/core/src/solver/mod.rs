//! Backward scheme, truncation ladder, Picard iteration and stopping-time
//! partitions.

mod backward;
mod generator;
mod partition;
mod picard;
mod problem;

pub use backward::{backward_step, solve_z_independent, StepOutput};
pub use generator::{FnGenerator, FrozenZGenerator, Generator, ScaledGenerator, TruncatedGenerator};
pub use partition::{interval_partition, IntervalPartition, PartitionAudit};
pub use picard::{
    convergence_metrics, picard_solve, solution_distance, ConvergenceReport, DistanceRecord,
    IterationRecord, PicardConfig, StopReason,
};
pub use problem::{
    audit_truncation_ladder, truncation_ladder, BsdeProblem, Coefficients, InnerIteration,
    LadderAudit, SolutionPair, StepDiagnostics, StepMode,
};

//! Selective data acquisition: per-slice learning curves, a budgeted convex
//! allocation, and an iterative acquire/re-fit planner.

mod alloc;
mod curve;
mod planner;
mod sim;

pub use alloc::{
    baseline_uniform, baseline_waterfilling, imbalance_ratio, integerize, optimize_allocation,
    project_scaled_simplex, water_level, AcquisitionProblem, Allocation, SliceState,
};
pub use curve::{fit_learning_curve, CurveFit, LearningCurve};
pub use planner::{
    assign_slices, evaluate_slices, measure_learning_points, plan_acquisition, run_baseline,
    Baseline, PlanIteration, PlanOutcome, PlanTrace, PlannerConfig, PoolProvider, Provider,
};
pub use sim::{gen_slice_pool, SimSlice, SlicePool, SlicePoolParams};

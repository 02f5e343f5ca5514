//! Planning and simulation of gradient merging for data-parallel training.
//!
//! Given a per-layer trace of a model (parameter counts and backward times)
//! and a linear all-reduce cost `T(M) = a + b * M`, this crate computes the
//! iteration timeline of pipelined backward/communication schedules, finds
//! the merge plan that minimises iteration time, and sweeps the naive,
//! layer-wise (WFBP), single-tensor (SyncEASGD) and merged (MG-WFBP)
//! strategies across cluster sizes.

pub mod comm_model;
pub mod error;
pub mod planner;
pub mod sweep;
pub mod timeline;
pub mod trace;

pub use comm_model::{
    allreduce_cost, coefficients_for, fit_model, AllReduceAlgorithm, AllReduceModel, CommMeasurement,
    DerivedModel, ModelFile, ModelSource, NetworkParams, TreeStartup,
};
pub use error::{Error, Result};
pub use planner::{brute_force_plan, case_classify, greedy_plan, optimal_plan, OverlapCase, PlanExport};
pub use sweep::{run_sweep, Strategy, SweepResult, SweepRow};
pub use timeline::{evaluate, naive_time, speedup, synceasgd_time, LayerTag, MergePlan, Timeline};
pub use trace::{load_trace, resnet50_like, save_trace, synth_trace, LayerProfile, ModelTrace, SynthSpec};

//! Experiment metrics and the desk-scale experiment drivers.

pub mod clone;
pub mod metrics;
pub mod sync;
pub mod toy;

pub use clone::{clone_agreement, run_clone_experiment, AgreementCurve, CloneConfig, CloneResult};
pub use metrics::{
    cosine_to_final, crossing_times, excess, ghosting_index, last_crossing, sync_gap, wilson_interval,
};
pub use sync::{sync_diagnostics, SyncCurves};
pub use toy::{run_toy_cell, run_toy_experiment, toy_metrics, ToyExperimentConfig, ToyMetrics, ToyRow};

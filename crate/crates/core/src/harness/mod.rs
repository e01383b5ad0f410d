//! Experiment orchestration, file formats and metrics.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;

pub use config::{ArraySpec, EirSpec, ExperimentConfig, GridSpec, PhantomSpec, TimebaseSpec};
pub use experiment::{
    finish, read_simulation, reconstruct, reconstruct_from_dir, run_experiment, simulate, write_artifacts,
    write_metrics_csv, write_simulation, ExperimentResult, Method, ReconContext, ResultEntry, Simulation, SizeData,
    StageTimings,
};
pub use io::{export_image, read_matrix, write_matrix, MatrixData};
pub use metrics::{compute_metrics, pearson, relative_l2, resample_bilinear, MetricsRecord};

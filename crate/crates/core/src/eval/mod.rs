//! Map, calibration and trajectory metrics, and the experiment harness behind the CLI.
//!
//! Every metric skips cells whose label is unknown in either map. Landmark centers are
//! compared in BEV (x, y) because the LiDAR only samples plates at its channel elevations,
//! which biases the mean height of the observed points.

mod experiment;
pub mod metrics;
mod report;

use thiserror::Error;

pub use experiment::{
    build_maps, local_maps, localization_sweep, mapping_experiment, run_localization, track, LocAggregate, LocRow, LocRun,
    MapJob, MapRow, MeanStd, PipelineTotals, Track,
};
pub use metrics::{
    calibration_bins, calibration_curve, expected_calibration_error, match_landmarks, panoptic_quality, score_map,
    score_trajectory, CalibrationBin, ErrorStats, LandmarkScore, LocScore, MapScore, PanopticQuality, StepError,
    LANDMARK_MATCH_RADIUS, UECE_BINS,
};
pub use report::{write_calibration_csv, write_errors_csv, Report, REPORT_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("maps have different geometry or class count")]
    GeometryMismatch,
    #[error("estimated trajectory has {estimated} poses, truth has {truth}")]
    LengthMismatch { estimated: usize, truth: usize },
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Localization(#[from] crate::localization::LocalizationError),
    #[error(transparent)]
    Map(#[from] crate::map::MapError),
}

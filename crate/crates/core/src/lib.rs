//! Evidential panoptic BEV mapping and Monte Carlo localization.
//!
//! The crate is organised along the processing chain:
//!
//! - [`geometry`]: class taxonomy, planar poses and grid geometry shared by everything else.
//! - [`evidential`]: Dirichlet evidence arithmetic (probabilities, epistemic and total uncertainty).
//! - [`ingest`]: camera projection, LiDAR augmentation and the on-disk frame/scan formats.
//! - [`map`]: the global panoptic grid map, its aggregation strategies, landmark tracking and I/O.
//! - [`localization`]: panoptic importance weights and the particle filter.
//! - [`sim`]: the synthetic world and simulated evidential perception.
//! - [`eval`]: map, calibration and trajectory metrics plus the experiment harness.
//!
//! Hot loops (per-particle weighting, per-row rendering, seed sweeps) run on rayon when the
//! `parallel` feature is enabled and fall back to plain iterators otherwise; see [`Execution`].

pub mod eval;
pub mod evidential;
pub mod geometry;
pub mod ingest;
pub mod localization;
pub mod map;
mod par;
pub mod sim;

pub use par::Execution;

pub use evidential::{EvidenceVector, ProbabilityVector};
pub use geometry::{CellIndex, ClassId, GridGeometry, Point3, Pose2D, SemanticClass, Taxonomy};
pub use ingest::{AugmentedPoint, CameraModel, PerceptionFrame};
pub use localization::{Particle, ParticleFilter, WeightConfig};
pub use map::{AggregationStrategy, PanopticGridMap};

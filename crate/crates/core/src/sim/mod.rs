//! Synthetic worlds and a parametric evidential perception front-end.
//!
//! A [`World`] is a curved two-lane road with painted markings and billboard landmarks. The
//! [`SensorRig`] ray-casts a 2.5-D LiDAR and a pinhole camera against it, and the
//! [`NoiseSpec`] turns per-pixel ground truth into Dirichlet evidence whose confidence is
//! controlled: each square world patch has a persistent confidence `c` and is misperceived
//! with probability `1 - c`, transient per-pixel noise and region corruption are layered on
//! top, and the emitted evidence is shaped so that its normalised-entropy confidence equals
//! `c` (calibrated) or is biased (over/underconfident).

mod dataset;
mod noise;
mod render;
mod scenario;
mod sensors;
mod world;

use thiserror::Error;

pub use dataset::{read_trajectory_csv, write_trajectory_csv, Dataset};
pub use noise::{simulate_odometry, Corruption, CorruptionRegion, Emitter, Miscalibration, NoiseSpec};
pub use render::{render_frame, render_truth, TruthImage, NO_CLASS};
pub use scenario::{Scenario, ScenarioSpec, TrajectorySpec};
pub use sensors::{cast_lidar, CameraSpec, LidarSpec, SensorRig, SensorSpec};
pub use world::{Billboard, MarkingLine, RoadLayout, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trajectory leaves the road: needs {needed:.1} m of road, layout has {available:.1} m")]
    InfeasibleTrajectory { needed: f64, available: f64 },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Map(#[from] crate::map::MapError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// SplitMix64 finaliser.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic hash of a seed and a sequence of integer keys.
#[inline]
pub fn hash_keys(seed: u64, keys: &[i64]) -> u64 {
    keys.iter().fold(mix64(seed), |h, &k| mix64(h ^ k as u64))
}

/// Uniform in [0, 1) from the top 53 bits of a hash.
#[inline]
pub(crate) fn unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_spread() {
        assert_eq!(hash_keys(1, &[2, 3]), hash_keys(1, &[2, 3]));
        assert_ne!(hash_keys(1, &[2, 3]), hash_keys(1, &[3, 2]));
        let mean = (0..10_000).map(|i| unit(hash_keys(7, &[i]))).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.01);
    }
}

//! Monte Carlo localization against a panoptic grid map.
//!
//! Each particle is scored by overlaying the single-frame [`LocalMap`] on the global map at
//! the particle pose. The semantic mIoU (optionally weighting intersections by inverse local
//! uncertainty) and the instance mIoU are turned into an importance weight
//! `exp(r * mIoU_K) + exp(r * mIoU_L)`.

mod filter;
mod local_map;
mod weights;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{
    estimate_pose, position_spread, predict, systematic_resample, FilterConfig, MotionNoise, Odometry, Particle,
    ParticleFilter, UpdateOutcome,
};
pub use local_map::{LocalCell, LocalMap};
pub use weights::{
    accuracy_score, cosine_score, instance_iou, log_particle_weight, particle_weight, score_pose,
    semantic_iou, PoseScore, ReferenceMap, SemanticScore, UNCERTAINTY_FLOOR,
};

#[derive(Debug, Error, PartialEq)]
pub enum LocalizationError {
    #[error("regularizer must be positive and finite, got {0}")]
    Regularizer(f64),
    #[error("pose estimation needs at least {needed} particles, got {got}")]
    TooFewParticles { needed: usize, got: usize },
    #[error("invalid filter configuration: {0}")]
    Config(String),
}

/// Per-cell agreement measure used to weight particles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMetric {
    #[default]
    Miou,
    Accuracy,
    Cosine,
}

impl std::str::FromStr for WeightMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "miou" => Ok(WeightMetric::Miou),
            "accuracy" => Ok(WeightMetric::Accuracy),
            "cosine" => Ok(WeightMetric::Cosine),
            other => Err(format!("unknown weight metric {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    /// Regularizer r of the exponential weight.
    pub regularizer: f64,
    /// Weight semantic intersections by `1 / max(u~, UNCERTAINTY_FLOOR)` of the local cell.
    pub use_uncertainty: bool,
    /// Add the instance term `exp(r * mIoU_L)`.
    pub use_instances: bool,
    pub metric: WeightMetric,
    /// With `metric = miou`: `false` uses the raw score as the weight (no regularizer).
    /// Accuracy and cosine weights are always raw.
    pub exponential: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            regularizer: 10.0,
            use_uncertainty: true,
            use_instances: true,
            metric: WeightMetric::Miou,
            exponential: true,
        }
    }
}

impl WeightConfig {
    /// Raw semantic mIoU as the weight.
    pub fn baseline() -> Self {
        Self {
            use_uncertainty: false,
            use_instances: false,
            exponential: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LocalizationError> {
        if !(self.regularizer > 0.0 && self.regularizer.is_finite()) {
            return Err(LocalizationError::Regularizer(self.regularizer));
        }
        Ok(())
    }

    /// True when the weight is the exponential form.
    pub fn is_exponential(&self) -> bool {
        self.metric == WeightMetric::Miou && self.exponential
    }
}

//! Camera/LiDAR association and the on-disk frame and scan formats.

mod camera;
mod frame;
mod scan;

use std::path::Path;

use thiserror::Error;

pub use camera::{project_point, CameraModel, Pixel, VEHICLE_TO_OPTICAL};
pub use frame::{sidecar_path, FrameSidecar, PerceptionFrame, PixelPerception, EVF_MAGIC, EVF_VERSION};
pub use scan::{load_scan, read_ply, save_scan, write_ply, PlyEncoding};

use crate::evidential::{argmax, EvidenceVector};
use crate::geometry::{ClassId, Point3};

/// Default maximum LiDAR range kept for augmentation, meters (inclusive).
pub const DEFAULT_MAX_RANGE: f64 = 40.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("calibration missing or invalid: {0}")]
    InvalidCalibration(String),
    #[error("frame is {frame:?} pixels but the camera expects {camera:?}")]
    ImageSizeMismatch {
        frame: (u32, u32),
        camera: (u32, u32),
    },
    #[error("corrupt frame file: {0}")]
    CorruptFrame(String),
    #[error("unsupported frame version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt scan file: {0}")]
    CorruptScan(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// A LiDAR point carrying the perception vector of the pixel it projects to.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPoint {
    /// Vehicle frame, meters.
    pub position: Point3,
    pub evidence: EvidenceVector,
    /// Epistemic uncertainty of the source pixel.
    pub uncertainty: f64,
    /// Per-frame instance id, 0 when the pixel belongs to no instance.
    pub instance: u32,
    /// Euclidean norm of `position`.
    pub range: f64,
}

impl AugmentedPoint {
    pub fn new(position: Point3, evidence: EvidenceVector, uncertainty: f64, instance: u32) -> Self {
        Self {
            range: position.norm(),
            position,
            evidence,
            uncertainty,
            instance,
        }
    }

    /// Class with the most evidence.
    pub fn class(&self) -> ClassId {
        argmax(self.evidence.alpha()) as ClassId
    }
}

/// Appends the perception vector of the nearest pixel to every in-image LiDAR point with
/// `range <= max_range`. Points landing on pixels without perception are dropped.
pub fn augment_scan(
    scan: &[Point3],
    frame: &PerceptionFrame,
    cam: &CameraModel,
    max_range: f64,
) -> Result<Vec<AugmentedPoint>, IngestError> {
    cam.validate()?;
    if (frame.width(), frame.height()) != (cam.image_width, cam.image_height) {
        return Err(IngestError::ImageSizeMismatch {
            frame: (frame.width(), frame.height()),
            camera: (cam.image_width, cam.image_height),
        });
    }
    let mut out = Vec::with_capacity(scan.len() / 2);
    for p in scan {
        let range = p.norm();
        if range > max_range {
            continue;
        }
        let Some(px) = cam.project_point(p) else {
            continue;
        };
        let (u, v) = px.nearest();
        let pix = frame.pixel(u, v);
        if !pix.has_evidence() {
            continue;
        }
        let alpha = pix.alpha.iter().map(|a| f64::from(*a)).collect();
        out.push(AugmentedPoint {
            position: *p,
            evidence: EvidenceVector::new(alpha)
                .map_err(|e| IngestError::CorruptFrame(e.to_string()))?,
            uncertainty: f64::from(pix.uncertainty),
            instance: pix.instance,
            range,
        });
    }
    Ok(out)
}

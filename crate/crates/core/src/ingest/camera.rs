use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geometry::Point3;

/// Pinhole camera with a rigid LiDAR-to-camera extrinsic.
///
/// The camera frame follows the usual optical convention: x right, y down, z forward.
/// Serialized as the calibration JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub image_width: u32,
    pub image_height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major rotation taking LiDAR-frame vectors to the camera frame.
    pub rotation: [[f64; 3]; 3],
    /// Translation (meters) applied after the rotation.
    pub translation: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    /// Nearest integer pixel (column, row).
    pub fn nearest(&self) -> (u32, u32) {
        (self.u.round() as u32, self.v.round() as u32)
    }
}

/// Rotation from a vehicle frame (x forward, y left, z up) to the optical frame.
pub const VEHICLE_TO_OPTICAL: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];

impl CameraModel {
    /// Forward-looking camera mounted at `position` in the vehicle frame with no tilt.
    pub fn forward_facing(
        image_width: u32,
        image_height: u32,
        focal: f64,
        cy: f64,
        position: Point3,
    ) -> Self {
        let r = VEHICLE_TO_OPTICAL;
        let c = [position.x, position.y, position.z];
        let t = std::array::from_fn(|i| -(r[i][0] * c[0] + r[i][1] * c[1] + r[i][2] * c[2]));
        Self {
            image_width,
            image_height,
            fx: focal,
            fy: focal,
            cx: image_width as f64 / 2.0,
            cy,
            rotation: r,
            translation: t,
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |reason: &str| Err(IngestError::InvalidCalibration(reason.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return invalid("focal lengths must be positive");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return invalid("image size must be non-zero");
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return invalid("rotation is not orthonormal");
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-9 {
            return invalid("rotation is a reflection");
        }
        if self
            .translation
            .iter()
            .chain([self.cx, self.cy].iter())
            .any(|v| !v.is_finite())
        {
            return invalid("non-finite translation or principal point");
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Point3) -> [f64; 3] {
        let r = &self.rotation;
        let v = [p.x, p.y, p.z];
        std::array::from_fn(|i| {
            r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2] + self.translation[i]
        })
    }

    /// Optical center in the LiDAR frame.
    pub fn center(&self) -> Point3 {
        let r = &self.rotation;
        let t = &self.translation;
        let c: [f64; 3] = std::array::from_fn(|j| -(0..3).map(|i| r[i][j] * t[i]).sum::<f64>());
        Point3::new(c[0], c[1], c[2])
    }

    /// Unnormalised viewing ray of a pixel, in the LiDAR frame.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Point3 {
        let d = [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0];
        let r = &self.rotation;
        let w: [f64; 3] = std::array::from_fn(|j| (0..3).map(|i| r[i][j] * d[i]).sum::<f64>());
        Point3::new(w[0], w[1], w[2])
    }

    /// Pixel coordinates of a LiDAR point, or `None` behind the camera or off the image.
    ///
    /// Pixel centers sit at integer coordinates, so a returned pixel always rounds to a valid
    /// `(column, row)` inside the image.
    pub fn project_point(&self, p: &Point3) -> Option<Pixel> {
        let c = self.to_camera(p);
        if !(c[2] > 0.0) {
            return None;
        }
        let u = self.fx * c[0] / c[2] + self.cx;
        let v = self.fy * c[1] / c[2] + self.cy;
        let inside = |x: f64, n: u32| x >= -0.5 && x < n as f64 - 0.5;
        (inside(u, self.image_width) && inside(v, self.image_height)).then_some(Pixel { u, v })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let cam: CameraModel = serde_json::from_str(&text)
            .map_err(|e| IngestError::InvalidCalibration(e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let text = serde_json::to_string_pretty(self).expect("camera serializes");
        fs::write(path, text).map_err(|e| IngestError::io(path, e))
    }
}

/// Pixel location of `p` under `cam`.
pub fn project_point(p: &Point3, cam: &CameraModel) -> Option<Pixel> {
    cam.project_point(p)
}

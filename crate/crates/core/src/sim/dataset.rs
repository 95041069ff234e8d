//! Reading back a directory written by [`Scenario::write_dataset`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioSpec, SimError};
use crate::geometry::Pose2D;
use crate::ingest::{augment_scan, load_scan, AugmentedPoint, CameraModel, PerceptionFrame};
use crate::localization::Odometry;
use crate::map::{load_map, PanopticGridMap};

#[derive(Debug, Deserialize, Serialize)]
struct PoseRow {
    t: f64,
    x: f64,
    y: f64,
    yaw: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct OdometryRow {
    t: f64,
    vx: f64,
    vy: f64,
    vtheta: f64,
}

fn io(path: &Path, source: std::io::Error) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SimError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| SimError::InvalidSpec(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| SimError::InvalidSpec(format!("{}: {e}", path.display())))
}

/// Reads a pose CSV with columns `t,x,y,yaw`. Returns timestamps and poses.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Vec<Pose2D>), SimError> {
    let rows: Vec<PoseRow> = read_rows(path)?;
    Ok(rows.iter().map(|r| (r.t, Pose2D::new(r.x, r.y, r.yaw))).unzip())
}

/// Writes poses as `t,x,y,yaw`.
pub fn write_trajectory_csv<W: std::io::Write>(w: W, timestamps: &[f64], poses: &[Pose2D]) -> std::io::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for (&t, p) in timestamps.iter().zip(poses) {
        writer.serialize(PoseRow {
            t,
            x: p.x,
            y: p.y,
            yaw: p.yaw,
        })?;
    }
    writer.flush()
}

/// A simulated recording on disk: scenario, calibration, trajectory, odometry and the
/// per-frame perception and scans.
#[derive(Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub scenario: Scenario,
    pub camera: CameraModel,
    pub timestamps: Vec<f64>,
    pub poses: Vec<Pose2D>,
    /// Velocities from frame `i` to `i + 1`.
    pub odometry: Vec<Odometry>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, SimError> {
        let p = dir.join("scenario.toml");
        let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
        let scenario = Scenario::new(ScenarioSpec::from_toml(&text)?)?;
        let camera = CameraModel::load(&dir.join("calibration.json"))?;
        let (timestamps, poses) = read_trajectory_csv(&dir.join("trajectory.csv"))?;
        let odometry: Vec<Odometry> = read_rows::<OdometryRow>(&dir.join("odometry.csv"))?
            .iter()
            .map(|r| Odometry::new(r.vx, r.vy, r.vtheta))
            .collect();
        if poses.len() < 2 || odometry.len() + 1 != poses.len() {
            return Err(SimError::InvalidSpec(format!(
                "{}: {} poses and {} odometry rows",
                dir.display(),
                poses.len(),
                odometry.len()
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            scenario,
            camera,
            timestamps,
            poses,
            odometry,
        })
    }

    pub fn frames(&self) -> usize {
        self.poses.len()
    }

    pub fn dt(&self) -> f64 {
        self.timestamps[1] - self.timestamps[0]
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.dir.join("frames").join(format!("{i:06}.evf"))
    }

    pub fn scan_path(&self, i: usize) -> PathBuf {
        self.dir.join("scans").join(format!("{i:06}.ply"))
    }

    /// Scan points of frame `i` augmented with the stored perception, within the scenario's
    /// maximum range.
    pub fn points(&self, i: usize) -> Result<Vec<AugmentedPoint>, SimError> {
        let (frame, _) = PerceptionFrame::load(&self.frame_path(i))?;
        let scan = load_scan(&self.scan_path(i))?;
        Ok(augment_scan(&scan, &frame, &self.camera, self.scenario.spec.max_range)?)
    }

    pub fn truth_map(&self) -> Result<PanopticGridMap, SimError> {
        Ok(load_map(&self.dir.join("truth_map.upm"))?)
    }
}

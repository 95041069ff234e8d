//! Scenario specification, trajectory generation and dataset export.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::{simulate_odometry, NoiseSpec};
use super::render::{render_frame, render_truth, TruthImage};
use super::sensors::{cast_lidar, SensorRig, SensorSpec};
use super::world::{RoadLayout, World};
use super::{hash_keys, SimError};
use crate::geometry::{GridGeometry, Point3, Pose2D, Taxonomy};
use crate::ingest::{augment_scan, save_scan, AugmentedPoint, PerceptionFrame, PlyEncoding};
use crate::localization::Odometry;
use crate::map::{save_map, write_landmarks_csv, AggregationStrategy, Landmark, PanopticGridMap, MIN_INSTANCE_POINTS};
use crate::par::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Forward speed (m/s).
    pub speed: f64,
    /// Frame period (s).
    pub dt: f64,
    pub frames: usize,
    /// Arc length of the first pose (m).
    pub start: f64,
    /// Lateral offset of the lane center (m, left positive).
    pub lane_offset: f64,
    /// Sinusoidal weaving around the lane center.
    pub weave_amplitude: f64,
    pub weave_period: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            speed: 6.0,
            dt: 0.1,
            frames: 300,
            start: 5.0,
            lane_offset: -1.75,
            weave_amplitude: 0.3,
            weave_period: 60.0,
        }
    }
}

/// Everything needed to regenerate a synthetic sequence. `seed` drives the world and the
/// trajectory; perception and odometry noise take their own seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub road: RoadLayout,
    pub sensors: SensorSpec,
    pub noise: NoiseSpec,
    pub trajectory: TrajectorySpec,
    pub map_resolution: f64,
    /// LiDAR points beyond this range are not augmented.
    pub max_range: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            road: RoadLayout::default(),
            sensors: SensorSpec::default(),
            noise: NoiseSpec::default(),
            trajectory: TrajectorySpec::default(),
            map_resolution: GridGeometry::DEFAULT_RESOLUTION,
            max_range: crate::ingest::DEFAULT_MAX_RANGE,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::InvalidSpec(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }
}

/// A generated world with its trajectory and sensors.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub world: World,
    pub rig: SensorRig,
    pub taxonomy: Taxonomy,
    poses: Vec<Pose2D>,
    geometry: GridGeometry,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self, SimError> {
        spec.noise.validate()?;
        let t = &spec.trajectory;
        if !(t.speed >= 0.0 && t.dt > 0.0 && t.frames >= 2 && t.weave_period > 0.0) {
            return Err(SimError::InvalidSpec(
                "trajectory needs speed >= 0, dt > 0, at least 2 frames and a positive weave period".into(),
            ));
        }
        if !(spec.map_resolution > 0.0 && spec.max_range > 0.0) {
            return Err(SimError::InvalidSpec("map resolution and max range must be positive".into()));
        }
        let world = World::generate(&spec.road, spec.seed)?;
        let rig = SensorRig::new(&spec.sensors)?;
        let end = t.start + t.speed * t.dt * (t.frames - 1) as f64;
        let needed = end + 5.0;
        if t.start < 0.0 || needed > world.length() {
            return Err(SimError::InfeasibleTrajectory {
                needed,
                available: world.length(),
            });
        }
        let poses: Vec<Pose2D> = (0..t.frames)
            .map(|i| {
                let s = t.start + t.speed * t.dt * i as f64;
                let lateral = t.lane_offset + t.weave_amplitude * (std::f64::consts::TAU * s / t.weave_period).sin();
                let slope = t.weave_amplitude * std::f64::consts::TAU / t.weave_period
                    * (std::f64::consts::TAU * s / t.weave_period).cos();
                let p = world.pose_at(s, lateral);
                Pose2D::new(p.x, p.y, p.yaw + slope.atan())
            })
            .collect();
        let margin = 0.5 * spec.road.width + 4.0;
        let (x0, y0, x1, y1) = world.bounds(t.start - 5.0, end + spec.max_range + 5.0, margin);
        let snap = |v: f64| (v / 0.5).floor() * 0.5;
        let geometry = GridGeometry::covering(spec.map_resolution, snap(x0), snap(y0), x1, y1)
            .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        Ok(Self {
            spec,
            world,
            rig,
            taxonomy: Taxonomy::default(),
            poses,
            geometry,
        })
    }

    pub fn frames(&self) -> usize {
        self.poses.len()
    }

    pub fn dt(&self) -> f64 {
        self.spec.trajectory.dt
    }

    /// Ground-truth vehicle poses, one per frame.
    pub fn poses(&self) -> &[Pose2D] {
        &self.poses
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 * self.dt()
    }

    /// Geometry of global maps for this scenario.
    pub fn map_geometry(&self) -> GridGeometry {
        self.geometry
    }

    /// Exact vehicle-frame velocities between consecutive frames.
    pub fn true_odometry(&self) -> Vec<Odometry> {
        let dt = self.dt();
        self.poses
            .windows(2)
            .map(|w| {
                let rel = w[0].inverse().compose(&w[1]);
                Odometry::new(rel.x / dt, rel.y / dt, rel.yaw / dt)
            })
            .collect()
    }

    pub fn noisy_odometry(&self, factor: f64, seed: u64) -> Vec<Odometry> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_keys(seed, &[-3]));
        self.true_odometry()
            .iter()
            .map(|v| simulate_odometry(v, factor, &mut rng))
            .collect()
    }

    pub fn truth_image(&self, frame: usize, exec: Execution) -> TruthImage {
        render_truth(&self.world, &self.rig, &self.poses[frame], self.spec.noise.patch_size, exec)
    }

    /// LiDAR sweep of a frame, vehicle frame.
    pub fn scan(&self, frame: usize, perception_seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_keys(perception_seed, &[frame as i64, -2]));
        cast_lidar(&self.rig, &self.world, &self.poses[frame], &mut rng)
    }

    /// Perception of one frame under each noise model, sharing a single ray cast.
    pub fn perceive(&self, frame: usize, truth: &TruthImage, noises: &[&NoiseSpec], perception_seed: u64, exec: Execution) -> Vec<PerceptionFrame> {
        let frame_seed = hash_keys(perception_seed, &[frame as i64]);
        noises
            .iter()
            .map(|n| {
                render_frame(
                    truth,
                    &self.world,
                    n,
                    &self.taxonomy,
                    perception_seed,
                    frame_seed,
                    self.timestamp(frame),
                    exec,
                )
            })
            .collect()
    }

    /// Augmented points of a frame for each noise model.
    pub fn augmented_multi(&self, frame: usize, noises: &[&NoiseSpec], perception_seed: u64, exec: Execution) -> Vec<Vec<AugmentedPoint>> {
        let truth = self.truth_image(frame, exec);
        let scan = self.scan(frame, perception_seed);
        self.perceive(frame, &truth, noises, perception_seed, exec)
            .iter()
            .map(|f| augment_scan(&scan, f, &self.rig.camera, self.spec.max_range).expect("rig camera is valid"))
            .collect()
    }

    /// Augmented points of a frame under the scenario noise.
    pub fn augmented(&self, frame: usize, perception_seed: u64, exec: Execution) -> Vec<AugmentedPoint> {
        self.augmented_multi(frame, &[&self.spec.noise], perception_seed, exec)
            .pop()
            .expect("one noise model")
    }

    /// Ground-truth panoptic map: painted classes at cell centers, billboard footprints as
    /// landmark instances, and the true landmark registry.
    pub fn truth_map(&self) -> PanopticGridMap {
        let g = self.geometry;
        let mut map = PanopticGridMap::new(g, self.taxonomy.clone(), AggregationStrategy::Evidential);
        for i in 0..g.cell_count() {
            let (x, y) = g.cell_center(g.cell_of_index(i));
            if let Some(c) = self.world.class_at(x, y) {
                map.set_cell_label(i, c, 0);
            }
        }
        for b in &self.world.landmarks {
            let ((x0, y0), (x1, y1)) = b.footprint();
            let steps = ((2.0 * b.half_width) / (0.25 * g.resolution)).ceil() as usize;
            let mut inside = false;
            for s in 0..=steps {
                let f = s as f64 / steps as f64;
                if let Some(i) = g.world_to_index(x0 + f * (x1 - x0), y0 + f * (y1 - y0)) {
                    map.set_cell_label(i, b.class, b.id);
                    inside = true;
                }
            }
            if inside {
                map.landmarks_mut().insert(Landmark {
                    id: b.id,
                    class: b.class,
                    center: b.center(),
                    point_count: MIN_INSTANCE_POINTS as u64,
                });
            }
        }
        map
    }

    /// Writes the full dataset: specs, calibration, per-frame `.evf` and `.ply`, poses,
    /// odometry, and the ground-truth map and landmarks.
    pub fn write_dataset(&self, dir: &Path, perception_seed: u64, exec: Execution) -> Result<(), SimError> {
        let io = |path: &Path, e: std::io::Error| SimError::Io {
            path: path.display().to_string(),
            source: e,
        };
        for sub in ["frames", "scans"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| io(&p, e))?;
        }
        let p = dir.join("scenario.toml");
        fs::write(&p, self.spec.to_toml()).map_err(|e| io(&p, e))?;
        self.rig.camera.save(&dir.join("calibration.json"))?;

        for i in 0..self.frames() {
            let truth = self.truth_image(i, exec);
            let frame = self
                .perceive(i, &truth, &[&self.spec.noise], perception_seed, exec)
                .pop()
                .expect("one noise model");
            frame.save(&dir.join("frames").join(format!("{i:06}.evf")), "../calibration.json")?;
            save_scan(
                &dir.join("scans").join(format!("{i:06}.ply")),
                &self.scan(i, perception_seed),
                PlyEncoding::BinaryLittleEndian,
            )?;
        }

        let mut traj = String::from("t,x,y,yaw\n");
        for (i, p) in self.poses.iter().enumerate() {
            traj.push_str(&format!("{},{},{},{}\n", self.timestamp(i), p.x, p.y, p.yaw));
        }
        let p = dir.join("trajectory.csv");
        fs::write(&p, traj).map_err(|e| io(&p, e))?;

        let mut odo = String::from("t,vx,vy,vtheta\n");
        for (i, v) in self
            .noisy_odometry(self.spec.noise.odometry_factor, perception_seed)
            .iter()
            .enumerate()
        {
            odo.push_str(&format!("{},{},{},{}\n", self.timestamp(i), v.vx, v.vy, v.vtheta));
        }
        let p = dir.join("odometry.csv");
        fs::write(&p, odo).map_err(|e| io(&p, e))?;

        let truth = self.truth_map();
        save_map(&dir.join("truth_map.upm"), &truth)?;
        let p = dir.join("truth_landmarks.csv");
        let mut f = fs::File::create(&p).map_err(|e| io(&p, e))?;
        write_landmarks_csv(&mut f, &truth).map_err(|e| io(&p, e))?;
        f.flush().map_err(|e| io(&p, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DRIVABLE_AREA;

    fn small() -> ScenarioSpec {
        ScenarioSpec {
            road: RoadLayout {
                length: 100.0,
                heading_amplitude: 0.0,
                landmarks: 5,
                stop_bars: 0,
                ..RoadLayout::default()
            },
            trajectory: TrajectorySpec {
                frames: 4,
                weave_amplitude: 0.0,
                ..TrajectorySpec::default()
            },
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn straight_road_truth_is_drivable() {
        let mut spec = small();
        // Long enough for the map to span the whole road.
        spec.trajectory.frames = 100;
        let sc = Scenario::new(spec).unwrap();
        let map = sc.truth_map();
        let g = map.geometry();
        for x in [10.0, 30.0, 50.0] {
            let i = g.world_to_index(x + 0.05, -1.75 + 0.05).unwrap();
            assert_eq!(map.label(i), DRIVABLE_AREA);
        }
        assert_eq!(map.landmarks().len(), 5);
    }

    #[test]
    fn odometry_reproduces_poses() {
        let mut spec = small();
        spec.road.heading_amplitude = 0.2;
        spec.trajectory.weave_amplitude = 0.3;
        spec.trajectory.frames = 50;
        let sc = Scenario::new(spec).unwrap();
        let mut p = sc.poses()[0];
        for v in sc.true_odometry() {
            p = p.compose(&Pose2D::new(v.vx * sc.dt(), v.vy * sc.dt(), v.vtheta * sc.dt()));
        }
        let last = sc.poses().last().unwrap();
        assert!((p.x - last.x).abs() < 1e-9 && (p.y - last.y).abs() < 1e-9);
        let noisy = sc.noisy_odometry(0.25, 3);
        assert_ne!(noisy, sc.true_odometry());
        assert_eq!(sc.noisy_odometry(0.0, 3), sc.true_odometry());
    }

    #[test]
    fn infeasible_trajectory_is_rejected() {
        let mut spec = small();
        spec.trajectory.frames = 1000;
        assert!(matches!(Scenario::new(spec), Err(SimError::InfeasibleTrajectory { .. })));
    }

    #[test]
    fn spec_toml_roundtrip() {
        let spec = ScenarioSpec::default();
        assert_eq!(ScenarioSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        assert!(ScenarioSpec::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn augmented_points_carry_instances() {
        let mut spec = small();
        spec.trajectory.frames = 60;
        let sc = Scenario::new(spec).unwrap();
        let total: usize = (0..60)
            .step_by(10)
            .map(|i| sc.augmented(i, 1, Execution::default()).iter().filter(|p| p.instance > 0).count())
            .sum();
        assert!(total > 50, "{total}");
    }
}

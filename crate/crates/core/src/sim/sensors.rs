//! Camera and 2.5-D LiDAR models ray-cast against the ground plane and billboards.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::{Billboard, World};
use super::SimError;
use crate::geometry::{Point3, Pose2D};
use crate::ingest::CameraModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Principal row; the principal column is the image center.
    pub cy: f64,
    /// Mount position in the vehicle frame.
    pub position: [f64; 3],
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            width: 560,
            height: 240,
            focal: 280.0,
            cy: 80.0,
            position: [0.5, 0.0, 1.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    pub channels: u32,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub azimuth_step_deg: f64,
    /// Horizontal field of view centered on the x axis.
    pub azimuth_fov_deg: f64,
    /// Mount height above the ground (the LiDAR sits above the vehicle origin).
    pub height: f64,
    pub max_range: f64,
    /// Standard deviation of the additive range noise (m).
    pub range_noise: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            channels: 32,
            min_elevation_deg: -24.0,
            max_elevation_deg: 7.0,
            azimuth_step_deg: 0.2,
            azimuth_fov_deg: 100.0,
            height: 1.8,
            max_range: 40.0,
            range_noise: 0.01,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub camera: CameraSpec,
    pub lidar: LidarSpec,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let l = &self.lidar;
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if l.channels == 0 || !(l.azimuth_step_deg > 0.0) || !(l.azimuth_fov_deg > 0.0) {
            return bad("lidar needs channels and a positive azimuth pattern");
        }
        if l.min_elevation_deg > l.max_elevation_deg || !(l.max_range > 0.0) || !(l.height > 0.0) {
            return bad("lidar elevation range, height and max range must be valid");
        }
        if !(l.range_noise >= 0.0) {
            return bad("lidar range noise must be non-negative");
        }
        if self.camera.position[2] <= 0.0 {
            return bad("camera must sit above the ground");
        }
        self.camera_model().validate().map_err(SimError::from)
    }

    pub fn camera_model(&self) -> CameraModel {
        let c = &self.camera;
        CameraModel::forward_facing(
            c.width,
            c.height,
            c.focal,
            c.cy,
            Point3::new(c.position[0], c.position[1], c.position[2]),
        )
    }
}

/// What a ray hits first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Hit {
    /// Ground at a vehicle-frame position.
    Ground { x: f64, y: f64 },
    /// Billboard `index` of the culled list at plate coordinates `(lateral, z)`.
    Board { index: usize, lateral: f64, z: f64 },
    Nothing,
}

/// Nearest intersection along `o + t d` with `t <= max_t`.
#[inline]
pub(crate) fn cast(o: &Point3, d: &Point3, boards: &[Billboard], max_t: f64) -> (f64, Hit) {
    let mut best = (max_t, Hit::Nothing);
    if d.z < 0.0 {
        let t = -o.z / d.z;
        if t <= best.0 {
            best = (t, Hit::Ground {
                x: o.x + t * d.x,
                y: o.y + t * d.y,
            });
        }
    }
    for (index, b) in boards.iter().enumerate() {
        if let Some((t, lateral)) = b.intersect(o, d) {
            if t < best.0 {
                best = (t, Hit::Board {
                    index,
                    lateral,
                    z: o.z + t * d.z,
                });
            }
        }
    }
    best
}

/// Precomputed ray bundles of a sensor configuration.
#[derive(Clone, Debug)]
pub struct SensorRig {
    pub spec: SensorSpec,
    pub camera: CameraModel,
    camera_origin: Point3,
    /// Row-major viewing rays in the vehicle frame.
    pixel_rays: Vec<Point3>,
    lidar_origin: Point3,
    /// Unit LiDAR directions in the vehicle frame.
    lidar_rays: Vec<Point3>,
}

impl SensorRig {
    pub fn new(spec: &SensorSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let camera = spec.camera_model();
        let (w, h) = (camera.image_width, camera.image_height);
        let mut pixel_rays = Vec::with_capacity(w as usize * h as usize);
        for v in 0..h {
            for u in 0..w {
                pixel_rays.push(camera.pixel_ray(u as f64, v as f64));
            }
        }
        let l = &spec.lidar;
        let columns = (l.azimuth_fov_deg / l.azimuth_step_deg).floor() as usize + 1;
        let mut lidar_rays = Vec::with_capacity(columns * l.channels as usize);
        for ch in 0..l.channels {
            let el = if l.channels == 1 {
                l.min_elevation_deg
            } else {
                l.min_elevation_deg
                    + (l.max_elevation_deg - l.min_elevation_deg) * ch as f64 / (l.channels - 1) as f64
            }
            .to_radians();
            for c in 0..columns {
                let az = (-0.5 * l.azimuth_fov_deg + c as f64 * l.azimuth_step_deg).to_radians();
                lidar_rays.push(Point3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            camera_origin: camera.center(),
            camera,
            pixel_rays,
            lidar_origin: Point3::new(0.0, 0.0, l.height),
            lidar_rays,
        })
    }

    pub fn width(&self) -> u32 {
        self.camera.image_width
    }

    pub fn height(&self) -> u32 {
        self.camera.image_height
    }

    pub(crate) fn camera_origin(&self) -> &Point3 {
        &self.camera_origin
    }

    pub(crate) fn pixel_ray(&self, u: u32, v: u32) -> &Point3 {
        &self.pixel_rays[v as usize * self.camera.image_width as usize + u as usize]
    }

    pub fn lidar_ray_count(&self) -> usize {
        self.lidar_rays.len()
    }

    /// Billboards near `pose`, expressed in the vehicle frame.
    pub(crate) fn visible_boards(&self, world: &World, pose: &Pose2D) -> (Vec<Billboard>, Vec<usize>) {
        let reach = self.spec.lidar.max_range.max(60.0) + 5.0;
        let mut boards = Vec::new();
        let mut ids = Vec::new();
        for (i, b) in world.landmarks.iter().enumerate() {
            let r = b.relative_to(pose);
            if r.x > -2.0 && r.x.hypot(r.y) < reach {
                boards.push(r);
                ids.push(i);
            }
        }
        (boards, ids)
    }
}

/// Ray-casts one LiDAR sweep at `pose`; points are in the vehicle frame and at most
/// `max_range` from the sensor.
pub fn cast_lidar<R: Rng>(rig: &SensorRig, world: &World, pose: &Pose2D, rng: &mut R) -> Vec<Point3> {
    let (boards, _) = rig.visible_boards(world, pose);
    let l = &rig.spec.lidar;
    let noise = Normal::new(0.0, l.range_noise.max(0.0)).expect("finite sigma");
    let o = rig.lidar_origin;
    let mut out = Vec::with_capacity(rig.lidar_rays.len() / 2);
    for d in &rig.lidar_rays {
        let (t, hit) = cast(&o, d, &boards, l.max_range);
        if matches!(hit, Hit::Nothing) {
            continue;
        }
        let t = if l.range_noise > 0.0 { t + noise.sample(rng) } else { t };
        let t = t.clamp(0.0, l.max_range);
        out.push(Point3::new(o.x + t * d.x, o.y + t * d.y, o.z + t * d.z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TRAFFIC_SIGN;
    use crate::sim::world::RoadLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_rig_is_valid() {
        let rig = SensorRig::new(&SensorSpec::default()).unwrap();
        assert_eq!(rig.lidar_ray_count(), 32 * 501);
        let o = rig.camera_origin();
        assert!((o.x - 0.5).abs() < 1e-12 && (o.z - 1.6).abs() < 1e-12);
        // The principal point looks straight ahead.
        let d = rig.pixel_ray(280, 80);
        assert!(d.x > 0.0 && d.y.abs() < 1e-12 && d.z.abs() < 1e-12);
    }

    #[test]
    fn ground_hit_geometry() {
        let d = Point3::new(1.0, 0.0, -0.1);
        let (t, hit) = cast(&Point3::new(0.0, 0.0, 2.0), &d, &[], 100.0);
        assert!((t - 20.0).abs() < 1e-12);
        assert_eq!(hit, Hit::Ground { x: 20.0, y: 0.0 });
        let (_, hit) = cast(&Point3::new(0.0, 0.0, 2.0), &d, &[], 10.0);
        assert_eq!(hit, Hit::Nothing);
    }

    #[test]
    fn board_occludes_ground() {
        let b = Billboard {
            id: 1,
            class: TRAFFIC_SIGN,
            x: 5.0,
            y: 0.0,
            yaw: std::f64::consts::PI,
            half_width: 1.0,
            z_min: 0.0,
            z_max: 3.0,
        };
        let (t, hit) = cast(&Point3::new(0.0, 0.0, 2.0), &Point3::new(1.0, 0.0, -0.1), &[b], 100.0);
        assert!((t - 5.0).abs() < 1e-12);
        assert!(matches!(hit, Hit::Board { index: 0, .. }));
    }

    #[test]
    fn lidar_points_respect_max_range() {
        let world = World::generate(&RoadLayout::default(), 4).unwrap();
        let rig = SensorRig::new(&SensorSpec::default()).unwrap();
        let pose = world.pose_at(40.0, -1.75);
        let pts = cast_lidar(&rig, &world, &pose, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(pts.len() > 5000);
        assert!(pts.iter().all(|p| p.distance(&Point3::new(0.0, 0.0, 1.8)) <= 40.0 + 1e-9));
        // Ground returns lie on z = 0 up to range noise.
        let ground = pts.iter().filter(|p| p.z.abs() < 0.05).count();
        assert!(ground * 10 > pts.len() * 9);
    }
}

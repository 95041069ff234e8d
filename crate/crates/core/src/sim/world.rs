//! Road geometry, painted markings and billboard landmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{ClassId, Point3, Pose2D, DRIVABLE_AREA, ROAD_MARKING, TRAFFIC_LIGHT, TRAFFIC_SIGN};

/// A painted line running parallel to the centerline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkingLine {
    /// Lateral offset from the centerline (m, left positive).
    pub offset: f64,
    pub width: f64,
    /// `(paint, gap)` lengths for dashed lines; solid when absent.
    pub dash: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadLayout {
    pub length: f64,
    pub width: f64,
    /// The heading follows `amplitude * sin(2 pi s / period + phase)`.
    pub heading_amplitude: f64,
    pub heading_period: f64,
    pub markings: Vec<MarkingLine>,
    /// Stop bars painted across the right lane.
    pub stop_bars: usize,
    pub stop_bar_depth: f64,
    pub landmarks: usize,
    /// Fraction of landmarks that are traffic lights; the rest are signs.
    pub light_fraction: f64,
    /// Landmark distance beyond the road edge (m).
    pub landmark_gap: (f64, f64),
}

impl Default for RoadLayout {
    fn default() -> Self {
        Self {
            length: 260.0,
            width: 7.0,
            heading_amplitude: 0.25,
            heading_period: 160.0,
            markings: vec![
                MarkingLine {
                    offset: 0.0,
                    width: 0.15,
                    dash: Some((3.0, 3.0)),
                },
                MarkingLine {
                    offset: 3.3,
                    width: 0.15,
                    dash: None,
                },
                MarkingLine {
                    offset: -3.3,
                    width: 0.15,
                    dash: None,
                },
            ],
            stop_bars: 6,
            stop_bar_depth: 0.4,
            landmarks: 12,
            light_fraction: 0.4,
            landmark_gap: (0.8, 2.0),
        }
    }
}

/// A flat vertical plate floating above the ground; its footprint is a line segment.
///
/// Plates straddle the camera horizon so that pixels around their silhouette see the ground
/// behind them, which is what turns edge leaking into range outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Billboard {
    /// 1-based landmark id.
    pub id: u32,
    pub class: ClassId,
    pub x: f64,
    pub y: f64,
    /// Direction of the plate normal.
    pub yaw: f64,
    pub half_width: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Billboard {
    pub fn center(&self) -> Point3 {
        Point3::new(self.x, self.y, 0.5 * (self.z_min + self.z_max))
    }

    /// End points of the footprint segment.
    pub fn footprint(&self) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.yaw.sin_cos();
        let (tx, ty) = (-s * self.half_width, c * self.half_width);
        ((self.x - tx, self.y - ty), (self.x + tx, self.y + ty))
    }

    /// Expressed in the frame of `pose` (yaw relative, position transformed).
    pub fn relative_to(&self, pose: &Pose2D) -> Billboard {
        let (x, y) = pose.inverse().transform_point(self.x, self.y);
        Billboard {
            x,
            y,
            yaw: self.yaw - pose.yaw,
            ..self.clone()
        }
    }

    /// Ray parameter `t > 0` at which `o + t d` crosses the plate, with the lateral plate
    /// coordinate of the hit.
    #[inline]
    pub fn intersect(&self, o: &Point3, d: &Point3) -> Option<(f64, f64)> {
        let (s, c) = self.yaw.sin_cos();
        let denom = c * d.x + s * d.y;
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (c * (self.x - o.x) + s * (self.y - o.y)) / denom;
        if !(t > 1e-6) {
            return None;
        }
        let z = o.z + t * d.z;
        if z < self.z_min || z > self.z_max {
            return None;
        }
        let (px, py) = (o.x + t * d.x - self.x, o.y + t * d.y - self.y);
        let lateral = -s * px + c * py;
        (lateral.abs() <= self.half_width).then_some((t, lateral))
    }
}

/// Class raster of the painted ground.
#[derive(Clone, Debug, PartialEq)]
struct Raster {
    x0: f64,
    y0: f64,
    res: f64,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

const NONE: u8 = u8::MAX;

impl Raster {
    #[inline]
    fn get(&self, x: f64, y: f64) -> Option<ClassId> {
        let c = ((x - self.x0) / self.res).floor();
        let r = ((y - self.y0) / self.res).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        let v = self.data[r as usize * self.width + c as usize];
        (v != NONE).then_some(v)
    }

    fn set(&mut self, x: f64, y: f64, class: ClassId) {
        let c = ((x - self.x0) / self.res).floor();
        let r = ((y - self.y0) / self.res).floor();
        if c >= 0.0 && r >= 0.0 && c < self.width as f64 && r < self.height as f64 {
            self.data[r as usize * self.width + c as usize] = class;
        }
    }
}

/// Generated geometry of one synthetic world.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub layout: RoadLayout,
    pub seed: u64,
    /// Centerline samples `(x, y, heading)` every `STEP` meters of arc length.
    samples: Vec<(f64, f64, f64)>,
    pub landmarks: Vec<Billboard>,
    /// Arc-length start of every stop bar.
    pub stop_bars: Vec<f64>,
    raster: Raster,
}

const STEP: f64 = 0.25;
const RASTER_RES: f64 = 0.05;

impl World {
    pub fn generate(layout: &RoadLayout, seed: u64) -> Result<Self, SimError> {
        if !(layout.length > 20.0 && layout.width > 1.0 && layout.heading_period > 0.0) {
            return Err(SimError::InvalidSpec("road needs length > 20 m, width > 1 m and a positive period".into()));
        }
        if !(0.0..=1.0).contains(&layout.light_fraction) || layout.landmark_gap.0 > layout.landmark_gap.1 {
            return Err(SimError::InvalidSpec("bad landmark parameters".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let n = (layout.length / STEP).ceil() as usize + 1;
        let mut samples = Vec::with_capacity(n);
        let (mut x, mut y) = (0.0, 0.0);
        for i in 0..n {
            let s = i as f64 * STEP;
            let h = layout.heading_amplitude * (std::f64::consts::TAU * s / layout.heading_period + phase).sin();
            samples.push((x, y, h));
            // Midpoint heading for the next step.
            let hm = layout.heading_amplitude
                * (std::f64::consts::TAU * (s + 0.5 * STEP) / layout.heading_period + phase).sin();
            x += STEP * hm.cos();
            y += STEP * hm.sin();
        }

        let half = 0.5 * layout.width;
        let stop_bars: Vec<f64> = if layout.stop_bars == 0 {
            Vec::new()
        } else {
            let spacing = layout.length / layout.stop_bars as f64;
            (0..layout.stop_bars)
                .map(|i| (i as f64 + 0.25 + 0.5 * rng.random::<f64>()) * spacing)
                .collect()
        };

        let mut landmarks = Vec::with_capacity(layout.landmarks);
        if layout.landmarks > 0 {
            let spacing = (layout.length - 20.0) / layout.landmarks as f64;
            for i in 0..layout.landmarks {
                let s = 10.0 + (i as f64 + 0.2 + 0.6 * rng.random::<f64>()) * spacing;
                let side = if rng.random::<f64>() < 0.65 { -1.0 } else { 1.0 };
                let gap = rng.random_range(layout.landmark_gap.0..=layout.landmark_gap.1);
                let light = rng.random::<f64>() < layout.light_fraction;
                let pose = centerline_pose(&samples, s, side * (half + gap));
                let (class, half_width, z_min, height) = if light {
                    (TRAFFIC_LIGHT, 0.2, rng.random_range(1.0..1.5), 1.0)
                } else {
                    (
                        TRAFFIC_SIGN,
                        rng.random_range(0.3..0.5),
                        rng.random_range(0.9..1.4),
                        rng.random_range(0.6..1.0),
                    )
                };
                landmarks.push(Billboard {
                    id: i as u32 + 1,
                    class,
                    x: pose.x,
                    y: pose.y,
                    // Facing oncoming traffic.
                    yaw: pose.yaw + std::f64::consts::PI,
                    half_width,
                    z_min,
                    z_max: z_min + height,
                });
            }
        }

        let margin = half + 1.0;
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(x, y, _) in &samples {
            min_x = min_x.min(x - margin);
            min_y = min_y.min(y - margin);
            max_x = max_x.max(x + margin);
            max_y = max_y.max(y + margin);
        }
        let width = ((max_x - min_x) / RASTER_RES).ceil() as usize;
        let height = ((max_y - min_y) / RASTER_RES).ceil() as usize;
        let mut raster = Raster {
            x0: min_x,
            y0: min_y,
            res: RASTER_RES,
            width,
            height,
            data: vec![NONE; width * height],
        };
        paint(&mut raster, &samples, layout, &stop_bars);
        Ok(Self {
            layout: layout.clone(),
            seed,
            samples,
            landmarks,
            stop_bars,
            raster,
        })
    }

    /// Road arc length covered by the centerline.
    pub fn length(&self) -> f64 {
        (self.samples.len() - 1) as f64 * STEP
    }

    /// Pose at arc length `s` shifted `lateral` meters to the left, heading along the road.
    pub fn pose_at(&self, s: f64, lateral: f64) -> Pose2D {
        centerline_pose(&self.samples, s, lateral)
    }

    /// Painted class of the ground at a world position.
    #[inline]
    pub fn class_at(&self, x: f64, y: f64) -> Option<ClassId> {
        self.raster.get(x, y)
    }

    /// Axis-aligned bounds `(min_x, min_y, max_x, max_y)` of the centerline between two arc
    /// lengths, grown by `margin`.
    pub fn bounds(&self, s0: f64, s1: f64, margin: f64) -> (f64, f64, f64, f64) {
        let i0 = ((s0.max(0.0)) / STEP).floor() as usize;
        let i1 = ((s1 / STEP).ceil() as usize).min(self.samples.len() - 1);
        let (mut a, mut b, mut c, mut d) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(x, y, _) in &self.samples[i0.min(i1)..=i1] {
            a = a.min(x - margin);
            b = b.min(y - margin);
            c = c.max(x + margin);
            d = d.max(y + margin);
        }
        (a, b, c, d)
    }
}

fn centerline_pose(samples: &[(f64, f64, f64)], s: f64, lateral: f64) -> Pose2D {
    let f = (s / STEP).clamp(0.0, (samples.len() - 1) as f64);
    let i = (f.floor() as usize).min(samples.len() - 2);
    let t = f - i as f64;
    let (x0, y0, h0) = samples[i];
    let (x1, y1, h1) = samples[i + 1];
    let (x, y, h) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0), h0 + t * (h1 - h0));
    Pose2D::new(x - lateral * h.sin(), y + lateral * h.cos(), h)
}

fn paint(raster: &mut Raster, samples: &[(f64, f64, f64)], layout: &RoadLayout, stop_bars: &[f64]) {
    let half = 0.5 * layout.width;
    let ds = 0.02;
    let length = (samples.len() - 1) as f64 * STEP;
    let steps = (length / ds) as usize;
    let lanes = (layout.width / ds).ceil() as usize;
    for i in 0..=steps {
        let s = i as f64 * ds;
        let base = centerline_pose(samples, s, 0.0);
        let (sn, cs) = base.yaw.sin_cos();
        let at = |l: f64| (base.x - l * sn, base.y + l * cs);
        for j in 0..=lanes {
            let l = -half + j as f64 * ds;
            let (x, y) = at(l.min(half));
            raster.set(x, y, DRIVABLE_AREA);
        }
        for m in &layout.markings {
            let on = match m.dash {
                None => true,
                Some((paint, gap)) => s.rem_euclid(paint + gap) < paint,
            };
            if !on {
                continue;
            }
            let n = (m.width / 0.01).ceil() as usize;
            for j in 0..=n {
                let (x, y) = at(m.offset - 0.5 * m.width + j as f64 * 0.01);
                raster.set(x, y, ROAD_MARKING);
            }
        }
        if stop_bars.iter().any(|&b| s >= b && s < b + layout.stop_bar_depth) {
            for j in 0..=(half / 0.01) as usize {
                let (x, y) = at(-(j as f64) * 0.01);
                raster.set(x, y, ROAD_MARKING);
            }
        }
    }
}

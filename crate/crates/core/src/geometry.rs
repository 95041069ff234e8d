//! Class taxonomy, planar poses and BEV grid geometry.
//!
//! Grid cells are indexed row-major: `col` follows the grid's x axis, `row` its y axis, and
//! the flat index is `row * width + col`. A world point belongs to the cell whose lower-left
//! corner is `floor(p / resolution)` in the grid frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a semantic class inside a [`Taxonomy`]; [`UNKNOWN`] marks "no information".
pub type ClassId = u8;

pub const UNKNOWN: ClassId = u8::MAX;
pub const DRIVABLE_AREA: ClassId = 0;
pub const ROAD_MARKING: ClassId = 1;
pub const TRAFFIC_SIGN: ClassId = 2;
pub const TRAFFIC_LIGHT: ClassId = 3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("grid resolution must be positive, got {0}")]
    Resolution(f64),
    #[error("grid must have at least one cell in each direction ({width}x{height})")]
    EmptyGrid { width: usize, height: usize },
    #[error("taxonomy must contain between 1 and 254 classes, got {0}")]
    ClassCount(usize),
    #[error("class ids must be contiguous from 0, found {found} at position {expected}")]
    ClassOrder { expected: usize, found: ClassId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticClass {
    pub id: ClassId,
    pub name: String,
    /// Instance-bearing ("thing") class.
    pub thing: bool,
}

/// The ordered set of K foreground classes. `unknown` is implicit and never counted in K.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    classes: Vec<SemanticClass>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        let class = |id, name: &str, thing| SemanticClass {
            id,
            name: name.to_string(),
            thing,
        };
        Self {
            classes: vec![
                class(DRIVABLE_AREA, "drivable_area", false),
                class(ROAD_MARKING, "road_marking", false),
                class(TRAFFIC_SIGN, "traffic_sign", true),
                class(TRAFFIC_LIGHT, "traffic_light", true),
            ],
        }
    }
}

impl Taxonomy {
    pub fn new(classes: Vec<SemanticClass>) -> Result<Self, GeometryError> {
        if classes.is_empty() || classes.len() >= UNKNOWN as usize {
            return Err(GeometryError::ClassCount(classes.len()));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.id as usize != i {
                return Err(GeometryError::ClassOrder {
                    expected: i,
                    found: c.id,
                });
            }
        }
        Ok(Self { classes })
    }

    /// Number of classes K.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[SemanticClass] {
        &self.classes
    }

    pub fn is_thing(&self, id: ClassId) -> bool {
        self.classes.get(id as usize).is_some_and(|c| c.thing)
    }

    pub fn name(&self, id: ClassId) -> &str {
        self.classes
            .get(id as usize)
            .map_or("unknown", |c| c.name.as_str())
    }

    pub fn thing_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().filter(|c| c.thing).map(|c| c.id)
    }

    pub fn stuff_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.iter().filter(|c| !c.thing).map(|c| c.id)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A planar pose; `yaw` is kept in (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    /// `self ∘ local`: expresses a pose given in this frame in the parent frame.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let (s, c) = self.yaw.sin_cos();
        Pose2D::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
            self.yaw + local.yaw,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.yaw.sin_cos();
        Pose2D::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.yaw,
        )
    }

    pub fn transform_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * x - s * y, self.y + s * x + c * y)
    }

    pub fn transform_point3(&self, p: &Point3) -> Point3 {
        let (x, y) = self.transform_point(p.x, p.y);
        Point3::new(x, y, p.z)
    }
}

/// Rigid SE(2) composition: `local` expressed in `frame`, returned in the parent frame.
pub fn transform_pose(local: &Pose2D, frame: &Pose2D) -> Pose2D {
    frame.compose(local)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    /// Meters per cell edge.
    pub resolution: f64,
    /// Pose of the outer corner of cell (0, 0).
    pub origin: Pose2D,
    pub width: usize,
    pub height: usize,
}

impl GridGeometry {
    pub const DEFAULT_RESOLUTION: f64 = 0.10;

    pub fn new(
        resolution: f64,
        origin: Pose2D,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let g = Self {
            resolution,
            origin,
            width,
            height,
        };
        g.validate()?;
        Ok(g)
    }

    /// Axis-aligned grid covering `[min_x, max_x) x [min_y, max_y)`.
    pub fn covering(
        resolution: f64,
        min_x: f64,
        min_y: f64,
        max_x: f64,
        max_y: f64,
    ) -> Result<Self, GeometryError> {
        if !(resolution > 0.0) {
            return Err(GeometryError::Resolution(resolution));
        }
        let width = ((max_x - min_x) / resolution).ceil().max(1.0) as usize;
        let height = ((max_y - min_y) / resolution).ceil().max(1.0) as usize;
        Self::new(resolution, Pose2D::new(min_x, min_y, 0.0), width, height)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(GeometryError::Resolution(self.resolution));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::EmptyGrid {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<CellIndex> {
        let (gx, gy) = if self.origin.yaw == 0.0 {
            (x - self.origin.x, y - self.origin.y)
        } else {
            self.origin.inverse().transform_point(x, y)
        };
        let col = (gx / self.resolution).floor();
        let row = (gy / self.resolution).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(CellIndex {
            col: col as usize,
            row: row as usize,
        })
    }

    /// Flat index of the cell containing the point, if any.
    #[inline]
    pub fn world_to_index(&self, x: f64, y: f64) -> Option<usize> {
        self.world_to_cell(x, y).map(|c| self.index(c))
    }

    /// World position of the cell's lower-left corner.
    pub fn world_of(&self, cell: CellIndex) -> (f64, f64) {
        self.origin.transform_point(
            cell.col as f64 * self.resolution,
            cell.row as f64 * self.resolution,
        )
    }

    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        self.origin.transform_point(
            (cell.col as f64 + 0.5) * self.resolution,
            (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    #[inline]
    pub fn index(&self, cell: CellIndex) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_of_index(&self, index: usize) -> CellIndex {
        CellIndex {
            col: index % self.width,
            row: index / self.width,
        }
    }
}

/// Cell containing `p`, or `None` outside the grid.
pub fn world_to_cell(p: (f64, f64), g: &GridGeometry) -> Option<CellIndex> {
    g.world_to_cell(p.0, p.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(res: f64) -> GridGeometry {
        GridGeometry::new(res, Pose2D::default(), 100, 100).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let g = grid(0.1);
        assert_eq!(
            world_to_cell((0.05, 0.05), &g),
            Some(CellIndex { col: 0, row: 0 })
        );
        assert_eq!(world_to_cell((-0.01, 0.0), &g), None);
        assert_eq!(
            world_to_cell((1.00, 2.34), &g),
            Some(CellIndex { col: 10, row: 23 })
        );
        assert_eq!(world_to_cell((10.0, 5.0), &g), None);
    }

    #[test]
    fn transform_pose_examples() {
        let p = transform_pose(&Pose2D::new(1.0, 0.0, 0.0), &Pose2D::default());
        assert_eq!(p, Pose2D::new(1.0, 0.0, 0.0));

        let p = transform_pose(&Pose2D::new(1.0, 0.0, 0.0), &Pose2D::new(0.0, 0.0, PI / 2.0));
        assert!(p.x.abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
        assert!((p.yaw - PI / 2.0).abs() < 1e-12);

        // Hand-evaluated rotation of (2, 1) by 0.2 rad plus (5, -1).
        let p = transform_pose(&Pose2D::new(2.0, 1.0, 0.3), &Pose2D::new(5.0, -1.0, 0.2));
        assert!((p.x - 6.7614638248874215).abs() < 1e-12);
        assert!((p.y - 0.37740523943136406).abs() < 1e-12);
        assert!((p.yaw - 0.5).abs() < 1e-12);
    }

    #[test]
    fn yaw_is_wrapped_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        let p = Pose2D::new(0.0, 0.0, 0.75 * PI).compose(&Pose2D::new(0.0, 0.0, 0.75 * PI));
        assert!((p.yaw + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_grid_uses_origin_frame() {
        let g = GridGeometry::new(0.5, Pose2D::new(1.0, 1.0, PI / 2.0), 4, 4).unwrap();
        // Grid x axis points along world +y.
        assert_eq!(g.world_to_cell(0.9, 1.1), Some(CellIndex { col: 0, row: 0 }));
        assert_eq!(g.world_to_cell(1.1, 1.1), None);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(GridGeometry::new(0.0, Pose2D::default(), 1, 1).is_err());
        assert!(GridGeometry::new(0.1, Pose2D::default(), 0, 1).is_err());
    }

    #[test]
    fn default_taxonomy() {
        let t = Taxonomy::default();
        assert_eq!(t.len(), 4);
        assert_eq!(
            t.thing_classes().collect::<Vec<_>>(),
            vec![TRAFFIC_SIGN, TRAFFIC_LIGHT]
        );
        assert_eq!(t.name(UNKNOWN), "unknown");
        assert!(!t.is_thing(UNKNOWN));
    }

    proptest! {
        #[test]
        fn compose_with_inverse_roundtrips(
            px in -50.0..50.0f64, py in -50.0..50.0f64, pa in -3.2..3.2f64,
            fx in -50.0..50.0f64, fy in -50.0..50.0f64, fa in -3.2..3.2f64,
        ) {
            let p = Pose2D::new(px, py, pa);
            let f = Pose2D::new(fx, fy, fa);
            let back = transform_pose(&transform_pose(&p, &f), &f.inverse());
            prop_assert!((back.x - p.x).abs() < 1e-9);
            prop_assert!((back.y - p.y).abs() < 1e-9);
            prop_assert!(normalize_angle(back.yaw - p.yaw).abs() < 1e-9);
        }

        #[test]
        fn cell_center_roundtrips(col in 0usize..100, row in 0usize..100, res in 0.05..2.0f64,
                                  ox in -10.0..10.0f64, oy in -10.0..10.0f64, oa in -3.1..3.1f64) {
            let g = GridGeometry::new(res, Pose2D::new(ox, oy, oa), 100, 100).unwrap();
            let c = CellIndex { col, row };
            let (x, y) = g.cell_center(c);
            prop_assert_eq!(g.world_to_cell(x, y), Some(c));
        }

        #[test]
        fn translation_consistent(px in 0.0..9.9f64, py in 0.0..9.9f64, dx in -100..100i32, dy in -100..100i32) {
            // Integer-multiple shifts keep floating point exact enough for the floor.
            let (dx, dy) = (dx as f64 * 0.5, dy as f64 * 0.5);
            let g = grid(0.1);
            let shifted = GridGeometry { origin: Pose2D::new(dx, dy, 0.0), ..g };
            let a = g.world_to_cell(px, py);
            let b = shifted.world_to_cell(px + dx, py + dy);
            // Away from cell boundaries the index is identical.
            let frac = |v: f64| (v / 0.1).fract();
            prop_assume!(frac(px) > 1e-6 && frac(px) < 1.0 - 1e-6 && frac(py) > 1e-6 && frac(py) < 1.0 - 1e-6);
            prop_assert_eq!(a, b);
        }
    }
}

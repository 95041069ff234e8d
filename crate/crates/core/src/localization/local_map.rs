//! Single-frame panoptic grid in the vehicle frame, stored compactly as its known cells.

use crate::geometry::{ClassId, GridGeometry, Pose2D, Taxonomy};
use crate::ingest::AugmentedPoint;
use crate::map::{AggregationStrategy, PanopticGridMap};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCell {
    /// Flat index in the local grid.
    pub index: usize,
    /// Cell center, vehicle frame.
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
    pub utilde: f64,
    pub instance: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalMap {
    geometry: GridGeometry,
    k: usize,
    /// Known cells in ascending index order.
    pub(super) cells: Vec<LocalCell>,
    /// Class probabilities of `cells`, `k` per cell.
    probabilities: Vec<f32>,
}

impl LocalMap {
    /// Builds the local map of one frame: the augmented points go through the same
    /// instance filtering and evidential aggregation as the global map, on a grid spanning
    /// `[-1, max_range] x [-max_range, max_range]` around the vehicle.
    pub fn build(points: Vec<AugmentedPoint>, taxonomy: &Taxonomy, max_range: f64, resolution: f64) -> Self {
        let geometry = GridGeometry::covering(resolution, -1.0, -max_range, max_range, max_range)
            .expect("local grid geometry is valid");
        let mut map = PanopticGridMap::new(geometry, taxonomy.clone(), AggregationStrategy::Evidential);
        map.integrate_frame(points, Pose2D::default());
        Self::from_map(&map)
    }

    /// Compacts an existing vehicle-frame map.
    pub fn from_map(map: &PanopticGridMap) -> Self {
        let g = *map.geometry();
        let k = map.classes();
        let mut cells = Vec::new();
        let mut probabilities = Vec::new();
        for i in map.known_cells() {
            let (x, y) = g.cell_center(g.cell_of_index(i));
            cells.push(LocalCell {
                index: i,
                x,
                y,
                class: map.label(i),
                utilde: map.utilde(i),
                instance: map.instance(i),
            });
            let p = map.cell_probabilities(i).expect("known cell");
            probabilities.extend(p.as_slice().iter().map(|v| *v as f32));
        }
        Self {
            geometry: g,
            k,
            cells,
            probabilities,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[LocalCell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    /// Probabilities of the `i`-th known cell.
    pub fn probabilities(&self, i: usize) -> &[f32] {
        &self.probabilities[i * self.k..(i + 1) * self.k]
    }

    /// Position in `cells` of the known cell containing the vehicle-frame point.
    pub fn lookup(&self, x: f64, y: f64) -> Option<usize> {
        let idx = self.geometry.world_to_index(x, y)?;
        self.cells.binary_search_by_key(&idx, |c| c.index).ok()
    }
}

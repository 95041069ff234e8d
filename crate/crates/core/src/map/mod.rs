//! The global BEV panoptic grid map.
//!
//! Every cell keeps a per-class accumulator whose meaning depends on the map's
//! [`AggregationStrategy`]:
//!
//! - `Evidential`: running sum of evidence. The cell evidence is the average
//!   `sum(alpha) / (N * K)`, which equals the uncertainty-weighted mean of the measured
//!   probabilities `(1/N) * sum(p / u)`; cell probabilities renormalise it.
//! - `LatestPerception`: the evidence of the last measurement only.
//! - `LogOddsSoftmax`: summed per-class log-odds of the measured probabilities; cell
//!   probabilities are their softmax.
//!
//! The total uncertainty of a cell is the normalised entropy of its probabilities for all
//! three strategies. Class, uncertainty and instance id are cached per cell and refreshed on
//! every integration.

mod export;
mod io;
mod landmarks;
mod mapper;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{write_landmarks_csv, write_raster_csv, RasterKind};
pub use io::{load_map, read_map, save_map, write_map, UPM_MAGIC, UPM_VERSION};
pub use landmarks::{
    associate_instances, filter_instance_points, mad_inliers, median, Detection, Landmark,
    LandmarkRegistry, ASSOCIATION_RADIUS, MAD_FACTOR, MIN_INSTANCE_POINTS,
};
pub use mapper::FrameReport;

use crate::evidential::{argmax, normalized_entropy_of, ProbabilityVector};
use crate::geometry::{CellIndex, ClassId, GridGeometry, Pose2D, Taxonomy, UNKNOWN};
use crate::ingest::AugmentedPoint;

/// Per-class probabilities are clamped to `[LOG_ODDS_CLAMP, 1 - LOG_ODDS_CLAMP]` before the logit.
pub const LOG_ODDS_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("cell {0} has no measurements")]
    EmptyCell(usize),
    #[error("map geometries differ")]
    GeometryMismatch,
    #[error("corrupt map file: {0}")]
    CorruptFile(String),
    #[error("unsupported map version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    Evidential,
    LatestPerception,
    LogOddsSoftmax,
}

impl AggregationStrategy {
    pub const ALL: [AggregationStrategy; 3] = [
        AggregationStrategy::LatestPerception,
        AggregationStrategy::LogOddsSoftmax,
        AggregationStrategy::Evidential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationStrategy::Evidential => "evidential",
            AggregationStrategy::LatestPerception => "latest_perception",
            AggregationStrategy::LogOddsSoftmax => "log_odds_softmax",
        }
    }
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "evidential" => Ok(AggregationStrategy::Evidential),
            "latest" | "latest_perception" => Ok(AggregationStrategy::LatestPerception),
            "log_odds" | "log_odds_softmax" | "logodds" => Ok(AggregationStrategy::LogOddsSoftmax),
            other => Err(format!("unknown aggregation strategy {other:?}")),
        }
    }
}

/// Read-only view of one map cell.
#[derive(Clone, Copy, Debug)]
pub struct MapCell<'a> {
    pub strategy: AggregationStrategy,
    /// Strategy-dependent per-class accumulator (the evidence sum for `Evidential`).
    pub evidence_sum: &'a [f64],
    /// Number of measurements N.
    pub n: u32,
    /// Instance votes as `(instance id, count)`, sorted by id.
    pub votes: &'a [(u32, u32)],
    pub class: ClassId,
    pub utilde: f64,
    pub instance: u32,
}

/// Per-class probabilities of a cell.
pub fn cell_probabilities(cell: &MapCell<'_>) -> Result<ProbabilityVector, MapError> {
    if cell.n == 0 {
        return Err(MapError::EmptyCell(0));
    }
    Ok(ProbabilityVector::from_weights_unchecked(probabilities_of(
        cell.strategy,
        cell.evidence_sum,
    )))
}

/// Normalised entropy of the cell probabilities.
pub fn cell_uncertainty(cell: &MapCell<'_>) -> Result<f64, MapError> {
    Ok(normalized_entropy_of(cell_probabilities(cell)?.as_slice()))
}

fn probabilities_of(strategy: AggregationStrategy, acc: &[f64]) -> Vec<f64> {
    match strategy {
        AggregationStrategy::Evidential | AggregationStrategy::LatestPerception => {
            let s: f64 = acc.iter().sum();
            acc.iter().map(|a| a / s).collect()
        }
        AggregationStrategy::LogOddsSoftmax => softmax(acc),
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOG_ODDS_CLAMP, 1.0 - LOG_ODDS_CLAMP);
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PanopticGridMap {
    geometry: GridGeometry,
    taxonomy: Taxonomy,
    strategy: AggregationStrategy,
    accum: Vec<f64>,
    counts: Vec<u32>,
    votes: BTreeMap<usize, Vec<(u32, u32)>>,
    labels: Vec<ClassId>,
    utilde: Vec<f32>,
    instances: Vec<u32>,
    landmarks: LandmarkRegistry,
}

impl PanopticGridMap {
    pub fn new(geometry: GridGeometry, taxonomy: Taxonomy, strategy: AggregationStrategy) -> Self {
        let n = geometry.cell_count();
        let k = taxonomy.len();
        Self {
            geometry,
            taxonomy,
            strategy,
            accum: vec![0.0; n * k],
            counts: vec![0; n],
            votes: BTreeMap::new(),
            labels: vec![UNKNOWN; n],
            utilde: vec![1.0; n],
            instances: vec![0; n],
            landmarks: LandmarkRegistry::new(),
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn strategy(&self) -> AggregationStrategy {
        self.strategy
    }

    /// Number of classes K.
    pub fn classes(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn landmarks(&self) -> &LandmarkRegistry {
        &self.landmarks
    }

    pub fn landmarks_mut(&mut self) -> &mut LandmarkRegistry {
        &mut self.landmarks
    }

    pub fn cell_count(&self) -> usize {
        self.counts.len()
    }

    pub fn cell(&self, index: usize) -> MapCell<'_> {
        let k = self.classes();
        MapCell {
            strategy: self.strategy,
            evidence_sum: &self.accum[index * k..(index + 1) * k],
            n: self.counts[index],
            votes: self.votes.get(&index).map_or(&[], Vec::as_slice),
            class: self.labels[index],
            utilde: f64::from(self.utilde[index]),
            instance: self.instances[index],
        }
    }

    pub fn cell_at(&self, c: CellIndex) -> MapCell<'_> {
        self.cell(self.geometry.index(c))
    }

    /// Cached class of a cell, [`UNKNOWN`] when it has no measurements.
    #[inline]
    pub fn label(&self, index: usize) -> ClassId {
        self.labels[index]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    /// Cached total uncertainty (1.0 for empty cells).
    #[inline]
    pub fn utilde(&self, index: usize) -> f64 {
        f64::from(self.utilde[index])
    }

    #[inline]
    pub fn instance(&self, index: usize) -> u32 {
        self.instances[index]
    }

    pub fn count(&self, index: usize) -> u32 {
        self.counts[index]
    }

    pub fn is_known(&self, index: usize) -> bool {
        self.counts[index] > 0
    }

    pub fn known_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(i, _)| i)
    }

    pub fn cell_probabilities(&self, index: usize) -> Result<ProbabilityVector, MapError> {
        cell_probabilities(&self.cell(index)).map_err(|_| MapError::EmptyCell(index))
    }

    pub fn cell_uncertainty(&self, index: usize) -> Result<f64, MapError> {
        cell_uncertainty(&self.cell(index)).map_err(|_| MapError::EmptyCell(index))
    }

    /// Average evidence `sum(alpha) / (N * K)` of an evidential cell.
    pub fn cell_evidence(&self, index: usize) -> Result<Vec<f64>, MapError> {
        let cell = self.cell(index);
        if cell.n == 0 {
            return Err(MapError::EmptyCell(index));
        }
        let scale = f64::from(cell.n) * self.classes() as f64;
        Ok(cell.evidence_sum.iter().map(|a| a / scale).collect())
    }

    /// Bins vehicle-frame points into the map at `vehicle_pose`. Points outside the map or
    /// without evidence are dropped; returns how many were integrated.
    pub fn integrate_points(&mut self, points: &[AugmentedPoint], vehicle_pose: Pose2D) -> usize {
        let mut used = 0;
        for p in points {
            let (x, y) = vehicle_pose.transform_point(p.position.x, p.position.y);
            if let Some(index) = self.geometry.world_to_index(x, y) {
                if self.integrate_at(index, p) {
                    used += 1;
                }
            }
        }
        used
    }

    fn integrate_at(&mut self, index: usize, p: &AugmentedPoint) -> bool {
        let k = self.classes();
        let alpha = p.evidence.alpha();
        if alpha.len() != k {
            return false;
        }
        let s: f64 = alpha.iter().sum();
        if !(s > 0.0) {
            return false;
        }
        let acc = &mut self.accum[index * k..(index + 1) * k];
        match self.strategy {
            AggregationStrategy::Evidential => {
                acc.iter_mut().zip(alpha).for_each(|(a, e)| *a += e);
            }
            AggregationStrategy::LatestPerception => acc.copy_from_slice(alpha),
            AggregationStrategy::LogOddsSoftmax => {
                acc.iter_mut()
                    .zip(alpha)
                    .for_each(|(a, e)| *a += logit(e / s));
            }
        }
        self.counts[index] = self.counts[index].saturating_add(1);

        let class = argmax(alpha) as ClassId;
        let vote = (p.instance > 0 && self.taxonomy.is_thing(class)).then_some(p.instance);
        if self.strategy == AggregationStrategy::LatestPerception {
            match vote {
                Some(id) => {
                    self.votes.insert(index, vec![(id, 1)]);
                }
                None => {
                    self.votes.remove(&index);
                }
            }
        } else if let Some(id) = vote {
            let v = self.votes.entry(index).or_default();
            match v.binary_search_by_key(&id, |(i, _)| *i) {
                Ok(pos) => v[pos].1 += 1,
                Err(pos) => v.insert(pos, (id, 1)),
            }
        }
        self.refresh(index);
        true
    }

    /// Recomputes the cached class, uncertainty and instance of a cell.
    fn refresh(&mut self, index: usize) {
        if self.counts[index] == 0 {
            self.labels[index] = UNKNOWN;
            self.utilde[index] = 1.0;
            self.instances[index] = 0;
            return;
        }
        let k = self.classes();
        let p = probabilities_of(self.strategy, &self.accum[index * k..(index + 1) * k]);
        let class = argmax(&p) as ClassId;
        self.labels[index] = class;
        self.utilde[index] = normalized_entropy_of(&p) as f32;
        self.instances[index] = if self.taxonomy.is_thing(class) {
            majority_vote(self.votes.get(&index).map_or(&[], Vec::as_slice))
        } else {
            0
        };
    }

    /// Overwrites a cell with a certain label, as used for ground-truth maps.
    pub fn set_cell_label(&mut self, index: usize, class: ClassId, instance: u32) {
        let k = self.classes();
        assert!((class as usize) < k, "class {class} outside taxonomy");
        let acc = &mut self.accum[index * k..(index + 1) * k];
        match self.strategy {
            AggregationStrategy::LogOddsSoftmax => acc.iter_mut().enumerate().for_each(|(i, a)| {
                *a = if i == class as usize {
                    logit(1.0)
                } else {
                    logit(0.0)
                }
            }),
            _ => acc
                .iter_mut()
                .enumerate()
                .for_each(|(i, a)| *a = if i == class as usize { 1.0 } else { 0.0 }),
        }
        self.counts[index] = 1;
        if instance > 0 {
            self.votes.insert(index, vec![(instance, 1)]);
        } else {
            self.votes.remove(&index);
        }
        self.refresh(index);
    }

    /// Cells of each instance id, in ascending cell order.
    pub fn instance_cells(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in self.instances.iter().enumerate() {
            if id > 0 {
                out.entry(id).or_default().push(i);
            }
        }
        out
    }

    pub(crate) fn raw_parts(&self) -> (&[f64], &[u32], &BTreeMap<usize, Vec<(u32, u32)>>) {
        (&self.accum, &self.counts, &self.votes)
    }

    pub(crate) fn from_raw_parts(
        geometry: GridGeometry,
        taxonomy: Taxonomy,
        strategy: AggregationStrategy,
        accum: Vec<f64>,
        counts: Vec<u32>,
        votes: BTreeMap<usize, Vec<(u32, u32)>>,
        landmarks: LandmarkRegistry,
    ) -> Self {
        let mut map = Self::new(geometry, taxonomy, strategy);
        map.accum = accum;
        map.counts = counts;
        map.votes = votes;
        map.landmarks = landmarks;
        for i in 0..map.cell_count() {
            map.refresh(i);
        }
        map
    }
}

/// Most frequent instance id; the lowest id wins ties.
fn majority_vote(votes: &[(u32, u32)]) -> u32 {
    let mut best = (0u32, 0u32);
    for &(id, n) in votes {
        if n > best.1 {
            best = (id, n);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidential::{normalized_entropy, EvidenceVector};
    use crate::geometry::{Point3, TRAFFIC_SIGN};
    use proptest::prelude::*;

    fn map(strategy: AggregationStrategy) -> PanopticGridMap {
        let g = GridGeometry::new(0.1, Pose2D::default(), 10, 10).unwrap();
        PanopticGridMap::new(g, Taxonomy::default(), strategy)
    }

    fn point(x: f64, y: f64, alpha: &[f64], instance: u32) -> AugmentedPoint {
        let e = EvidenceVector::new(alpha.to_vec()).unwrap();
        let u = e.epistemic_uncertainty().unwrap();
        AugmentedPoint::new(Point3::new(x, y, 0.0), e, u, instance)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn single_point_evidential_cell() {
        let mut m = map(AggregationStrategy::Evidential);
        assert_eq!(m.integrate_points(&[point(0.05, 0.05, &[5.0, 1.0, 1.0, 1.0], 0)], Pose2D::default()), 1);
        assert!(close(&m.cell_evidence(0).unwrap(), &[1.25, 0.25, 0.25, 0.25], 1e-12));
        assert!(close(
            m.cell_probabilities(0).unwrap().as_slice(),
            &[0.625, 0.125, 0.125, 0.125],
            1e-12
        ));
        assert_eq!(m.label(0), 0);
        assert!((m.utilde(0) - 0.7743974703476993).abs() < 1e-6);
    }

    #[test]
    fn repeated_identical_points_keep_probabilities() {
        let mut m = map(AggregationStrategy::Evidential);
        let p = point(0.05, 0.05, &[5.0, 1.0, 1.0, 1.0], 0);
        m.integrate_points(&[p.clone()], Pose2D::default());
        let once = m.cell_probabilities(0).unwrap();
        m.integrate_points(&[p], Pose2D::default());
        assert!(close(m.cell_probabilities(0).unwrap().as_slice(), once.as_slice(), 1e-15));
        assert_eq!(m.count(0), 2);
    }

    #[test]
    fn out_of_bounds_points_leave_map_unchanged() {
        let mut m = map(AggregationStrategy::Evidential);
        let before = m.clone();
        assert_eq!(m.integrate_points(&[point(5.0, 5.0, &[5.0, 1.0, 1.0, 1.0], 0)], Pose2D::default()), 0);
        assert_eq!(m, before);
    }

    #[test]
    fn points_are_transformed_by_vehicle_pose() {
        let mut m = map(AggregationStrategy::Evidential);
        // Vehicle at (0.5, 0.2) facing +y: a point 0.3 m ahead lands at (0.5, 0.5).
        let pose = Pose2D::new(0.5, 0.2, std::f64::consts::FRAC_PI_2);
        m.integrate_points(&[point(0.3, 0.0, &[1.0, 4.0, 1.0, 1.0], 0)], pose);
        let idx = m.geometry().world_to_index(0.55, 0.55).unwrap();
        assert_eq!(m.label(idx), 1);
    }

    #[test]
    fn cell_probability_examples() {
        let m = map(AggregationStrategy::Evidential);
        let cell = MapCell {
            strategy: AggregationStrategy::Evidential,
            evidence_sum: &[10.0, 2.0, 2.0, 2.0],
            n: 7,
            votes: &[],
            class: 0,
            utilde: 0.0,
            instance: 0,
        };
        assert!(close(
            cell_probabilities(&cell).unwrap().as_slice(),
            &[0.625, 0.125, 0.125, 0.125],
            1e-12
        ));
        let lo = MapCell {
            strategy: AggregationStrategy::LogOddsSoftmax,
            evidence_sum: &[-3.0; 4],
            ..cell
        };
        assert!(close(cell_probabilities(&lo).unwrap().as_slice(), &[0.25; 4], 1e-12));
        assert!((cell_uncertainty(&lo).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(m.cell_probabilities(3), Err(MapError::EmptyCell(3))));
        assert!(m.cell_uncertainty(3).is_err());
    }

    #[test]
    fn latest_perception_overwrites() {
        let mut m = map(AggregationStrategy::LatestPerception);
        m.integrate_points(
            &[
                point(0.05, 0.05, &[9.0, 1.0, 1.0, 1.0], 0),
                point(0.05, 0.05, &[1.0, 1.0, 3.0, 1.0], 4),
            ],
            Pose2D::default(),
        );
        assert_eq!(m.label(0), TRAFFIC_SIGN);
        assert_eq!(m.instance(0), 4);
        m.integrate_points(&[point(0.05, 0.05, &[1.0, 2.0, 1.0, 1.0], 0)], Pose2D::default());
        assert_eq!(m.label(0), 1);
        assert_eq!(m.instance(0), 0);
        assert!(m.cell(0).votes.is_empty());
    }

    #[test]
    fn log_odds_sharpens_with_repetition() {
        let mut m = map(AggregationStrategy::LogOddsSoftmax);
        let p = point(0.05, 0.05, &[3.0, 1.0, 1.0, 1.0], 0);
        m.integrate_points(&[p.clone()], Pose2D::default());
        let u1 = m.utilde(0);
        for _ in 0..9 {
            m.integrate_points(&[p.clone()], Pose2D::default());
        }
        assert!(m.utilde(0) < u1);
        assert_eq!(m.label(0), 0);
    }

    #[test]
    fn instance_majority_vote_breaks_ties_low() {
        let mut m = map(AggregationStrategy::Evidential);
        let sign = [1.0, 1.0, 8.0, 1.0];
        m.integrate_points(
            &[
                point(0.05, 0.05, &sign, 9),
                point(0.05, 0.05, &sign, 4),
                point(0.05, 0.05, &sign, 9),
                point(0.05, 0.05, &sign, 4),
            ],
            Pose2D::default(),
        );
        assert_eq!(m.instance(0), 4);
        m.integrate_points(&[point(0.05, 0.05, &sign, 9)], Pose2D::default());
        assert_eq!(m.instance(0), 9);
        assert_eq!(m.instance_cells().get(&9), Some(&vec![0]));
    }

    #[test]
    fn stuff_cells_carry_no_instance() {
        let mut m = map(AggregationStrategy::Evidential);
        m.integrate_points(
            &[
                point(0.05, 0.05, &[1.0, 1.0, 3.0, 1.0], 2),
                point(0.05, 0.05, &[20.0, 1.0, 1.0, 1.0], 0),
            ],
            Pose2D::default(),
        );
        assert_eq!(m.label(0), 0);
        assert_eq!(m.instance(0), 0);
    }

    #[test]
    fn strategy_parsing() {
        for s in AggregationStrategy::ALL {
            assert_eq!(s.name().parse::<AggregationStrategy>().unwrap(), s);
        }
        assert_eq!("latest".parse::<AggregationStrategy>().unwrap(), AggregationStrategy::LatestPerception);
        assert!("median".parse::<AggregationStrategy>().is_err());
    }

    fn alphas() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(1.0..100.0f64, 4), 1..30)
    }

    proptest! {
        #[test]
        fn weighted_probability_form_equals_average_evidence(set in alphas()) {
            // (1/N) * sum_i (1/u_i) * p_i  ==  sum_i alpha_i / (N K)
            let k = 4.0;
            let n = set.len() as f64;
            let mut weighted = [0.0; 4];
            let mut average = [0.0; 4];
            for a in &set {
                let s: f64 = a.iter().sum();
                let u = k / s;
                for c in 0..4 {
                    weighted[c] += (1.0 / u) * (a[c] / s) / n;
                    average[c] += a[c] / (n * k);
                }
            }
            prop_assert!(close(&weighted, &average, 1e-12));
            let mut m = map(AggregationStrategy::Evidential);
            let pts: Vec<_> = set.iter().map(|a| point(0.05, 0.05, a, 0)).collect();
            m.integrate_points(&pts, Pose2D::default());
            prop_assert!(close(&m.cell_evidence(0).unwrap(), &average, 1e-9));
        }

        #[test]
        fn evidential_is_order_and_batch_invariant(set in alphas(), seed in any::<u64>()) {
            let pts: Vec<_> = set.iter().enumerate()
                .map(|(i, a)| point(0.05 + 0.1 * (i % 3) as f64, 0.05, a, 0)).collect();
            let mut batch = map(AggregationStrategy::Evidential);
            batch.integrate_points(&pts, Pose2D::default());
            let mut shuffled = pts.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            let mut single = map(AggregationStrategy::Evidential);
            for p in &shuffled {
                single.integrate_points(std::slice::from_ref(p), Pose2D::default());
            }
            for c in 0..3 {
                prop_assert!(close(batch.cell(c).evidence_sum, single.cell(c).evidence_sum, 1e-9));
                prop_assert_eq!(batch.label(c), single.label(c));
                prop_assert_eq!(batch.count(c), single.count(c));
            }
        }

        #[test]
        fn latest_depends_only_on_last_point(set in alphas()) {
            let mut m = map(AggregationStrategy::LatestPerception);
            let pts: Vec<_> = set.iter().map(|a| point(0.05, 0.05, a, 0)).collect();
            m.integrate_points(&pts, Pose2D::default());
            let mut only_last = map(AggregationStrategy::LatestPerception);
            only_last.integrate_points(&pts[pts.len() - 1..], Pose2D::default());
            prop_assert_eq!(m.cell(0).evidence_sum, only_last.cell(0).evidence_sum);
            prop_assert_eq!(m.label(0), only_last.label(0));
        }

        #[test]
        fn known_cells_are_normalised(set in alphas(), strat in 0usize..3) {
            let strategy = AggregationStrategy::ALL[strat];
            let mut m = map(strategy);
            let pts: Vec<_> = set.iter().enumerate()
                .map(|(i, a)| point(0.05 + 0.1 * (i % 5) as f64, 0.05 + 0.1 * (i % 2) as f64, a, 0)).collect();
            m.integrate_points(&pts, Pose2D::default());
            for i in m.known_cells().collect::<Vec<_>>() {
                let p = m.cell_probabilities(i).unwrap();
                prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let u = m.cell_uncertainty(i).unwrap();
                prop_assert!((0.0..=1.0).contains(&u));
                prop_assert!((u - normalized_entropy(&p)).abs() < 1e-12);
            }
        }
    }
}

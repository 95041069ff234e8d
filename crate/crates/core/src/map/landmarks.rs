//! Landmark instances: per-frame range filtering and temporal association.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{ClassId, Point3};
use crate::ingest::AugmentedPoint;

/// Points farther than `MAD_FACTOR * MAD` from the median range are outliers.
pub const MAD_FACTOR: f64 = 1.5;
/// Instances with fewer surviving points are discarded.
pub const MIN_INSTANCE_POINTS: usize = 10;
/// Detections associate with landmarks of the same class within this distance (m, inclusive).
pub const ASSOCIATION_RADIUS: f64 = 0.5;

/// Median of a non-empty slice (mean of the two middle values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Indices of ranges within `MAD_FACTOR * MAD` of the median, in input order.
pub fn mad_inliers(ranges: &[f64]) -> Vec<usize> {
    if ranges.is_empty() {
        return Vec::new();
    }
    let med = median(ranges);
    let dev: Vec<f64> = ranges.iter().map(|r| (r - med).abs()).collect();
    let mad = median(&dev);
    let bound = MAD_FACTOR * mad;
    dev.iter()
        .enumerate()
        .filter(|(_, d)| **d <= bound)
        .map(|(i, _)| i)
        .collect()
}

/// Range-filters the points of one instance. `None` when too few points survive.
pub fn filter_instance_points(points: &[AugmentedPoint]) -> Option<Vec<AugmentedPoint>> {
    let ranges: Vec<f64> = points.iter().map(|p| p.range).collect();
    let kept = mad_inliers(&ranges);
    (kept.len() >= MIN_INSTANCE_POINTS).then(|| kept.into_iter().map(|i| points[i].clone()).collect())
}

/// One filtered instance of a frame, in map coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub class: ClassId,
    pub center: Point3,
    pub point_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub class: ClassId,
    /// Point-weighted mean of all associated detections.
    pub center: Point3,
    pub point_count: u64,
}

/// Greedy one-to-one association: candidate pairs of equal class within
/// [`ASSOCIATION_RADIUS`] are taken in order of increasing distance. Returns the matched
/// landmark id per detection, `None` for detections that start a new landmark.
pub fn associate_instances(detections: &[Detection], registry: &LandmarkRegistry) -> Vec<Option<u32>> {
    let mut pairs = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for lm in registry.iter() {
            if lm.class != d.class {
                continue;
            }
            let dist = d.center.distance(&lm.center);
            if dist <= ASSOCIATION_RADIUS {
                pairs.push((dist, i, lm.id));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; detections.len()];
    let mut taken = std::collections::BTreeSet::new();
    for (_, i, id) in pairs {
        if out[i].is_none() && !taken.contains(&id) {
            out[i] = Some(id);
            taken.insert(id);
        }
    }
    out
}

/// Global landmark set with monotonically increasing ids starting at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkRegistry {
    landmarks: BTreeMap<u32, Landmark>,
    next_id: u32,
}

impl Default for LandmarkRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl LandmarkRegistry {
    pub fn new() -> Self {
        Self {
            landmarks: BTreeMap::new(),
            next_id: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.get(&id)
    }

    /// Landmarks in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Landmark> {
        self.landmarks.values()
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    /// Inserts a landmark verbatim, e.g. from a file or a ground-truth source.
    pub fn insert(&mut self, landmark: Landmark) {
        self.next_id = self.next_id.max(landmark.id + 1);
        self.landmarks.insert(landmark.id, landmark);
    }

    pub(crate) fn set_next_id(&mut self, next: u32) {
        self.next_id = self.next_id.max(next);
    }

    /// Associates detections and folds them into the registry. Returns the global id of
    /// every detection.
    pub fn associate(&mut self, detections: &[Detection]) -> Vec<u32> {
        let matches = associate_instances(detections, self);
        detections
            .iter()
            .zip(matches)
            .map(|(d, m)| match m {
                Some(id) => {
                    let lm = self.landmarks.get_mut(&id).expect("matched id exists");
                    let total = lm.point_count + d.point_count;
                    let (w0, w1) = (lm.point_count as f64 / total as f64, d.point_count as f64 / total as f64);
                    lm.center = Point3::new(
                        w0 * lm.center.x + w1 * d.center.x,
                        w0 * lm.center.y + w1 * d.center.y,
                        w0 * lm.center.z + w1 * d.center.z,
                    );
                    lm.point_count = total;
                    id
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.landmarks.insert(
                        id,
                        Landmark {
                            id,
                            class: d.class,
                            center: d.center,
                            point_count: d.point_count,
                        },
                    );
                    id
                }
            })
            .collect()
    }
}

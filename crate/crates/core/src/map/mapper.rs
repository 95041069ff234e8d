//! Per-frame map update: instance filtering, association and cell integration.

use std::collections::BTreeMap;

use super::landmarks::{mad_inliers, Detection, MIN_INSTANCE_POINTS};
use super::PanopticGridMap;
use crate::geometry::{Point3, Pose2D};
use crate::ingest::AugmentedPoint;

/// Bookkeeping of one [`PanopticGridMap::integrate_frame`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameReport {
    pub points_in: usize,
    pub points_integrated: usize,
    pub instances_kept: usize,
    pub instances_rejected: usize,
    pub outliers_dropped: usize,
    pub new_landmarks: usize,
}

impl PanopticGridMap {
    /// Integrates one frame of augmented points observed from `vehicle_pose`.
    ///
    /// Points of every thing instance are range-filtered; filtered-out points are dropped.
    /// Surviving instances are associated with the landmark registry and their points carry
    /// the global landmark id. Points of instances with too few survivors keep their
    /// semantics but lose their instance id.
    pub fn integrate_frame(&mut self, mut points: Vec<AugmentedPoint>, vehicle_pose: Pose2D) -> FrameReport {
        let mut report = FrameReport {
            points_in: points.len(),
            ..FrameReport::default()
        };
        let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter_mut().enumerate() {
            if p.instance == 0 {
                continue;
            }
            if self.taxonomy().is_thing(p.class()) {
                groups.entry(p.instance).or_default().push(i);
            } else {
                p.instance = 0;
            }
        }

        let mut drop = vec![false; points.len()];
        let mut detections = Vec::new();
        let mut members = Vec::new();
        for idx in groups.into_values() {
            let ranges: Vec<f64> = idx.iter().map(|&i| points[i].range).collect();
            let inliers = mad_inliers(&ranges);
            let mut keep = vec![false; idx.len()];
            inliers.iter().for_each(|&j| keep[j] = true);
            for (j, &i) in idx.iter().enumerate() {
                if !keep[j] {
                    drop[i] = true;
                }
            }
            report.outliers_dropped += idx.len() - inliers.len();
            let kept: Vec<usize> = inliers.iter().map(|&j| idx[j]).collect();
            if kept.len() < MIN_INSTANCE_POINTS {
                report.instances_rejected += 1;
                kept.iter().for_each(|&i| points[i].instance = 0);
                continue;
            }
            let n = kept.len() as f64;
            let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
            for &i in &kept {
                let p = points[i].position;
                let (wx, wy) = vehicle_pose.transform_point(p.x, p.y);
                sx += wx;
                sy += wy;
                sz += p.z;
            }
            // Majority class of the surviving points.
            let mut votes: BTreeMap<u8, usize> = BTreeMap::new();
            kept.iter().for_each(|&i| *votes.entry(points[i].class()).or_default() += 1);
            let class = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(c, _)| *c)
                .expect("non-empty instance");
            detections.push(Detection {
                class,
                center: Point3::new(sx / n, sy / n, sz / n),
                point_count: kept.len() as u64,
            });
            members.push(kept);
        }

        let before = self.landmarks().next_id();
        let ids = self.landmarks_mut().associate(&detections);
        report.new_landmarks = (self.landmarks().next_id() - before) as usize;
        report.instances_kept = ids.len();
        for (id, kept) in ids.into_iter().zip(members) {
            kept.into_iter().for_each(|i| points[i].instance = id);
        }

        let survivors: Vec<AugmentedPoint> = points
            .into_iter()
            .zip(drop)
            .filter(|(_, d)| !d)
            .map(|(p, _)| p)
            .collect();
        report.points_integrated = self.integrate_points(&survivors, vehicle_pose);
        report
    }
}

//! Particle scoring: semantic and instance IoU of a local map placed at a candidate pose.

use std::collections::{BTreeMap, BTreeSet};

use super::{LocalMap, WeightConfig, WeightMetric};
use crate::geometry::{ClassId, Pose2D};
use crate::map::PanopticGridMap;

/// Lower bound on the local cell uncertainty in the `1 / u~` intersection weight.
pub const UNCERTAINTY_FLOOR: f64 = 0.01;

/// A global map prepared for repeated scoring.
#[derive(Clone, Debug)]
pub struct ReferenceMap {
    map: PanopticGridMap,
    instance_cells: BTreeMap<u32, Vec<usize>>,
    probabilities: Vec<f32>,
}

impl ReferenceMap {
    pub fn new(map: PanopticGridMap) -> Self {
        let k = map.classes();
        let mut probabilities = vec![0f32; map.cell_count() * k];
        for i in map.known_cells().collect::<Vec<_>>() {
            let p = map.cell_probabilities(i).expect("known cell");
            for (dst, src) in probabilities[i * k..(i + 1) * k].iter_mut().zip(p.as_slice()) {
                *dst = *src as f32;
            }
        }
        Self {
            instance_cells: map.instance_cells(),
            map,
            probabilities,
        }
    }

    pub fn map(&self) -> &PanopticGridMap {
        &self.map
    }

    pub fn into_map(self) -> PanopticGridMap {
        self.map
    }

    fn probabilities(&self, index: usize) -> &[f32] {
        let k = self.map.classes();
        &self.probabilities[index * k..(index + 1) * k]
    }
}

/// Per-class intersection and union over the overlap of two maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticScore {
    pub intersection: Vec<f64>,
    pub union: Vec<f64>,
    /// `None` for classes absent from the overlap.
    pub iou: Vec<Option<f64>>,
    /// Mean over classes with non-zero union; 0 when there is none.
    pub miou: f64,
}

/// Pairs `(position in local.cells(), global index)` of local cells that land on known global
/// cells when the vehicle is at `pose`.
fn overlap(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D) -> Vec<(usize, usize)> {
    let g = reference.map.geometry();
    let (s, c) = pose.yaw.sin_cos();
    local
        .cells()
        .iter()
        .enumerate()
        .filter_map(|(i, cell)| {
            let x = pose.x + c * cell.x - s * cell.y;
            let y = pose.y + s * cell.x + c * cell.y;
            let gi = g.world_to_index(x, y)?;
            reference.map.is_known(gi).then_some((i, gi))
        })
        .collect()
}

fn semantic_from_pairs(
    local: &LocalMap,
    reference: &ReferenceMap,
    pairs: &[(usize, usize)],
    use_uncertainty: bool,
) -> SemanticScore {
    let k = reference.map.classes();
    let mut inter = vec![0.0; k];
    let mut union = vec![0.0; k];
    for &(li, gi) in pairs {
        let lc = &local.cells()[li];
        let gc = reference.map.label(gi) as usize;
        let lcls = lc.class as usize;
        let w = if use_uncertainty {
            1.0 / lc.utilde.max(UNCERTAINTY_FLOOR)
        } else {
            1.0
        };
        // The same weight enters intersection and union, so every IoU stays within [0, 1].
        if lcls == gc {
            inter[gc] += w;
            union[gc] += w;
        } else {
            union[gc] += w;
            union[lcls] += w;
        }
    }
    let iou: Vec<Option<f64>> = inter
        .iter()
        .zip(&union)
        .map(|(i, u)| (*u > 0.0).then(|| i / u))
        .collect();
    let present: Vec<f64> = iou.iter().flatten().copied().collect();
    let miou = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    SemanticScore {
        intersection: inter,
        union,
        iou,
        miou,
    }
}

fn instance_from_pairs(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D, pairs: &[(usize, usize)]) -> f64 {
    let map = &reference.map;
    let mut by_instance: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for &(li, gi) in pairs {
        let id = local.cells()[li].instance;
        if id > 0 {
            by_instance.entry(id).or_default().push((li, gi));
        }
    }
    if by_instance.is_empty() {
        return 0.0;
    }
    let inv = pose.inverse();
    let g = map.geometry();
    let mut ious = Vec::new();
    for members in by_instance.values() {
        let class: ClassId = local.cells()[members[0].0].class;
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for &(_, gi) in members {
            let gid = map.instance(gi);
            if gid > 0 && map.label(gi) == class {
                *votes.entry(gid).or_default() += 1;
            }
        }
        let Some((&matched, _)) = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
            continue;
        };
        let mut hit = BTreeSet::new();
        for &(_, gi) in members {
            if map.instance(gi) == matched && map.label(gi) == class {
                hit.insert(gi);
            }
        }
        let intersection = members
            .iter()
            .filter(|(_, gi)| hit.contains(gi))
            .count();
        let missed = reference
            .instance_cells
            .get(&matched)
            .map_or(0, |cells| {
                cells
                    .iter()
                    .filter(|gi| !hit.contains(gi))
                    .filter(|&&gi| {
                        let (x, y) = g.cell_center(g.cell_of_index(gi));
                        let (lx, ly) = inv.transform_point(x, y);
                        local.lookup(lx, ly).is_some()
                    })
                    .count()
            });
        ious.push(intersection as f64 / (members.len() + missed) as f64);
    }
    if ious.is_empty() {
        0.0
    } else {
        ious.iter().sum::<f64>() / ious.len() as f64
    }
}

/// Semantic IoU per class of the local map placed at `pose`. Only cells known in both maps
/// count. With `use_uncertainty` every overlap cell counts `1 / max(u~, 0.01)` of its local
/// cell instead of 1, in the intersection and in the union alike; a uniform `u~` therefore
/// leaves the IoU unchanged while mixed uncertainties let confident cells dominate.
pub fn semantic_iou(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D, cfg: &WeightConfig) -> SemanticScore {
    let pairs = overlap(local, reference, pose);
    semantic_from_pairs(local, reference, &pairs, cfg.use_uncertainty)
}

/// Mean IoU over local instances matched to the modal same-class global instance beneath
/// them; 0 when no instance matches.
pub fn instance_iou(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D) -> f64 {
    let pairs = overlap(local, reference, pose);
    instance_from_pairs(local, reference, pose, &pairs)
}

fn accuracy_from_pairs(local: &LocalMap, reference: &ReferenceMap, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let agree = pairs
        .iter()
        .filter(|(li, gi)| local.cells()[*li].class == reference.map.label(*gi))
        .count();
    agree as f64 / pairs.len() as f64
}

fn cosine_from_pairs(local: &LocalMap, reference: &ReferenceMap, pairs: &[(usize, usize)]) -> f64 {
    let (mut dot, mut nl, mut ng) = (0.0f64, 0.0f64, 0.0f64);
    for &(li, gi) in pairs {
        for (a, b) in local.probabilities(li).iter().zip(reference.probabilities(gi)) {
            let (a, b) = (f64::from(*a), f64::from(*b));
            dot += a * b;
            nl += a * a;
            ng += b * b;
        }
    }
    if nl == 0.0 || ng == 0.0 {
        0.0
    } else {
        dot / (nl.sqrt() * ng.sqrt())
    }
}

/// Fraction of overlap cells whose classes agree.
pub fn accuracy_score(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D) -> f64 {
    accuracy_from_pairs(local, reference, &overlap(local, reference, pose))
}

/// Cosine similarity of the concatenated class-probability vectors of the overlap cells.
pub fn cosine_score(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D) -> f64 {
    cosine_from_pairs(local, reference, &overlap(local, reference, pose))
}

/// Natural log of [`particle_weight`], finite for every finite score.
///
/// `primary` is the semantic mIoU for the mIoU metric and the accuracy or cosine score
/// otherwise; `instance` is the instance mIoU.
pub fn log_particle_weight(primary: f64, instance: f64, cfg: &WeightConfig) -> f64 {
    if cfg.is_exponential() {
        let r = cfg.regularizer;
        if cfg.use_instances {
            let (a, b) = (r * primary, r * instance);
            let m = a.max(b);
            m + ((a - m).exp() + (b - m).exp()).ln()
        } else {
            r * primary
        }
    } else {
        let raw = if cfg.metric == WeightMetric::Miou && cfg.use_instances {
            primary + instance
        } else {
            primary
        };
        raw.ln()
    }
}

/// `exp(r * mIoU_K) + exp(r * mIoU_L)` with instances, `exp(r * mIoU_K)` without, or the raw
/// score in baseline mode.
pub fn particle_weight(primary: f64, instance: f64, cfg: &WeightConfig) -> f64 {
    log_particle_weight(primary, instance, cfg).exp()
}

/// Scores of one candidate pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseScore {
    /// Semantic mIoU, accuracy or cosine depending on the configured metric.
    pub primary: f64,
    pub instance: f64,
    pub log_weight: f64,
}

/// Computes exactly the scores the configuration needs, sharing one overlap pass.
pub fn score_pose(local: &LocalMap, reference: &ReferenceMap, pose: Pose2D, cfg: &WeightConfig) -> PoseScore {
    let pairs = overlap(local, reference, pose);
    let primary = match cfg.metric {
        WeightMetric::Miou => semantic_from_pairs(local, reference, &pairs, cfg.use_uncertainty).miou,
        WeightMetric::Accuracy => accuracy_from_pairs(local, reference, &pairs),
        WeightMetric::Cosine => cosine_from_pairs(local, reference, &pairs),
    };
    let instance = if cfg.use_instances && cfg.metric == WeightMetric::Miou {
        instance_from_pairs(local, reference, pose, &pairs)
    } else {
        0.0
    };
    PoseScore {
        primary,
        instance,
        log_weight: log_particle_weight(primary, instance, cfg),
    }
}

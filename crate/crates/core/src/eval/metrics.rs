//! Map, calibration and trajectory metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{normalize_angle, ClassId, Pose2D, UNKNOWN};
use crate::map::PanopticGridMap;

/// Number of equal-width confidence bins of the calibration error.
pub const UECE_BINS: usize = 10;
/// Largest BEV distance at which a predicted landmark can match a true one (m).
pub const LANDMARK_MATCH_RADIUS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapScore {
    /// Per-class IoU keyed by class name; `None` when the class is absent from both maps.
    pub iou: BTreeMap<String, Option<f64>>,
    pub miou: f64,
    /// Per thing class; `None` when neither map has a segment of that class.
    pub panoptic: BTreeMap<String, Option<PanopticQuality>>,
    pub pq: f64,
    pub uece: f64,
    pub accuracy: f64,
    /// Cells known in both maps.
    pub evaluated_cells: usize,
    pub landmarks: LandmarkScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkScore {
    pub truth: usize,
    pub predicted: usize,
    pub matched: usize,
    /// Predicted landmarks within the match radius of an already matched true landmark of
    /// the same class.
    pub duplicates: usize,
    /// BEV center errors of matched pairs (m); 0 when nothing matched.
    pub center_rmse: f64,
    pub center_mae: f64,
    /// `(predicted id, truth id, BEV error)` per match, in truth id order.
    pub pairs: Vec<(u32, u32, f64)>,
}

/// Cells whose label is known in both maps.
fn shared_cells<'a>(pred: &'a PanopticGridMap, truth: &'a PanopticGridMap) -> impl Iterator<Item = usize> + 'a {
    (0..pred.cell_count()).filter(move |&i| pred.label(i) != UNKNOWN && truth.label(i) != UNKNOWN)
}

fn check_geometry(pred: &PanopticGridMap, truth: &PanopticGridMap) -> Result<(), EvalError> {
    if pred.geometry() != truth.geometry() || pred.classes() != truth.classes() {
        return Err(EvalError::GeometryMismatch);
    }
    Ok(())
}

/// Per-class `(intersection, union)` counts over cells known in both maps.
pub fn class_counts(pred: &PanopticGridMap, truth: &PanopticGridMap) -> Vec<(usize, usize)> {
    let k = pred.classes();
    let mut counts = vec![(0, 0); k];
    for i in shared_cells(pred, truth) {
        let (p, t) = (pred.label(i) as usize, truth.label(i) as usize);
        if p == t {
            counts[p].0 += 1;
            counts[p].1 += 1;
        } else {
            counts[p].1 += 1;
            counts[t].1 += 1;
        }
    }
    counts
}

/// Segments `(class, instance) -> cells` restricted to `domain`.
fn segments(map: &PanopticGridMap, domain: &[usize]) -> BTreeMap<(ClassId, u32), Vec<usize>> {
    let mut out: BTreeMap<(ClassId, u32), Vec<usize>> = BTreeMap::new();
    for &i in domain {
        let l = map.instance(i);
        if l > 0 {
            out.entry((map.label(i), l)).or_default().push(i);
        }
    }
    out
}

fn sorted_iou(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Panoptic quality of each thing class, matching segments at IoU > 0.5.
pub fn panoptic_quality(pred: &PanopticGridMap, truth: &PanopticGridMap) -> BTreeMap<ClassId, Option<PanopticQuality>> {
    let domain: Vec<usize> = shared_cells(pred, truth).collect();
    let ps = segments(pred, &domain);
    let ts = segments(truth, &domain);
    let tax = pred.taxonomy();
    let mut out = BTreeMap::new();
    for class in tax.thing_classes() {
        let p: Vec<&Vec<usize>> = ps.iter().filter(|(k, _)| k.0 == class).map(|(_, v)| v).collect();
        let t: Vec<&Vec<usize>> = ts.iter().filter(|(k, _)| k.0 == class).map(|(_, v)| v).collect();
        if p.is_empty() && t.is_empty() {
            out.insert(class, None);
            continue;
        }
        // IoU > 0.5 makes matches unique, so any scan order yields the same set.
        let mut used = vec![false; t.len()];
        let mut iou_sum = 0.0;
        let mut tp = 0;
        for seg in &p {
            for (j, tseg) in t.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let iou = sorted_iou(seg, tseg);
                if iou > 0.5 {
                    used[j] = true;
                    tp += 1;
                    iou_sum += iou;
                    break;
                }
            }
        }
        let fp = p.len() - tp;
        let fn_ = t.len() - tp;
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        let sq = if tp > 0 { iou_sum / tp as f64 } else { 0.0 };
        let rq = tp as f64 / denom;
        out.insert(
            class,
            Some(PanopticQuality {
                pq: sq * rq,
                sq,
                rq,
                tp,
                fp,
                fn_,
            }),
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean confidence `1 - u~`; `None` for an empty bin.
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub support: usize,
}

/// Reliability curve over cells known in both maps, binned by `1 - u~` of `pred`.
pub fn calibration_curve(pred: &PanopticGridMap, truth: &PanopticGridMap, bins: usize) -> Result<Vec<CalibrationBin>, EvalError> {
    if bins < 2 {
        return Err(EvalError::Config(format!("calibration needs at least 2 bins, got {bins}")));
    }
    check_geometry(pred, truth)?;
    let samples: Vec<(f64, bool)> = shared_cells(pred, truth)
        .map(|i| (1.0 - pred.utilde(i), pred.label(i) == truth.label(i)))
        .collect();
    Ok(calibration_bins(&samples, bins))
}

/// Bins `(confidence, correct)` samples into `bins` equal-width bins over [0, 1].
pub fn calibration_bins(samples: &[(f64, bool)], bins: usize) -> Vec<CalibrationBin> {
    let mut conf = vec![0.0; bins];
    let mut acc = vec![0.0; bins];
    let mut n = vec![0usize; bins];
    for &(c, ok) in samples {
        let b = ((c * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        conf[b] += c;
        acc[b] += ok as u8 as f64;
        n[b] += 1;
    }
    (0..bins)
        .map(|b| CalibrationBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            confidence: (n[b] > 0).then(|| conf[b] / n[b] as f64),
            accuracy: (n[b] > 0).then(|| acc[b] / n[b] as f64),
            support: n[b],
        })
        .collect()
}

/// Support-weighted mean |accuracy - confidence| of a reliability curve.
pub fn expected_calibration_error(curve: &[CalibrationBin]) -> f64 {
    let total: usize = curve.iter().map(|b| b.support).sum();
    if total == 0 {
        return 0.0;
    }
    curve
        .iter()
        .filter_map(|b| Some(b.support as f64 * (b.accuracy? - b.confidence?).abs()))
        .sum::<f64>()
        / total as f64
}

/// Greedy nearest-first matching of predicted to true landmarks of the same class within
/// [`LANDMARK_MATCH_RADIUS`], on BEV distance.
pub fn match_landmarks(pred: &PanopticGridMap, truth: &PanopticGridMap) -> LandmarkScore {
    let p: Vec<_> = pred.landmarks().iter().collect();
    let t: Vec<_> = truth.landmarks().iter().collect();
    let bev = |a: &crate::map::Landmark, b: &crate::map::Landmark| (a.center.x - b.center.x).hypot(a.center.y - b.center.y);
    let mut cand = Vec::new();
    for (i, a) in p.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            let d = bev(a, b);
            if a.class == b.class && d <= LANDMARK_MATCH_RADIUS {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let (mut pu, mut tu) = (vec![false; p.len()], vec![false; t.len()]);
    let mut pairs = Vec::new();
    for &(d, i, j) in &cand {
        if !pu[i] && !tu[j] {
            pu[i] = true;
            tu[j] = true;
            pairs.push((p[i].id, t[j].id, d));
        }
    }
    let duplicates = (0..p.len())
        .filter(|&i| !pu[i] && cand.iter().any(|&(_, ci, cj)| ci == i && tu[cj]))
        .count();
    pairs.sort_by_key(|&(_, tid, _)| tid);
    let m = pairs.len();
    let (rmse, mae) = if m == 0 {
        (0.0, 0.0)
    } else {
        let sq = pairs.iter().map(|p| p.2 * p.2).sum::<f64>() / m as f64;
        (sq.sqrt(), pairs.iter().map(|p| p.2).sum::<f64>() / m as f64)
    };
    LandmarkScore {
        truth: t.len(),
        predicted: p.len(),
        matched: m,
        duplicates,
        center_rmse: rmse,
        center_mae: mae,
        pairs,
    }
}

/// Scores a predicted map against ground truth over the cells known in both.
pub fn score_map(pred: &PanopticGridMap, truth: &PanopticGridMap) -> Result<MapScore, EvalError> {
    check_geometry(pred, truth)?;
    let tax = pred.taxonomy();
    let counts = class_counts(pred, truth);
    let mut iou = BTreeMap::new();
    let mut present = Vec::new();
    for (k, &(i, u)) in counts.iter().enumerate() {
        let v = (u > 0).then(|| i as f64 / u as f64);
        if let Some(v) = v {
            present.push(v);
        }
        iou.insert(tax.name(k as ClassId).to_string(), v);
    }
    let miou = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let pq_map = panoptic_quality(pred, truth);
    let defined: Vec<f64> = pq_map.values().flatten().map(|q| q.pq).collect();
    let pq = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let panoptic = pq_map
        .into_iter()
        .map(|(c, q)| (tax.name(c).to_string(), q))
        .collect();
    let curve = calibration_curve(pred, truth, UECE_BINS)?;
    let evaluated: usize = curve.iter().map(|b| b.support).sum();
    let correct: usize = counts.iter().map(|c| c.0).sum();
    Ok(MapScore {
        iou,
        miou,
        panoptic,
        pq,
        uece: expected_calibration_error(&curve),
        accuracy: if evaluated > 0 { correct as f64 / evaluated as f64 } else { 0.0 },
        evaluated_cells: evaluated,
        landmarks: match_landmarks(pred, truth),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub lateral: f64,
    pub longitudinal: f64,
    pub translation: f64,
    pub yaw_deg: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
}

impl ErrorStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return Self::default();
        }
        Self {
            mae: values.clone().map(f64::abs).sum::<f64>() / n as f64,
            rmse: (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocScore {
    pub translation: ErrorStats,
    pub lateral: ErrorStats,
    pub longitudinal: ErrorStats,
    pub yaw_deg: ErrorStats,
    pub steps: Vec<StepError>,
}

/// Per-step pose errors in the heading frame of the true pose.
pub fn score_trajectory(estimated: &[Pose2D], truth: &[Pose2D]) -> Result<LocScore, EvalError> {
    if estimated.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            estimated: estimated.len(),
            truth: truth.len(),
        });
    }
    let steps: Vec<StepError> = estimated
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let (dx, dy) = (e.x - t.x, e.y - t.y);
            let (s, c) = t.yaw.sin_cos();
            StepError {
                longitudinal: c * dx + s * dy,
                lateral: -s * dx + c * dy,
                translation: dx.hypot(dy),
                yaw_deg: normalize_angle(e.yaw - t.yaw).to_degrees(),
            }
        })
        .collect();
    Ok(LocScore {
        translation: ErrorStats::of(steps.iter().map(|s| s.translation)),
        lateral: ErrorStats::of(steps.iter().map(|s| s.lateral)),
        longitudinal: ErrorStats::of(steps.iter().map(|s| s.longitudinal)),
        yaw_deg: ErrorStats::of(steps.iter().map(|s| s.yaw_deg)),
        steps,
    })
}

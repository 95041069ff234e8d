//! Experiment harness: map building over a scenario and seeded localization sweeps.

use serde::{Deserialize, Serialize};

use super::metrics::{score_map, score_trajectory, LocScore, MapScore};
use super::EvalError;
use crate::geometry::Pose2D;
use crate::localization::{FilterConfig, LocalMap, Odometry, ParticleFilter, ReferenceMap};
use crate::map::{AggregationStrategy, FrameReport, PanopticGridMap};
use crate::par::{map_slice, Execution};
use crate::sim::{hash_keys, NoiseSpec, Scenario};

/// One global map to build: an aggregation strategy fed by one perception noise model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapJob {
    pub label: String,
    pub strategy: AggregationStrategy,
    pub noise: NoiseSpec,
}

impl MapJob {
    pub fn new(label: impl Into<String>, strategy: AggregationStrategy, noise: NoiseSpec) -> Self {
        Self {
            label: label.into(),
            strategy,
            noise,
        }
    }
}

/// Totals of the per-frame landmark pipeline of one map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTotals {
    pub points_in: usize,
    pub points_integrated: usize,
    pub instances_kept: usize,
    pub instances_rejected: usize,
    pub outliers_dropped: usize,
}

impl PipelineTotals {
    pub fn add(&mut self, r: &FrameReport) {
        self.points_in += r.points_in;
        self.points_integrated += r.points_integrated;
        self.instances_kept += r.instances_kept;
        self.instances_rejected += r.instances_rejected;
        self.outliers_dropped += r.outliers_dropped;
    }
}

/// Builds every job's map in a single pass over the scenario frames. Jobs sharing a noise
/// model share its rendered perception.
pub fn build_maps(
    sc: &Scenario,
    jobs: &[MapJob],
    perception_seed: u64,
    exec: Execution,
) -> Vec<(PanopticGridMap, PipelineTotals)> {
    let mut noises: Vec<&NoiseSpec> = Vec::new();
    let source: Vec<usize> = jobs
        .iter()
        .map(|j| match noises.iter().position(|n| **n == j.noise) {
            Some(i) => i,
            None => {
                noises.push(&j.noise);
                noises.len() - 1
            }
        })
        .collect();
    let mut maps: Vec<(PanopticGridMap, PipelineTotals)> = jobs
        .iter()
        .map(|j| {
            (
                PanopticGridMap::new(sc.map_geometry(), sc.taxonomy.clone(), j.strategy),
                PipelineTotals::default(),
            )
        })
        .collect();
    for f in 0..sc.frames() {
        let points = sc.augmented_multi(f, &noises, perception_seed, exec);
        let pose = sc.poses()[f];
        for ((map, totals), &s) in maps.iter_mut().zip(&source) {
            let report = map.integrate_frame(points[s].clone(), pose);
            totals.add(&report);
        }
    }
    maps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub label: String,
    pub strategy: AggregationStrategy,
    pub score: MapScore,
    pub pipeline: PipelineTotals,
}

/// Builds and scores every job against the scenario's ground-truth map.
pub fn mapping_experiment(sc: &Scenario, jobs: &[MapJob], perception_seed: u64, exec: Execution) -> Result<(Vec<MapRow>, Vec<PanopticGridMap>), EvalError> {
    let truth = sc.truth_map();
    let built = build_maps(sc, jobs, perception_seed, exec);
    let mut rows = Vec::with_capacity(jobs.len());
    let mut maps = Vec::with_capacity(jobs.len());
    for (job, (map, pipeline)) in jobs.iter().zip(built) {
        rows.push(MapRow {
            label: job.label.clone(),
            strategy: job.strategy,
            score: score_map(&map, &truth)?,
            pipeline,
        });
        maps.push(map);
    }
    Ok((rows, maps))
}

/// Single-frame local maps of every scenario frame.
pub fn local_maps(sc: &Scenario, noise: &NoiseSpec, perception_seed: u64, exec: Execution) -> Vec<LocalMap> {
    (0..sc.frames())
        .map(|f| {
            let points = sc
                .augmented_multi(f, &[noise], perception_seed, exec)
                .pop()
                .expect("one noise model");
            LocalMap::build(points, &sc.taxonomy, sc.spec.max_range, sc.spec.map_resolution)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocRun {
    pub seed: u64,
    pub score: LocScore,
    pub estimates: Vec<Pose2D>,
    /// Weighted position spread of the particle set after each update (m).
    pub spread: Vec<f64>,
    pub degenerate_updates: usize,
    pub resamples: usize,
}

/// Filter output along one sequence of local maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub estimates: Vec<Pose2D>,
    /// Weighted position spread of the particle set after each update (m).
    pub spread: Vec<f64>,
    pub degenerate_updates: usize,
    pub resamples: usize,
}

/// Runs the particle filter from `initial` over `locals`, predicting with `odometry[f - 1]`
/// before update `f`. `seed` drives the filter's randomness.
pub fn track(
    initial: Pose2D,
    odometry: &[Odometry],
    dt: f64,
    locals: &[LocalMap],
    reference: &ReferenceMap,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<Track, EvalError> {
    if locals.is_empty() || odometry.len() + 1 < locals.len() {
        return Err(EvalError::Config(format!(
            "{} local maps need {} odometry steps, got {}",
            locals.len(),
            locals.len().saturating_sub(1),
            odometry.len()
        )));
    }
    let mut filter = ParticleFilter::new(initial, *cfg, hash_keys(seed, &[-4]))?;
    let mut out = Track {
        estimates: Vec::with_capacity(locals.len()),
        spread: Vec::with_capacity(locals.len()),
        degenerate_updates: 0,
        resamples: 0,
    };
    for (f, local) in locals.iter().enumerate() {
        if f > 0 {
            filter.predict(odometry[f - 1], dt);
        }
        let u = filter.update(local, reference);
        out.degenerate_updates += u.degenerate as usize;
        out.resamples += u.resampled as usize;
        out.estimates.push(filter.estimate()?);
        out.spread.push(filter.spread());
    }
    Ok(out)
}

/// Runs the particle filter along the scenario. `seed` drives the odometry noise, the
/// initial particle draw and the filter's own randomness; the motion model assumes the
/// same relative noise `odometry_factor` that corrupts the odometry.
pub fn run_localization(
    sc: &Scenario,
    reference: &ReferenceMap,
    locals: &[LocalMap],
    cfg: &FilterConfig,
    odometry_factor: f64,
    seed: u64,
) -> Result<LocRun, EvalError> {
    if locals.len() != sc.frames() {
        return Err(EvalError::Config(format!(
            "{} local maps for {} frames",
            locals.len(),
            sc.frames()
        )));
    }
    let mut cfg = *cfg;
    cfg.motion_noise.factor = odometry_factor;
    let odometry = sc.noisy_odometry(odometry_factor, seed);
    let t = track(sc.poses()[0], &odometry, sc.dt(), locals, reference, &cfg, seed)?;
    Ok(LocRun {
        seed,
        score: score_trajectory(&t.estimates, sc.poses())?,
        estimates: t.estimates,
        spread: t.spread,
        degenerate_updates: t.degenerate_updates,
        resamples: t.resamples,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Mean and sample standard deviation across seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LocAggregate {
    pub translation_mae: MeanStd,
    pub translation_rmse: MeanStd,
    pub lateral_mae: MeanStd,
    pub longitudinal_mae: MeanStd,
    pub yaw_mae_deg: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocRow {
    pub label: String,
    /// Filter configuration of the runs; absent for externally produced trajectories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FilterConfig>,
    pub runs: Vec<LocRun>,
    pub aggregate: LocAggregate,
}

impl LocRow {
    /// Aggregates per-seed runs into means and sample standard deviations.
    pub fn new(label: String, config: Option<FilterConfig>, runs: Vec<LocRun>) -> Self {
        let col = |f: fn(&LocScore) -> f64| MeanStd::of(&runs.iter().map(|r| f(&r.score)).collect::<Vec<_>>());
        let aggregate = LocAggregate {
            translation_mae: col(|s| s.translation.mae),
            translation_rmse: col(|s| s.translation.rmse),
            lateral_mae: col(|s| s.lateral.mae),
            longitudinal_mae: col(|s| s.longitudinal.mae),
            yaw_mae_deg: col(|s| s.yaw_deg.mae),
        };
        Self {
            label,
            config,
            runs,
            aggregate,
        }
    }
}

/// Runs every `(config, seed)` pair; pairs are spread over workers and each run owns its
/// filter, so results do not depend on `exec`.
pub fn localization_sweep(
    sc: &Scenario,
    reference: &ReferenceMap,
    locals: &[LocalMap],
    configs: &[(String, FilterConfig)],
    seeds: &[u64],
    odometry_factor: f64,
    exec: Execution,
) -> Result<Vec<LocRow>, EvalError> {
    let pairs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let runs = map_slice(exec, &pairs, |&(c, seed)| {
        let mut cfg = configs[c].1;
        if exec.is_parallel() {
            cfg.execution = Execution::Sequential;
        }
        run_localization(sc, reference, locals, &cfg, odometry_factor, seed)
    });
    let mut runs = runs.into_iter();
    let mut rows = Vec::with_capacity(configs.len());
    for (label, cfg) in configs {
        let per_seed = runs.by_ref().take(seeds.len()).collect::<Result<Vec<_>, _>>()?;
        rows.push(LocRow::new(label.clone(), Some(*cfg), per_seed));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{RoadLayout, ScenarioSpec, TrajectorySpec};

    fn tiny() -> Scenario {
        Scenario::new(ScenarioSpec {
            road: RoadLayout {
                length: 80.0,
                landmarks: 4,
                ..RoadLayout::default()
            },
            trajectory: TrajectorySpec {
                frames: 12,
                ..TrajectorySpec::default()
            },
            ..ScenarioSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn mapping_rows_follow_jobs() {
        let sc = tiny();
        let jobs: Vec<MapJob> = AggregationStrategy::ALL
            .iter()
            .map(|&s| MapJob::new(s.name(), s, NoiseSpec::default()))
            .collect();
        let (rows, maps) = mapping_experiment(&sc, &jobs, 1, Execution::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(maps.len(), 3);
        // Same perception stream: every strategy knows the same cells.
        assert!(rows.iter().all(|r| r.score.evaluated_cells == rows[0].score.evaluated_cells));
        assert!(rows[0].score.evaluated_cells > 1000);
    }

    #[test]
    fn localization_sweep_shapes_and_determinism() {
        let sc = tiny();
        let (_, mut maps) = mapping_experiment(
            &sc,
            &[MapJob::new("map", AggregationStrategy::Evidential, NoiseSpec::default())],
            1,
            Execution::default(),
        )
        .unwrap();
        let reference = ReferenceMap::new(maps.pop().unwrap());
        let locals = local_maps(&sc, &NoiseSpec::default(), 2, Execution::default());
        let configs = vec![
            ("a".to_string(), FilterConfig::default()),
            (
                "b".to_string(),
                FilterConfig {
                    particles: 20,
                    ..FilterConfig::default()
                },
            ),
        ];
        let seq = localization_sweep(&sc, &reference, &locals, &configs, &[1, 2], 0.25, Execution::Sequential).unwrap();
        let par = localization_sweep(&sc, &reference, &locals, &configs, &[1, 2], 0.25, Execution::Parallel).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq[0].runs.len(), 2);
        assert_eq!(seq[0].runs[1].seed, 2);
        for (a, b) in seq.iter().zip(&par) {
            for (ra, rb) in a.runs.iter().zip(&b.runs) {
                assert_eq!(ra.estimates, rb.estimates);
            }
        }
        assert!(seq[0].aggregate.translation_mae.mean < 1.5);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[]), MeanStd::default());
    }
}

//! Ablation sweeps over a generated scenario. Every sweep writes one JSON report; when a
//! sweep fails, the rows finished so far are still written with `complete = false`.

use panoloc_core::eval::{
    calibration_curve, local_maps, localization_sweep, mapping_experiment, write_calibration_csv, write_errors_csv,
    LocRow, MapJob, MapRow, Report, UECE_BINS,
};
use panoloc_core::localization::{FilterConfig, ReferenceMap, WeightConfig, WeightMetric};
use panoloc_core::sim::{hash_keys, Miscalibration, NoiseSpec, Scenario};
use panoloc_core::{AggregationStrategy, Execution, PanopticGridMap};

use crate::commands::{emit, load_config, write_with};
use crate::config::RunConfig;
use crate::{AblateArgs, AblationKind, Failure, ResultExt};

/// Key deriving the perception seed of the localization frames from the base seed, so the
/// local maps never replay the noise the reference map was built from.
const LOCAL_PERCEPTION_KEY: i64 = 1;

impl AblationKind {
    fn name(self) -> &'static str {
        match self {
            AblationKind::Strategies => "strategies",
            AblationKind::Regularizer => "regularizer",
            AblationKind::Uncertainty => "uncertainty",
            AblationKind::Metrics => "metrics",
            AblationKind::Components => "components",
        }
    }
}

pub(crate) fn run(a: AblateArgs, exec: Execution) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, exec)?;
    if let Some(n) = a.seeds {
        if n == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--seeds must be at least 1")));
        }
        cfg.experiment.seeds = n;
    }
    if let Some(n) = a.frames {
        cfg.scenario.trajectory.frames = n;
    }
    let sc = Scenario::new(cfg.scenario.clone()).config_err()?;
    let mut report = Report::new(format!("ablate {}", a.kind.name()), Some(sc.spec.seed), Some(a.seed));
    let mut curves = Vec::new();
    let result = match a.kind {
        AblationKind::Strategies => strategies(&sc, &cfg, a.seed, exec, &mut report, &mut curves),
        kind => localization(kind, &sc, &cfg, a.seed, exec, &mut report, &mut curves),
    };
    if let Err(Failure::Config(e) | Failure::Runtime(e)) = &result {
        report.fail(format!("{e:#}"));
    }
    emit(&report, Some(&a.out))?;
    if let Some(p) = &a.errors_csv {
        write_with(p, |w| write_errors_csv(w, &report.localization, sc.dt()))?;
    }
    if let Some(p) = &a.calibration_csv {
        write_with(p, |w| write_calibration_csv(w, &curves))?;
    }
    result
}

fn calibration(map: &PanopticGridMap, truth: &PanopticGridMap, label: &str) -> Result<(String, Vec<panoloc_core::eval::CalibrationBin>), Failure> {
    Ok((label.to_string(), calibration_curve(map, truth, UECE_BINS).runtime_err()?))
}

fn print_map_rows(rows: &[MapRow]) {
    println!("{:<36} {:>7} {:>7} {:>7} {:>10}", "map", "mIoU", "uECE", "PQ", "landmarks");
    for r in rows {
        let s = &r.score;
        println!(
            "{:<36} {:>7.4} {:>7.4} {:>7.4} {:>6}/{:<3}",
            r.label, s.miou, s.uece, s.pq, s.landmarks.matched, s.landmarks.truth
        );
    }
}

fn print_loc_rows(rows: &[LocRow]) {
    println!(
        "{:<24} {:>16} {:>9} {:>9} {:>9}",
        "weights", "trans MAE (m)", "lat", "long", "yaw (deg)"
    );
    for r in rows {
        let g = &r.aggregate;
        println!(
            "{:<24} {:>8.3} ± {:<5.3} {:>9.3} {:>9.3} {:>9.3}",
            r.label,
            g.translation_mae.mean,
            g.translation_mae.std,
            g.lateral_mae.mean,
            g.longitudinal_mae.mean,
            g.yaw_mae_deg.mean
        );
    }
}

/// Every aggregation strategy under calibrated, overconfident and noisy perception.
fn strategies(
    sc: &Scenario,
    cfg: &RunConfig,
    seed: u64,
    exec: Execution,
    report: &mut Report,
    curves: &mut Vec<(String, Vec<panoloc_core::eval::CalibrationBin>)>,
) -> Result<(), Failure> {
    let base = &cfg.scenario.noise;
    let perception = [
        (
            "calibrated",
            NoiseSpec {
                mode: Miscalibration::Calibrated,
                ..base.clone()
            },
        ),
        (
            "overconfident",
            NoiseSpec {
                mode: Miscalibration::Overconfident,
                ..base.clone()
            },
        ),
        (
            "noisy",
            NoiseSpec {
                flip_probability: cfg.experiment.noisy_flip_probability,
                ..base.clone()
            },
        ),
    ];
    let jobs: Vec<MapJob> = perception
        .iter()
        .flat_map(|(name, noise)| {
            AggregationStrategy::ALL
                .iter()
                .map(move |s| MapJob::new(format!("{s}/{name}"), *s, noise.clone()))
        })
        .collect();
    let (rows, maps) = mapping_experiment(sc, &jobs, seed, exec).runtime_err()?;
    let truth = sc.truth_map();
    for (row, map) in rows.iter().zip(&maps) {
        curves.push(calibration(map, &truth, &row.label)?);
    }
    print_map_rows(&rows);
    report.mapping = rows;
    Ok(())
}

fn with_weights(base: &FilterConfig, weights: WeightConfig) -> FilterConfig {
    FilterConfig { weights, ..*base }
}

/// The labeled filter configurations of a localization ablation.
fn sweep_configs(kind: AblationKind, cfg: &RunConfig) -> Vec<(String, FilterConfig)> {
    let base = &cfg.filter;
    let r = base.weights.regularizer;
    let raw = WeightConfig::baseline();
    let exp = WeightConfig {
        regularizer: r,
        exponential: true,
        ..raw
    };
    let unc = WeightConfig {
        use_uncertainty: true,
        ..exp
    };
    let labeled = |items: Vec<(String, WeightConfig)>| {
        items
            .into_iter()
            .map(|(l, w)| (l, with_weights(base, w)))
            .collect::<Vec<_>>()
    };
    match kind {
        AblationKind::Regularizer => {
            let mut items = vec![("raw_miou".to_string(), raw)];
            for &r in &cfg.experiment.regularizers {
                items.push((format!("r={r}"), WeightConfig { regularizer: r, ..exp }));
            }
            labeled(items)
        }
        AblationKind::Uncertainty => labeled(vec![
            (format!("r={r}"), exp),
            (format!("r={r}+uncertainty"), unc),
        ]),
        AblationKind::Metrics => labeled(vec![
            ("miou".to_string(), raw),
            (
                "accuracy".to_string(),
                WeightConfig {
                    metric: WeightMetric::Accuracy,
                    ..raw
                },
            ),
            (
                "cosine".to_string(),
                WeightConfig {
                    metric: WeightMetric::Cosine,
                    ..raw
                },
            ),
        ]),
        AblationKind::Components => labeled(vec![
            ("baseline".to_string(), raw),
            ("+regularizer".to_string(), exp),
            ("+uncertainty".to_string(), unc),
            (
                "+instances".to_string(),
                WeightConfig {
                    use_instances: true,
                    ..unc
                },
            ),
        ]),
        AblationKind::Strategies => unreachable!("strategies is a mapping ablation"),
    }
}

/// Builds the reference map from the scenario noise, then localizes with local maps from
/// the localization noise for every configuration and seed.
fn localization(
    kind: AblationKind,
    sc: &Scenario,
    cfg: &RunConfig,
    seed: u64,
    exec: Execution,
    report: &mut Report,
    curves: &mut Vec<(String, Vec<panoloc_core::eval::CalibrationBin>)>,
) -> Result<(), Failure> {
    let job = MapJob::new("reference", cfg.experiment.map_strategy, cfg.scenario.noise.clone());
    let (rows, mut maps) = mapping_experiment(sc, &[job], seed, exec).runtime_err()?;
    let map = maps.pop().expect("one map job");
    curves.push(calibration(&map, &sc.truth_map(), "reference")?);
    print_map_rows(&rows);
    report.mapping = rows;

    let noise = cfg.localization_noise();
    let reference = ReferenceMap::new(map);
    let locals = local_maps(sc, noise, hash_keys(seed, &[LOCAL_PERCEPTION_KEY]), exec);
    let seeds: Vec<u64> = (0..cfg.experiment.seeds as u64).map(|i| seed.wrapping_add(i)).collect();
    let configs = sweep_configs(kind, cfg);
    let rows = localization_sweep(sc, &reference, &locals, &configs, &seeds, noise.odometry_factor, exec).runtime_err()?;
    print_loc_rows(&rows);
    report.localization = rows;
    Ok(())
}

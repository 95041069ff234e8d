//! Single-pipeline subcommands: simulate, map, localize, eval-map and eval-traj.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use panoloc_core::eval::{
    calibration_curve, score_map, score_trajectory, track, write_calibration_csv, write_errors_csv, LocRow, LocRun,
    MapRow, PipelineTotals, Report,
};
use panoloc_core::localization::{LocalMap, ReferenceMap};
use panoloc_core::map::{load_map, save_map, write_landmarks_csv, write_raster_csv};
use panoloc_core::sim::{read_trajectory_csv, Dataset, Scenario};
use panoloc_core::{Execution, PanopticGridMap};

use crate::config::RunConfig;
use crate::{
    ConfigArg, EvalMapArgs, EvalTrajArgs, Failure, LocalizeArgs, MapArgs, ResultExt, SimulateArgs, WeightOverrides,
};

/// Loads and validates the run configuration.
pub(crate) fn load_config(arg: &ConfigArg, exec: Execution) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(arg.config.as_deref()).config_err()?;
    if exec == Execution::Sequential {
        cfg.filter.execution = Execution::Sequential;
    }
    cfg.validate().config_err()?;
    Ok(cfg)
}

/// Creates `path` and its parent directories and hands a buffered writer to `body`.
pub(crate) fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let run = || -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    };
    run().with_context(|| format!("writing {}", path.display())).runtime_err()
}

/// Writes the report to `path`, or to stdout when there is none.
pub(crate) fn emit(report: &Report, path: Option<&Path>) -> Result<(), Failure> {
    let json = report.to_json();
    match path {
        Some(p) => write_with(p, |w| w.write_all(json.as_bytes())),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

pub(crate) fn simulate(a: SimulateArgs, exec: Execution) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, exec)?;
    if let Some(s) = a.scenario_seed {
        cfg.scenario.seed = s;
    }
    if let Some(n) = a.frames {
        cfg.scenario.trajectory.frames = n;
    }
    let sc = Scenario::new(cfg.scenario).config_err()?;
    sc.write_dataset(&a.out, a.seed, exec).runtime_err()?;
    println!(
        "wrote {} frames, {} landmarks to {}",
        sc.frames(),
        sc.world.landmarks.len(),
        a.out.display()
    );
    Ok(())
}

fn open_dataset(dir: &Path) -> Result<Dataset, Failure> {
    Dataset::open(dir)
        .with_context(|| format!("opening dataset {}", dir.display()))
        .runtime_err()
}

pub(crate) fn map(a: MapArgs, exec: Execution) -> Result<(), Failure> {
    let cfg = load_config(&a.config, exec)?;
    let strategy = a.strategy.unwrap_or(cfg.experiment.map_strategy);
    let ds = open_dataset(&a.data)?;
    let sc = &ds.scenario;
    let mut map = PanopticGridMap::new(sc.map_geometry(), sc.taxonomy.clone(), strategy);
    let mut totals = PipelineTotals::default();
    for (i, pose) in ds.poses.iter().enumerate() {
        let points = ds.points(i).runtime_err()?;
        totals.add(&map.integrate_frame(points, *pose));
    }
    save_map(&a.out, &map).runtime_err()?;
    println!(
        "{strategy}: {} known cells, {} landmarks",
        map.known_cells().count(),
        map.landmarks().len()
    );
    if let Some(p) = &a.landmarks_csv {
        write_with(p, |w| write_landmarks_csv(w, &map))?;
    }
    if let Some(p) = &a.raster_csv {
        write_with(p, |w| write_raster_csv(w, &map, a.raster.into()))?;
    }
    if let Some(p) = &a.report {
        let truth = ds.truth_map().runtime_err()?;
        let score = score_map(&map, &truth).runtime_err()?;
        println!("mIoU {:.4}  uECE {:.4}  PQ {:.4}", score.miou, score.uece, score.pq);
        let mut report = Report::new("map", Some(sc.spec.seed), None);
        report.mapping.push(MapRow {
            label: strategy.name().to_string(),
            strategy,
            score,
            pipeline: totals,
        });
        emit(&report, Some(p))?;
    }
    Ok(())
}

/// Applies command-line weight overrides on top of the configured filter.
fn apply_overrides(cfg: &mut RunConfig, o: &WeightOverrides) -> Result<(), Failure> {
    let f = &mut cfg.filter;
    if let Some(n) = o.particles {
        f.particles = n;
    }
    if let Some(r) = o.regularizer {
        f.weights.regularizer = r;
    }
    if let Some(m) = o.metric {
        f.weights.metric = m;
    }
    f.weights.exponential &= !o.raw;
    f.weights.use_uncertainty &= !o.no_uncertainty;
    f.weights.use_instances &= !o.no_instances;
    f.validate().config_err()
}

pub(crate) fn localize(a: LocalizeArgs, exec: Execution) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, exec)?;
    apply_overrides(&mut cfg, &a.weights)?;
    let ds = open_dataset(&a.data)?;
    let map = load_map(&a.map)
        .with_context(|| format!("loading map {}", a.map.display()))
        .runtime_err()?;
    let reference = ReferenceMap::new(map);
    let spec = &ds.scenario.spec;
    let locals = (0..ds.frames())
        .map(|i| {
            let points = ds.points(i)?;
            Ok(LocalMap::build(points, &ds.scenario.taxonomy, spec.max_range, spec.map_resolution))
        })
        .collect::<Result<Vec<_>, panoloc_core::sim::SimError>>()
        .runtime_err()?;
    let t = track(ds.poses[0], &ds.odometry, ds.dt(), &locals, &reference, &cfg.filter, a.seed).runtime_err()?;

    write_with(&a.out, |w| {
        writeln!(w, "t,x,y,yaw,spread")?;
        for ((time, p), s) in ds.timestamps.iter().zip(&t.estimates).zip(&t.spread) {
            writeln!(w, "{time},{},{},{},{s}", p.x, p.y, p.yaw)?;
        }
        Ok(())
    })?;

    let score = score_trajectory(&t.estimates, &ds.poses).runtime_err()?;
    println!(
        "translation MAE {:.3} m  RMSE {:.3} m  yaw MAE {:.3} deg  ({} degenerate updates)",
        score.translation.mae, score.translation.rmse, score.yaw_deg.mae, t.degenerate_updates
    );
    let row = LocRow::new(
        "localize".to_string(),
        Some(cfg.filter),
        vec![LocRun {
            seed: a.seed,
            score,
            estimates: t.estimates,
            spread: t.spread,
            degenerate_updates: t.degenerate_updates,
            resamples: t.resamples,
        }],
    );
    if let Some(p) = &a.errors_csv {
        write_with(p, |w| write_errors_csv(w, std::slice::from_ref(&row), ds.dt()))?;
    }
    if let Some(p) = &a.report {
        let mut report = Report::new("localize", Some(spec.seed), Some(a.seed));
        report.localization.push(row);
        emit(&report, Some(p))?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<PanopticGridMap, Failure> {
    load_map(path)
        .with_context(|| format!("loading map {}", path.display()))
        .runtime_err()
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub(crate) fn eval_map(a: EvalMapArgs) -> Result<(), Failure> {
    if a.bins < 2 {
        return Err(Failure::Config(anyhow::anyhow!("--bins must be at least 2")));
    }
    let (map, truth) = (load(&a.map)?, load(&a.truth)?);
    let score = score_map(&map, &truth).runtime_err()?;
    let label = stem(&a.map);
    if let Some(p) = &a.calibration_csv {
        let curve = calibration_curve(&map, &truth, a.bins).runtime_err()?;
        write_with(p, |w| write_calibration_csv(w, &[(label.clone(), curve)]))?;
    }
    let mut report = Report::new("eval-map", None, None);
    report.mapping.push(MapRow {
        label,
        strategy: map.strategy(),
        score,
        pipeline: PipelineTotals::default(),
    });
    emit(&report, a.out.as_deref())
}

pub(crate) fn eval_traj(a: EvalTrajArgs) -> Result<(), Failure> {
    let read = |p: &Path| {
        read_trajectory_csv(p)
            .with_context(|| format!("reading {}", p.display()))
            .runtime_err()
    };
    let ((times, estimates), (_, truth)) = (read(&a.estimate)?, read(&a.truth)?);
    let score = score_trajectory(&estimates, &truth).runtime_err()?;
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    let row = LocRow::new(
        stem(&a.estimate),
        None,
        vec![LocRun {
            seed: 0,
            score,
            estimates,
            spread: Vec::new(),
            degenerate_updates: 0,
            resamples: 0,
        }],
    );
    if let Some(p) = &a.errors_csv {
        write_with(p, |w| write_errors_csv(w, std::slice::from_ref(&row), dt))?;
    }
    let mut report = Report::new("eval-traj", None, None);
    report.localization.push(row);
    emit(&report, a.out.as_deref())
}

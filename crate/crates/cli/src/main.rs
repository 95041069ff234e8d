//! `panoloc`: simulate datasets, build panoptic maps, localize in them and run ablations.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for runtime failures.

mod ablate;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use panoloc_core::localization::WeightMetric;
use panoloc_core::map::RasterKind;
use panoloc_core::{AggregationStrategy, Execution};

#[derive(Debug, Parser)]
#[command(name = "panoloc", version, about = "Evidential panoptic mapping and particle-filter localization")]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Simulate(SimulateArgs),
    /// Aggregate a dataset into a global map.
    Map(MapArgs),
    /// Run the particle filter over a dataset inside a prebuilt map.
    Localize(LocalizeArgs),
    /// Score a map against a ground-truth map.
    EvalMap(EvalMapArgs),
    /// Score an estimated trajectory against the ground truth.
    EvalTraj(EvalTrajArgs),
    /// Run an ablation sweep over a generated scenario.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed of the perception, LiDAR and odometry noise.
    #[arg(long)]
    seed: u64,
    /// Overrides `scenario.seed` (world layout and trajectory).
    #[arg(long)]
    scenario_seed: Option<u64>,
    /// Overrides `scenario.trajectory.frames`.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    /// Output map file.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `experiment.map_strategy`.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<AggregationStrategy>,
    /// JSON report scoring the map against the dataset's ground truth.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    landmarks_csv: Option<PathBuf>,
    /// Per-cell raster of the map, one CSV line per grid row.
    #[arg(long)]
    raster_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Raster::Class)]
    raster: Raster,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Raster {
    Class,
    Uncertainty,
    Instance,
}

impl From<Raster> for RasterKind {
    fn from(r: Raster) -> Self {
        match r {
            Raster::Class => RasterKind::Class,
            Raster::Uncertainty => RasterKind::Uncertainty,
            Raster::Instance => RasterKind::Instance,
        }
    }
}

#[derive(Debug, Args)]
struct WeightOverrides {
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    regularizer: Option<f64>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<WeightMetric>,
    /// Use the raw score as the particle weight instead of the exponential form.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    no_uncertainty: bool,
    #[arg(long)]
    no_instances: bool,
}

#[derive(Debug, Args)]
struct LocalizeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: PathBuf,
    /// Reference map written by `map`.
    #[arg(long)]
    map: PathBuf,
    /// Seed of the particle filter.
    #[arg(long)]
    seed: u64,
    /// Estimated trajectory CSV: `t,x,y,yaw,spread`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    weights: WeightOverrides,
    /// JSON report scoring the estimate against the dataset trajectory.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    errors_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalMapArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    calibration_csv: Option<PathBuf>,
    #[arg(long, default_value_t = panoloc_core::eval::UECE_BINS)]
    bins: usize,
}

#[derive(Debug, Args)]
struct EvalTrajArgs {
    /// Pose CSV with at least the columns `t,x,y,yaw`.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    errors_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AblationKind {
    /// Aggregation strategies under calibrated, overconfident and noisy perception.
    Strategies,
    /// Raw mIoU against exponential weights over the configured regularizers.
    Regularizer,
    /// Exponential weights with and without uncertainty weighting.
    Uncertainty,
    /// mIoU against accuracy and cosine similarity as the particle weight.
    Metrics,
    /// Baseline, then adding the regularizer, uncertainty and instances in turn.
    Components,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(value_enum)]
    kind: AblationKind,
    #[command(flatten)]
    config: ConfigArg,
    /// Base seed: perception of the map uses it, localization runs use `seed + i`.
    #[arg(long)]
    seed: u64,
    /// JSON report.
    #[arg(long)]
    out: PathBuf,
    /// Overrides `experiment.seeds`.
    #[arg(long)]
    seeds: Option<usize>,
    /// Overrides `scenario.trajectory.frames`.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    errors_csv: Option<PathBuf>,
    #[arg(long)]
    calibration_csv: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<AggregationStrategy, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<WeightMetric, String> {
    s.parse()
}

/// Failure class, mapped onto the exit code.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

trait ResultExt<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn runtime_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a, exec),
        Command::Map(a) => commands::map(a, exec),
        Command::Localize(a) => commands::localize(a, exec),
        Command::EvalMap(a) => commands::eval_map(a),
        Command::EvalTraj(a) => commands::eval_traj(a),
        Command::Ablate(a) => ablate::run(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

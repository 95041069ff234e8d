//! Machine-readable experiment reports and plot-data CSVs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::experiment::{LocRow, MapRow};
use super::metrics::CalibrationBin;

/// Bumped whenever a field of [`Report`] changes meaning or disappears.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// Producing command, e.g. `map` or `ablate regularizer`.
    pub command: String,
    /// World and trajectory seed of the scenario, when one was involved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_seed: Option<u64>,
    /// Seed of the stochastic parts of the command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// False when the command failed and only the rows finished before the failure are present.
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mapping: Vec<MapRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub localization: Vec<LocRow>,
}

impl Report {
    pub fn new(command: impl Into<String>, scenario_seed: Option<u64>, seed: Option<u64>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.into(),
            scenario_seed,
            seed,
            complete: true,
            error: None,
            mapping: Vec::new(),
            localization: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Marks the report as partial.
    pub fn fail(&mut self, error: impl ToString) {
        self.complete = false;
        self.error = Some(error.to_string());
    }
}

/// Error-versus-time series of every run: `label,seed,step,t,lateral,longitudinal,translation,yaw_deg,spread`.
/// The spread is blank for runs without particle statistics.
pub fn write_errors_csv<W: Write>(w: &mut W, rows: &[LocRow], dt: f64) -> std::io::Result<()> {
    writeln!(w, "label,seed,step,t,lateral,longitudinal,translation,yaw_deg,spread")?;
    for row in rows {
        for run in &row.runs {
            for (i, e) in run.score.steps.iter().enumerate() {
                let spread = run.spread.get(i).map(|s| s.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    row.label,
                    run.seed,
                    i,
                    i as f64 * dt,
                    e.lateral,
                    e.longitudinal,
                    e.translation,
                    e.yaw_deg,
                    spread
                )?;
            }
        }
    }
    Ok(())
}

/// Reliability curves: `label,lower,upper,confidence,accuracy,support`; empty bins leave the
/// confidence and accuracy fields blank.
pub fn write_calibration_csv<W: Write>(w: &mut W, curves: &[(String, Vec<CalibrationBin>)]) -> std::io::Result<()> {
    writeln!(w, "label,lower,upper,confidence,accuracy,support")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (label, curve) in curves {
        for b in curve {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                label,
                b.lower,
                b.upper,
                opt(b.confidence),
                opt(b.accuracy),
                b.support
            )?;
        }
    }
    Ok(())
}

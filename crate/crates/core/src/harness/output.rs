//! Output files.
//!
//! | file             | columns                                         |
//! |------------------|-------------------------------------------------|
//! | `mse.csv`        | `k,kind,mse_pos,mse_vel,mse_total,std`          |
//! | `alarms.csv`     | `k,sensor,residual,z,threshold,alarm,isolated`  |
//! | `trajectory.csv` | `k,x,y,z,vx,vy,vz`                              |
//! | `errors.csv`     | `k,kind,sensor,ex,ey,ez,evx,evy,evz`            |
//! | `positions.csv`  | `id,x,y,z`                                      |
//! | `summary.toml`   | run summary with the scenario echoed back       |
//!
//! Trajectory, error, position and alarm files describe the first trial.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ScenarioConfig;
use super::run::{McSummary, TrialTrace};
use crate::error::Result;
use crate::fdi::AlarmLog;
use crate::network::write_positions_csv;

pub fn write_mse_csv(summary: &McSummary, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "k,kind,mse_pos,mse_vel,mse_total,std")?;
    for c in &summary.curves {
        for k in 0..c.mse_total.len() {
            writeln!(out, "{k},{},{},{},{},{}", c.kind.name(), c.mse_pos[k], c.mse_vel[k], c.mse_total[k], c.std[k])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(trace: &TrialTrace, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "k,x,y,z,vx,vy,vz")?;
    for (k, x) in trace.truth.iter().enumerate() {
        let vals: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{k},{}", vals.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_errors_csv(traces: &[&TrialTrace], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "k,kind,sensor,ex,ey,ez,evx,evy,evz")?;
    for trace in traces {
        for (k, step) in trace.errors.iter().enumerate() {
            for (i, e) in step.iter().enumerate() {
                if let Some(e) = e {
                    let vals: Vec<String> = e.iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{k},{},{i},{}", trace.kind.name(), vals.join(","))?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct KindSummary {
    kind: String,
    final_mse_total: f64,
    steady_state_mse_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_achieved_rho: Option<f64>,
    isolated_sensors: usize,
    terminated_trials: usize,
}

/// Contents of `summary.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    trials: usize,
    steps: usize,
    runtime_seconds: f64,
    kinds: Vec<KindSummary>,
    scenario: ScenarioConfig,
}

impl RunReport {
    pub fn from_summary(summary: &McSummary) -> Self {
        let kinds = summary
            .curves
            .iter()
            .map(|c| {
                let tail = c.mse_total.len() - c.mse_total.len() / 5;
                let ss = &c.mse_total[tail.min(c.mse_total.len() - 1)..];
                KindSummary {
                    kind: c.kind.name().to_string(),
                    final_mse_total: *c.mse_total.last().expect("non-empty curve"),
                    steady_state_mse_total: ss.iter().sum::<f64>() / ss.len() as f64,
                    mean_achieved_rho: c.mean_rho,
                    isolated_sensors: c.isolated_sensors,
                    terminated_trials: c.terminated_trials,
                }
            })
            .collect();
        Self { trials: summary.trials, steps: summary.steps, runtime_seconds: summary.runtime_secs, kinds, scenario: summary.config.clone() }
    }
}

pub fn write_summary(summary: &McSummary, path: &Path) -> Result<()> {
    let text = toml::to_string(&RunReport::from_summary(summary)).map_err(|e| crate::Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Writes every output file into `dir` (created if missing) and returns
/// their paths.
pub fn write_outputs(summary: &McSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let first = &summary.curves[0].example;
    let files: Vec<PathBuf> = ["mse.csv", "alarms.csv", "trajectory.csv", "errors.csv", "positions.csv", "summary.toml"].iter().map(|f| dir.join(f)).collect();
    write_mse_csv(summary, &files[0])?;
    match &first.log {
        Some(log) => log.write_csv(&files[1])?,
        None => AlarmLog::new(0).write_csv(&files[1])?,
    }
    write_trajectory_csv(first, &files[2])?;
    let examples: Vec<&TrialTrace> = summary.curves.iter().map(|c| &c.example).collect();
    write_errors_csv(&examples, &files[3])?;
    write_positions_csv(&first.positions, &files[4])?;
    write_summary(summary, &files[5])?;
    Ok(files)
}

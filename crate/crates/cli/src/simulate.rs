//! ODE simulation runs: trajectory CSV plus a JSON summary.

use std::path::Path;

use gcp::dynamics::{integrate, GroundTruth, OdeConfig, Trajectory};
use gcp::NormalGammaParams;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::output::{write_file, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub initial: NormalGammaParams,
    pub ground_truth: GroundTruth,
    pub config: OdeConfig,
    pub rows: usize,
    pub final_time: f64,
    pub final_state: NormalGammaParams,
    pub final_sigma: f64,
    pub final_v_est: Option<f64>,
    pub final_v_corrected: f64,
    pub strip_entry_time: Option<f64>,
    pub left_strip_after_entry: bool,
    /// Largest relative deviation of the integral-curve constant from its
    /// initial value.
    pub integral_curve_drift: f64,
    pub converged: bool,
    pub rejected_steps: usize,
}

impl SimulationSummary {
    pub fn new(params0: NormalGammaParams, gt: GroundTruth, cfg: OdeConfig, traj: &Trajectory) -> Self {
        let d = traj.final_diagnostics();
        Self {
            initial: params0,
            ground_truth: gt,
            config: cfg,
            rows: traj.len(),
            final_time: *traj.times.last().expect("trajectory has an initial row"),
            final_state: *traj.final_state(),
            final_sigma: d.sigma,
            final_v_est: d.v_est,
            final_v_corrected: d.v_corrected,
            strip_entry_time: traj.strip_entry_time,
            left_strip_after_entry: traj.left_strip_after_entry(),
            integral_curve_drift: traj.integral_curve_drift(),
            converged: traj.converged,
            rejected_steps: traj.rejected_steps,
        }
    }
}

/// Integrates and writes `trajectories/trajectory.csv` and `summary.json`
/// under `out_dir`.
pub fn run_simulation(
    params0: NormalGammaParams,
    gt: GroundTruth,
    cfg: OdeConfig,
    out_dir: &Path,
) -> CliResult<SimulationSummary> {
    let traj = integrate(&params0, &gt, &cfg)?;
    let summary = SimulationSummary::new(params0, gt, cfg, &traj);
    write_file(&out_dir.join("trajectories").join("trajectory.csv"), &traj.to_csv_string())?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

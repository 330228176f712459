use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::Setup;
use crate::error::{Error, Result};
use crate::mdp::Trajectory;

/// One `(β, seed)` cell. Numeric fields are empty when the row failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub seed: u64,
    pub return_h1: Option<f64>,
    pub return_h2: Option<f64>,
    pub social_welfare: Option<f64>,
    /// Collegial objective at the fractional optimum.
    pub br_objective: Option<f64>,
    /// Same objective for the submitted trajectory.
    pub br_trajectory_objective: Option<f64>,
    /// Strategic human's own return from their submitted trajectory.
    pub br_return: Option<f64>,
    /// Strategic human's own return when honest.
    pub honest_return: Option<f64>,
    pub fit_residual: Option<f64>,
    pub error: Option<String>,
}

/// A trajectory behind a row, flattened for auditing the returns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub beta: f64,
    pub seed: u64,
    pub role: String,
    pub t: usize,
    pub state: usize,
    pub action: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trajectories: Vec<TrajectoryRow>,
}

impl SweepResult {
    /// `sweep.csv` and `sweep_trajectories.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("sweep_trajectories.csv"))?;
        for r in &self.trajectories {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Cell {
    row: SweepRow,
    trajectories: Vec<(String, Trajectory)>,
}

fn run_cell(setup: &Setup, strategic: usize, beta: f64, seed: u64) -> Result<Cell> {
    let mut demos = setup.honest_trajectories(seed)?;
    let others: Vec<Trajectory> = demos.iter().enumerate().filter(|(k, _)| *k != strategic).map(|(_, t)| t.clone()).collect();
    let sol = setup.best_response(strategic, &others, beta, seed)?;
    let honest_return = setup.returns(&demos[strategic])?[strategic];
    demos[strategic] = sol.trajectory.clone();
    let robot = setup.robot(&demos, seed)?;
    let returns = setup.returns(&robot.trajectory)?;
    let br_return = setup.returns(&sol.trajectory)?[strategic];

    let mut trajectories: Vec<(String, Trajectory)> =
        demos.into_iter().enumerate().map(|(k, t)| (format!("demo_{}", setup.scenario.humans[k].name.to_lowercase()), t)).collect();
    trajectories.push(("robot".into(), robot.trajectory));
    Ok(Cell {
        row: SweepRow {
            beta,
            seed,
            return_h1: Some(returns[0]),
            return_h2: Some(returns[1]),
            social_welfare: Some(returns[0] + returns[1]),
            br_objective: Some(sol.objective_value),
            br_trajectory_objective: Some(sol.trajectory_objective),
            br_return: Some(br_return),
            honest_return: Some(honest_return),
            fit_residual: Some(robot.fit.stationarity_residual),
            error: None,
        },
        trajectories,
    })
}

/// For every `β` and seed: the strategic human's collegial best response
/// against honest others, the robot's fit and rollout, and the returns.
/// Cells run in parallel; rows come back in grid order. A failing cell
/// becomes a row carrying the error and the sweep continues.
pub fn run_beta_sweep(setup: &Setup, betas: &[f64]) -> Result<SweepResult> {
    if setup.num_humans() != 2 {
        return Err(Error::Config("the sweep needs exactly two humans".into()));
    }
    let strategic = setup.strategic_index()?;
    let cells: Vec<(f64, u64)> = betas.iter().flat_map(|&b| setup.scenario.seeds.iter().map(move |&s| (b, s))).collect();
    let results: Vec<(f64, u64, Result<Cell>)> = cells.par_iter().map(|&(b, s)| (b, s, run_cell(setup, strategic, b, s))).collect();

    let mut out = SweepResult::default();
    for (beta, seed, res) in results {
        match res {
            Ok(cell) => {
                out.rows.push(cell.row);
                for (role, traj) in cell.trajectories {
                    for (t, st) in traj.steps().iter().enumerate() {
                        out.trajectories.push(TrajectoryRow { beta, seed, role: role.clone(), t, state: st.state, action: st.action });
                    }
                }
            }
            Err(e) => out.rows.push(SweepRow {
                beta,
                seed,
                return_h1: None,
                return_h2: None,
                social_welfare: None,
                br_objective: None,
                br_trajectory_objective: None,
                br_return: None,
                honest_return: None,
                fit_residual: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

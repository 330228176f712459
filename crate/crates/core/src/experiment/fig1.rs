use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::Setup;
use crate::error::{Error, Result};
use crate::gridworld::GridWorld;
use crate::mdp::{trajectory_features, Trajectory};

/// One row of the comparison: the strategic human honest or strategic.
#[derive(Clone, Debug, Serialize)]
pub struct Variant {
    pub demonstration: Trajectory,
    pub robot: Trajectory,
    pub fit_weights: Vec<f64>,
    pub fit_residual: f64,
    pub fit_converged: bool,
    /// Each human's return from the robot's trajectory.
    pub robot_returns: Vec<f64>,
    pub welfare: f64,
}

/// Delaying the honest human by `delay` steps changes the strategic best response.
#[derive(Clone, Debug, Serialize)]
pub struct Perturbation {
    pub human: usize,
    pub delay: usize,
    pub perturbed: Trajectory,
    pub best_response: Trajectory,
}

#[derive(Clone, Debug, Serialize)]
pub struct Fig1Report {
    pub beta: f64,
    pub seed: u64,
    pub strategic_human: usize,
    pub honest: Variant,
    pub strategic: Variant,
    pub br_objective: f64,
    pub br_trajectory_objective: f64,
    pub demonstration_differs: bool,
    pub robot_differs: bool,
    /// Strategic human's return from the robot, strategic minus honest.
    pub margin: f64,
    /// `None` when no delay of the other human changes the best response.
    pub perturbation: Option<Perturbation>,
}

/// The report plus eight row-major `height × width` grids.
#[derive(Clone, Debug)]
pub struct Fig1Artifacts {
    pub report: Fig1Report,
    pub grids: Vec<(String, Vec<Vec<f64>>)>,
    pub rendering: String,
}

impl Fig1Artifacts {
    /// `<name>.csv` per grid, `fig1.txt` and `fig1.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, grid) in &self.grids {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(format!("{name}.csv")))?;
            for row in grid {
                w.write_record(row.iter().map(|x| x.to_string()))?;
            }
            w.flush()?;
        }
        fs::write(dir.join("fig1.txt"), &self.rendering)?;
        fs::write(dir.join("fig1.json"), serde_json::to_string_pretty(&self.report)? + "\n")?;
        Ok(())
    }
}

fn visit_grid(g: &GridWorld, traj: &Trajectory) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![0.0; g.width]; g.height];
    for s in traj.states() {
        let (x, y) = g.cell(s);
        grid[y][x] += 1.0;
    }
    grid
}

fn reward_grid(g: &GridWorld, r: &[f64]) -> Vec<Vec<f64>> {
    (0..g.height).map(|y| (0..g.width).map(|x| r[g.state(x, y)]).collect()).collect()
}

fn render_numbers(grid: &[Vec<f64>]) -> String {
    grid.iter()
        .map(|row| row.iter().map(|x| format!("{x:6.2}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Delays `traj` by `delay` steps of action 0 and truncates to the horizon.
fn delayed(setup: &Setup, traj: &Trajectory, delay: usize) -> Result<Trajectory> {
    let start = traj.steps()[0].state;
    let mut actions = vec![0; delay];
    actions.extend(traj.steps().iter().map(|s| s.action).take(traj.len() - delay));
    Trajectory::from_actions(&setup.mdp, start, &actions)
}

/// Honest versus strategic demonstration by the scenario's strategic human at
/// `fig1_beta`, against the others' honest demonstrations.
pub fn run_fig1(setup: &Setup, seed: u64) -> Result<Fig1Artifacts> {
    let g = setup.scenario.env.gridworld().ok_or_else(|| Error::Config("fig1 needs a gridworld environment".into()))?;
    if setup.num_humans() != 2 {
        return Err(Error::Config("fig1 needs exactly two humans".into()));
    }
    let h = setup.strategic_index()?;
    let other = 1 - h;
    let beta = setup.scenario.fig1_beta;
    let honest_demos = setup.honest_trajectories(seed)?;
    let sol = setup.best_response(h, &honest_demos[other..=other], beta, seed)?;

    let variant = |demo: &Trajectory| -> Result<Variant> {
        let mut demos = honest_demos.clone();
        demos[h] = demo.clone();
        let robot = setup.robot(&demos, seed)?;
        let robot_returns = setup.returns(&robot.trajectory)?;
        Ok(Variant {
            demonstration: demo.clone(),
            welfare: robot_returns.iter().sum(),
            robot_returns,
            fit_weights: robot.fit.weights.clone(),
            fit_residual: robot.fit.stationarity_residual,
            fit_converged: robot.fit.converged,
            robot: robot.trajectory,
        })
    };
    let honest = variant(&honest_demos[h])?;
    let strategic = variant(&sol.trajectory)?;

    let mut perturbation = None;
    if setup.mdp.is_deterministic() {
        for delay in 1..setup.mdp.horizon() {
            let perturbed = delayed(setup, &honest_demos[other], delay)?;
            let alt = setup.best_response(h, std::slice::from_ref(&perturbed), beta, seed)?;
            if alt.trajectory != sol.trajectory {
                perturbation = Some(Perturbation { human: other, delay, perturbed, best_response: alt.trajectory });
                break;
            }
        }
    }

    let report = Fig1Report {
        beta,
        seed,
        strategic_human: h,
        demonstration_differs: honest.demonstration != strategic.demonstration,
        robot_differs: honest.robot != strategic.robot,
        margin: strategic.robot_returns[h] - honest.robot_returns[h],
        br_objective: sol.objective_value,
        br_trajectory_objective: sol.trajectory_objective,
        honest,
        strategic,
        perturbation,
    };

    let recovered = |w: &[f64]| -> Vec<f64> { (0..setup.mdp.num_states()).map(|s| crate::util::dot(w, setup.features.get(s))).collect() };
    let tag = |k: usize| setup.scenario.humans[k].name.to_lowercase();
    let grids = vec![
        (format!("reward_{}", tag(0)), reward_grid(g, &setup.rewards[0].state_rewards())),
        (format!("reward_{}", tag(1)), reward_grid(g, &setup.rewards[1].state_rewards())),
        (format!("{}_honest", tag(h)), visit_grid(g, &report.honest.demonstration)),
        (format!("{}_strategic", tag(h)), visit_grid(g, &report.strategic.demonstration)),
        ("recovered_honest".into(), reward_grid(g, &recovered(&report.honest.fit_weights))),
        ("recovered_strategic".into(), reward_grid(g, &recovered(&report.strategic.fit_weights))),
        ("robot_honest".into(), visit_grid(g, &report.honest.robot)),
        ("robot_strategic".into(), visit_grid(g, &report.strategic.robot)),
    ];

    let mut text = String::new();
    let name = &setup.scenario.humans[h].name;
    for (title, traj) in [
        (format!("{} (honest)", setup.scenario.humans[other].name), &honest_demos[other]),
        (format!("{name} honest"), &report.honest.demonstration),
        (format!("{name} strategic"), &report.strategic.demonstration),
        ("robot, honest demonstrations".to_string(), &report.honest.robot),
        ("robot, strategic demonstration".to_string(), &report.strategic.robot),
    ] {
        let f = trajectory_features(traj, &setup.features)?;
        writeln!(text, "{title}  features {f:?}\n{}\n", g.render_trajectory(traj)).unwrap();
    }
    for (title, grid) in &grids {
        if title.starts_with("reward") || title.starts_with("recovered") {
            writeln!(text, "{title}\n{}\n", render_numbers(grid)).unwrap();
        }
    }
    writeln!(
        text,
        "returns honest {:?}  strategic {:?}  margin {}",
        report.honest.robot_returns, report.strategic.robot_returns, report.margin
    )
    .unwrap();

    Ok(Fig1Artifacts { report, grids, rendering: text })
}

//! A strategic demonstrator's best response on the default gridworld as the
//! weight on their own return grows.

use mpag::best_response::{solve_best_response, SolverConfig};
use mpag::experiment::{Scenario, Setup};

fn main() -> mpag::Result<()> {
    let setup = Setup::new(Scenario::default_gridworld())?;
    let g = setup.scenario.env.gridworld().expect("gridworld scenario").clone();
    let h = setup.strategic_index()?;
    let honest = setup.honest_trajectories(0)?;
    let others: Vec<_> = honest.iter().enumerate().filter(|(k, _)| *k != h).map(|(_, t)| t.clone()).collect();
    println!("honest demonstration, own return {}:\n{}", setup.returns(&honest[h])?[h], g.render_trajectory(&honest[h]));

    for beta in [0.0, 10.0, 100.0] {
        let problem = setup.problem(h, &others, beta)?;
        let sol = solve_best_response(&problem, &SolverConfig::default())?;
        println!(
            "β = {beta}: objective {:.4} (trajectory {:.4}), {} Frank–Wolfe iterations, gap {:.1e}, own return {}",
            sol.objective_value,
            sol.trajectory_objective,
            sol.solver_stats.iterations,
            sol.solver_stats.duality_gap,
            setup.returns(&sol.trajectory)?[h],
        );
        println!("{}", g.render_trajectory(&sol.trajectory));
    }
    Ok(())
}

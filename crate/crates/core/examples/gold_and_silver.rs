//! The default gridworld end to end: honest versus strategic demonstrations,
//! the robot's response to each, and a short β sweep.

use mpag::experiment::{run_beta_sweep, run_fig1, Scenario, Setup};

fn main() -> mpag::Result<()> {
    let setup = Setup::new(Scenario::default_gridworld())?;
    let fig = run_fig1(&setup, 0)?;
    println!("{}", fig.rendering);

    let t = setup.thresholds(0)?;
    println!("threshold {:.3} (analytic {:.3}, surrogate crossover {:?})", t.threshold, t.analytic, t.surrogate_crossover);
    let sweep = run_beta_sweep(&setup, &[0.0, t.threshold / 2.0, t.threshold, 2.0 * t.threshold])?;
    for row in &sweep.rows {
        println!("β = {:>8.3}  welfare {:?}  H2 demonstrates return {:?} (honest {:?})", row.beta, row.social_welfare, row.br_return, row.honest_return);
    }
    Ok(())
}

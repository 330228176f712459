//! Recovers reward weights from three demonstrations by maximum-entropy feature
//! matching and lets the robot act on them.

use std::sync::Arc;

use mpag::gridworld::{FeatureChannel, GridWorld};
use mpag::inference::{fit_reward, robot_trajectory, DemonstrationSet, FitConfig};
use mpag::mdp::{optimal_policy, rollout, trajectory_features, RewardModel};

fn main() -> mpag::Result<()> {
    let g = GridWorld {
        width: 6,
        height: 6,
        slip: 0.0,
        horizon: 10,
        start: [0, 0],
        channels: vec![
            FeatureChannel { name: "east".into(), cells: vec![[5, 0], [5, 1]], value: 1.0 },
            FeatureChannel { name: "south".into(), cells: vec![[0, 5], [1, 5]], value: 1.0 },
        ],
    };
    let mdp = g.build_mdp()?;
    let fmap = Arc::new(g.build_features()?);

    let demos = [vec![1.0, 0.3], vec![0.2, 1.0], vec![0.1, 1.0]]
        .into_iter()
        .map(|w| {
            let r = RewardModel::new(w, Arc::clone(&fmap))?;
            rollout(&mdp, &optimal_policy(&mdp, &r)?.policy, 0)
        })
        .collect::<mpag::Result<Vec<_>>>()?;
    for d in &demos {
        println!("demo features {:?}", trajectory_features(d, &fmap)?);
    }

    let set = DemonstrationSet::new(&mdp, &fmap, demos)?;
    let fit = fit_reward(&set, &FitConfig::default())?;
    println!(
        "weights {:?} after {} iterations, residual {:.2e}, converged {}",
        fit.weights, fit.iterations, fit.stationarity_residual, fit.converged
    );
    let robot = robot_trajectory(&fit, &mdp, &fmap, 0)?;
    println!("robot:\n{}", g.render_trajectory(&robot));
    Ok(())
}

//! Plans in a small gridworld, then checks that the policy's occupancy
//! measure satisfies the flow constraints and reproduces the planned value.

use std::sync::Arc;

use mpag::gridworld::{FeatureChannel, GridWorld};
use mpag::mdp::{occupancy_of_policy, optimal_policy, rollout, trajectory_return, RewardModel};

fn main() -> mpag::Result<()> {
    let g = GridWorld {
        width: 5,
        height: 4,
        slip: 0.1,
        horizon: 8,
        start: [0, 0],
        channels: vec![FeatureChannel { name: "goal".into(), cells: vec![[4, 3]], value: 1.0 }],
    };
    let mdp = g.build_mdp()?;
    let reward = RewardModel::new(vec![1.0], Arc::new(g.build_features()?))?;

    let plan = optimal_policy(&mdp, &reward)?;
    let occ = occupancy_of_policy(&mdp, &plan.policy)?;
    let via_occupancy = occ.linear_state(|_, s| reward.state_reward(s));
    println!("planned value {:.6}, via occupancy {:.6}", plan.value, via_occupancy);
    println!("flow violation {:.2e}", occ.flow_violation(&mdp));

    let traj = rollout(&mdp, &plan.policy, 7)?;
    println!("one rollout (slip 0.1), return {}:\n{}", trajectory_return(&traj, &reward)?, g.render_trajectory(&traj));
    Ok(())
}

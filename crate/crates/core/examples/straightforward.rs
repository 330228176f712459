//! Threshold analysis and exhaustive straightforwardness checks on a
//! three-room world with three voters.

use mpag::collegiality::{compute_thresholds, FeatureMatching, Mechanism, OutcomeTable, TrajectoryPlurality, DEFAULT_BUDGET};
use mpag::experiment::{Scenario, Setup};

fn main() -> mpag::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/three_rooms.toml");
    let setup = Setup::new(Scenario::load(path.as_ref())?)?;
    let profile = setup.reward_profile()?;
    let report = compute_thresholds(&profile)?;
    println!("M = {}, γ = {}, thresholds {} (integer) and {} (real)", report.max_reward, report.gamma_gap, report.threshold_integer, report.threshold_real);

    let h = setup.strategic_index()?;
    let feature_matching = FeatureMatching { features: setup.features.clone(), fit: setup.scenario.fit };
    let mechanisms: [&dyn Mechanism; 2] = [&feature_matching, &TrajectoryPlurality];
    for mech in mechanisms {
        let table = OutcomeTable::build(&setup.mdp, mech, profile.len(), DEFAULT_BUDGET)?;
        for beta in [0.0, report.threshold(profile.integer_valued()) + 0.5] {
            let r = table.check(&profile, h, beta)?;
            println!("{:<22} β = {beta:<4} straightforward {:<5} dominant returns {:?}", mech.name(), r.straightforward, r.dominant_returns);
            if let Some(w) = r.witness {
                let t = table.trajectories();
                let show = |ks: &[usize]| ks.iter().map(|&k| format!("{:?}", t[k].states().collect::<Vec<_>>())).collect::<Vec<_>>().join(" ");
                println!("    others {} -> best {}", show(w.second_others.as_slice()), show(&w.second_best));
            }
        }
    }
    Ok(())
}

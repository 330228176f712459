use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mpag::best_response::{solve_best_response, BestResponseProblem, SolverConfig};
use mpag::collab::{expected_welfare, run_mechanism, StatelessProfile};
use mpag::mdp::{enumerate_trajectories, occupancy_of_policy, optimal_policy, FeatureMap, Mdp, Policy, RewardModel, Trajectory};
use mpag::plurality::{best_response_vote, is_manipulable, opponent_profiles, plurality_lottery, SimplexUtility};

fn simplex_point() -> impl Strategy<Value = SimplexUtility> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let c = 1.0 - lo - (hi - lo);
        SimplexUtility::new([lo, hi - lo, c.max(0.0)]).unwrap()
    })
}

fn permutation() -> impl Strategy<Value = [usize; 3]> {
    Just(vec![0usize, 1, 2]).prop_shuffle().prop_map(|p| [p[0], p[1], p[2]])
}

/// A deterministic MDP, a two-dimensional feature map and an action sequence per
/// other demonstrator.
#[derive(Debug, Clone)]
struct TinyWorld {
    next: Vec<Vec<usize>>,
    features: Vec<Vec<f64>>,
    weights: Vec<f64>,
    horizon: usize,
    other_actions: Vec<usize>,
}

impl TinyWorld {
    fn mdp(&self) -> Mdp {
        let mut initial = vec![0.0; self.next.len()];
        initial[0] = 1.0;
        Mdp::deterministic(&self.next, initial, self.horizon).unwrap()
    }

    fn problem<'a>(&self, mdp: &'a Mdp) -> BestResponseProblem<'a> {
        let fmap = Arc::new(FeatureMap::new(self.features.clone()).unwrap());
        let reward = RewardModel::new(self.weights.clone(), fmap).unwrap();
        let other = Trajectory::from_actions(mdp, 0, &self.other_actions).unwrap();
        BestResponseProblem::against(mdp, reward, &[other]).unwrap()
    }
}

fn tiny_world() -> impl Strategy<Value = TinyWorld> {
    (2usize..=4, 2usize..=3, 2usize..=4).prop_flat_map(|(s, a, t)| {
        (
            proptest::collection::vec(proptest::collection::vec(0..s, a), s),
            proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 2), s),
            proptest::collection::vec(-1.0..1.0f64, 2),
            proptest::collection::vec(0..a, t),
        )
            .prop_map(move |(next, features, weights, other_actions)| TinyWorld { next, features, weights, horizon: t, other_actions })
    })
}

/// A stochastic MDP with a random policy.
fn stochastic_world() -> impl Strategy<Value = (Mdp, Policy)> {
    (2usize..=5, 1usize..=3, 1usize..=5).prop_flat_map(|(s, a, t)| {
        (
            proptest::collection::vec(proptest::collection::vec(proptest::collection::vec(0.01..1.0f64, s), a), s),
            proptest::collection::vec(0.01..1.0f64, s),
            proptest::collection::vec(0.01..1.0f64, t * s * a),
        )
            .prop_map(move |(raw, init, pol)| {
                let normalize = |v: &[f64]| {
                    let z: f64 = v.iter().sum();
                    v.iter().map(|x| x / z).collect::<Vec<_>>()
                };
                let transition: Vec<Vec<Vec<f64>>> = raw.iter().map(|rows| rows.iter().map(|r| normalize(r)).collect()).collect();
                let mdp = Mdp::from_nested(&transition, normalize(&init), t).unwrap();
                let probs: Vec<f64> = pol.chunks(a).flat_map(normalize).collect();
                let policy = Policy::new(t, s, a, probs).unwrap();
                (mdp, policy)
            })
    })
}

fn stateless_profile() -> impl Strategy<Value = StatelessProfile> {
    (2usize..=6, 1usize..=4).prop_flat_map(|(m, n)| {
        proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, m), n).prop_filter_map("needs a positive entry", |rows| {
            StatelessProfile::new(rows).ok()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lottery_is_a_distribution(a in 0usize..3, b in 0usize..3, c in 0usize..3) {
        let l = plurality_lottery([a, b, c]);
        prop_assert!((l.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        prop_assert_eq!(l, plurality_lottery([c, a, b]));
    }

    #[test]
    fn best_response_ignores_opponent_order(u in simplex_point(), beta in 0.0..3.0f64, a in 0usize..3, b in 0usize..3) {
        prop_assert_eq!(best_response_vote(&u, [a, b], beta), best_response_vote(&u, [b, a], beta));
    }

    #[test]
    fn manipulability_survives_relabeling(u in simplex_point(), beta in 0.0..3.0f64, perm in permutation()) {
        prop_assert_eq!(is_manipulable(&u, beta), is_manipulable(&u.relabel(perm), beta));
        for o in opponent_profiles() {
            let moved: Vec<usize> = best_response_vote(&u, o, beta).into_iter().map(|v| perm[v]).collect();
            let mut relabeled = best_response_vote(&u.relabel(perm), [perm[o[0]], perm[o[1]]], beta);
            relabeled.sort();
            let mut moved = moved;
            moved.sort();
            prop_assert_eq!(moved, relabeled);
        }
    }

    #[test]
    fn vertices_are_never_manipulable(k in 0usize..3, beta in 0.0..5.0f64) {
        let mut u = [0.0; 3];
        u[k] = 1.0;
        prop_assert!(!is_manipulable(&SimplexUtility::new(u).unwrap(), beta));
    }

    #[test]
    fn mechanism_traces_are_consistent(profile in stateless_profile(), seed in any::<u64>()) {
        let trace = run_mechanism(&profile, &profile.truthful_agents(), seed).unwrap();
        prop_assert_eq!(trace.verify(), Ok(()));
        let lottery = trace.exact_lottery();
        prop_assert!(lottery.iter().sum::<BigRational>().is_one());
        prop_assert!(trace.robot_arm < profile.num_arms());
        // each human pulls one arm per round, each arm at most once
        let rounds = trace.early_stop.unwrap_or(profile.num_arms());
        prop_assert_eq!(trace.records.len(), rounds * profile.num_humans());
        prop_assert!(trace.records.iter().all(|r| r.novel));
    }

    #[test]
    fn a_lone_human_scores_harmonically(rewards in proptest::collection::vec(0.01..1.0f64, 2..8), seed in any::<u64>()) {
        let profile = StatelessProfile::new(vec![rewards]).unwrap();
        let trace = run_mechanism(&profile, &profile.truthful_agents(), seed).unwrap();
        let mut scores: Vec<BigRational> = trace.exact_scores().into_iter().filter(|s| !s.is_zero()).collect();
        scores.sort();
        scores.reverse();
        let expected: Vec<BigRational> = (1..=scores.len()).map(|t| BigRational::new(1.into(), (t as i64).into())).collect();
        prop_assert_eq!(scores, expected);
    }

    #[test]
    fn runs_are_reproducible(profile in stateless_profile(), seed in any::<u64>()) {
        let agents = profile.truthful_agents();
        prop_assert_eq!(run_mechanism(&profile, &agents, seed).unwrap(), run_mechanism(&profile, &agents, seed).unwrap());
    }

    #[test]
    fn two_arms_two_humans_lose_at_most_half(rows in proptest::collection::vec(proptest::collection::vec(0.0..1.0f64, 2), 2)) {
        prop_assume!(rows.iter().flatten().any(|x| *x > 0.0));
        let profile = StatelessProfile::new(rows).unwrap();
        let w = expected_welfare(&profile, &profile.truthful_agents()).unwrap();
        prop_assert!(profile.optimal_welfare() <= 2.0 * w + 1e-12);
    }

    #[test]
    fn occupancy_satisfies_flow((mdp, policy) in stochastic_world()) {
        let occ = occupancy_of_policy(&mdp, &policy).unwrap();
        prop_assert!(occ.flow_violation(&mdp) < 1e-12);
        prop_assert!(occ.normalization_violation() < 1e-12);
        prop_assert!(occ.as_slice().iter().all(|x| *x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_dominates_every_trajectory(w in tiny_world(), beta in 0.0..3.0f64) {
        let mdp = w.mdp();
        let p = w.problem(&mdp).with_beta(beta);
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        for t in enumerate_trajectories(&mdp, 100_000).unwrap() {
            prop_assert!(p.trajectory_objective(&sol.target_vector, &t).unwrap() <= sol.objective_value + 1e-6);
        }
        prop_assert!(sol.occupancy.flow_violation(&mdp) < 1e-9);
    }

    #[test]
    fn optimum_beats_random_policies(w in tiny_world(), beta in 0.0..3.0f64, seeds in proptest::collection::vec(any::<u64>(), 20)) {
        let mdp = w.mdp();
        let p = w.problem(&mdp).with_beta(beta);
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        let (s, a, t) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        for seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<f64> = (0..t * s)
                .flat_map(|_| {
                    let row: Vec<f64> = (0..a).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let z: f64 = row.iter().sum();
                    row.into_iter().map(move |x| x / z)
                })
                .collect();
            let occ = occupancy_of_policy(&mdp, &Policy::new(t, s, a, probs).unwrap()).unwrap();
            let own = occ.linear_state(|_, s| p.own_reward.state_reward(s));
            let miss: f64 = occ.feature_image(p.own_reward.features()).iter().zip(&sol.target_vector).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!(beta * own - miss <= sol.objective_value + 1e-6);
        }
    }

    #[test]
    fn a_lone_demonstrator_hits_the_target(w in tiny_world()) {
        let mdp = w.mdp();
        let fmap = Arc::new(FeatureMap::new(w.features.clone()).unwrap());
        let reward = RewardModel::new(w.weights.clone(), fmap).unwrap();
        let p = BestResponseProblem::against(&mdp, reward, &[]).unwrap();
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        prop_assert!(sol.objective_value.abs() < 1e-6, "{}", sol.objective_value);
    }

    #[test]
    fn own_value_grows_with_beta(w in tiny_world(), b1 in 0.0..5.0f64, db in 0.0..5.0f64) {
        let mdp = w.mdp();
        let cfg = SolverConfig::default();
        let lo = solve_best_response(&w.problem(&mdp).with_beta(b1), &cfg).unwrap();
        let hi = solve_best_response(&w.problem(&mdp).with_beta(b1 + db), &cfg).unwrap();
        prop_assert!(hi.own_value >= lo.own_value - 1e-5, "{} < {}", hi.own_value, lo.own_value);
        let best = optimal_policy(&mdp, &w.problem(&mdp).own_reward).unwrap().value;
        prop_assert!(hi.own_value <= best + 1e-9);
    }
}

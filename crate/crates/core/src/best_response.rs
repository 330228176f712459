//! A strategic demonstrator's best response to feature matching.
//!
//! The learner matches the mean demonstrated feature count, so human `i`
//! wants the pooled mean to land on their own ideal feature count. Given the
//! others' demonstrations this is the target
//! `N·E[φ | w_i] − Σ_{j≠i} φ(τ_j)`, and the best response maximizes
//!
//! ```text
//! β Σ_{t,s,a} γ^t ρ^t[s][a] φ(s)ᵀ w_i  −  ‖Σ_{t,s,a} ρ^t[s][a] φ(s) − target‖²
//! ```
//!
//! over occupancy measures `ρ` satisfying the flow constraints. With `β = 0`
//! this is plain linearly constrained least squares.
//!
//! The solver is fully corrective Frank–Wolfe. The vertices of the flow
//! polytope are occupancies of deterministic time-indexed policies, so the
//! linear maximization oracle is one backward-induction call with the
//! objective's gradient as a time-varying state reward. After each new vertex
//! the weights over the active vertices are re-optimized by accelerated
//! projected gradient on the simplex. The Frank–Wolfe gap certifies optimality.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::soft_feature_expectations;
use crate::mdp::{
    decode_trajectory, feature_expectations, occupancy_of_policy, optimal_policy, plan_with,
    trajectory_features, DecodeMode, FeatureMap, Mdp, OccupancyMeasure, Policy,
    RewardModel, Trajectory,
};
use crate::util::{dot, norm2};

/// How `E[φ | w_i]` in the target is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Feature expectations of the human's own hard-argmax optimal policy.
    #[default]
    Hard,
    /// Feature expectations of the maximum-entropy policy.
    Soft,
}

#[derive(Clone, Debug)]
pub struct BestResponseProblem<'a> {
    pub mdp: &'a Mdp,
    pub own_reward: RewardModel,
    /// `Σ_{j≠i} φ(τ_j)`.
    pub others_features: Vec<f64>,
    pub num_humans: usize,
    pub beta: f64,
    pub discount: f64,
    pub target_mode: TargetMode,
}

impl<'a> BestResponseProblem<'a> {
    /// A problem against the given other demonstrations, `β = 0`, no discount.
    pub fn against(mdp: &'a Mdp, own_reward: RewardModel, others: &[Trajectory]) -> Result<Self> {
        let fmap = own_reward.features();
        let mut others_features = vec![0.0; fmap.dim()];
        for t in others {
            t.check(mdp)?;
            let f = trajectory_features(t, fmap)?;
            others_features.iter_mut().zip(&f).for_each(|(o, x)| *o += x);
        }
        let problem = BestResponseProblem {
            mdp,
            own_reward,
            others_features,
            num_humans: others.len() + 1,
            beta: 0.0,
            discount: 1.0,
            target_mode: TargetMode::Hard,
        };
        problem.check()?;
        Ok(problem)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_target_mode(mut self, mode: TargetMode) -> Self {
        self.target_mode = mode;
        self
    }

    pub fn check(&self) -> Result<()> {
        let fmap = self.own_reward.features();
        fmap.check_mdp(self.mdp)?;
        if self.others_features.len() != fmap.dim() {
            return Err(Error::Dimension { expected: fmap.dim(), got: self.others_features.len() });
        }
        if self.num_humans == 0 {
            return Err(Error::invalid("need at least one human"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and nonnegative, got {}", self.beta)));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::invalid(format!("discount must lie in (0, 1], got {}", self.discount)));
        }
        Ok(())
    }

    fn features(&self) -> &Arc<FeatureMap> {
        self.own_reward.features()
    }

    /// `Σ_t γ^t r_i(s_t)` for a trajectory.
    pub fn discounted_own_return(&self, traj: &Trajectory) -> f64 {
        let mut g = 1.0;
        let mut acc = 0.0;
        for s in traj.states() {
            acc += g * self.own_reward.state_reward(s);
            g *= self.discount;
        }
        acc
    }

    /// The objective for a single submitted trajectory.
    pub fn trajectory_objective(&self, target: &[f64], traj: &Trajectory) -> Result<f64> {
        let f = trajectory_features(traj, self.features())?;
        Ok(objective(self.beta, self.discounted_own_return(traj), &f, target))
    }
}

fn objective(beta: f64, own: f64, image: &[f64], target: &[f64]) -> f64 {
    let sq: f64 = image.iter().zip(target).map(|(x, t)| (x - t) * (x - t)).sum();
    beta * own - sq
}

/// `N·E[φ | w_i] − Σ_{j≠i} φ(τ_j)`.
pub fn build_target(problem: &BestResponseProblem<'_>) -> Result<Vec<f64>> {
    problem.check()?;
    let ideal = match problem.target_mode {
        TargetMode::Hard => {
            let plan = optimal_policy(problem.mdp, &problem.own_reward)?;
            feature_expectations(problem.mdp, &plan.policy, problem.features())?
        }
        TargetMode::Soft => soft_feature_expectations(problem.mdp, &problem.own_reward)?,
    };
    let n = problem.num_humans as f64;
    Ok(ideal.iter().zip(&problem.others_features).map(|(e, o)| n * e - o).collect())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Frank–Wolfe duality gap at which the solve stops.
    pub gap_tol: f64,
    pub decode: DecodeMode,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iterations: 2000, gap_tol: 1e-6, decode: DecodeMode::Argmax, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub duality_gap: f64,
    pub flow_violation: f64,
    pub active_vertices: usize,
}

#[derive(Clone, Debug)]
pub struct BestResponseSolution {
    pub occupancy: OccupancyMeasure,
    /// Objective at the fractional optimum.
    pub objective_value: f64,
    pub target_vector: Vec<f64>,
    /// The occupancy decoded into one submitted trajectory.
    pub trajectory: Trajectory,
    /// Objective of `trajectory` itself. Can fall below `objective_value` when the
    /// optimum is a strict mixture.
    pub trajectory_objective: f64,
    /// `Σ γ^t r_i` at the fractional optimum.
    pub own_value: f64,
    pub solver_stats: SolverStats,
    /// Vertices of the final mixture as (weight, deterministic policy).
    pub support: Vec<(f64, Policy)>,
}

struct Vertex {
    policy: Policy,
    occupancy: OccupancyMeasure,
    image: Vec<f64>,
    own: f64,
}

fn discounted_state_value(problem: &BestResponseProblem<'_>, occ: &OccupancyMeasure) -> f64 {
    let r = problem.own_reward.state_rewards();
    let gammas: Vec<f64> = (0..problem.mdp.horizon()).map(|t| problem.discount.powi(t as i32)).collect();
    occ.linear_state(|t, s| gammas[t] * r[s])
}

fn make_vertex(problem: &BestResponseProblem<'_>, policy: Policy) -> Result<Vertex> {
    let occupancy = occupancy_of_policy(problem.mdp, &policy)?;
    let image = occupancy.feature_image(problem.features());
    let own = discounted_state_value(problem, &occupancy);
    Ok(Vertex { policy, occupancy, image, own })
}

/// Maximizes the best-response objective over the flow polytope.
pub fn solve_best_response(problem: &BestResponseProblem<'_>, config: &SolverConfig) -> Result<BestResponseSolution> {
    let target = build_target(problem)?;
    let mdp = problem.mdp;
    let fmap = problem.features();
    let beta = problem.beta;
    let own_rewards = problem.own_reward.state_rewards();
    let gammas: Vec<f64> = (0..mdp.horizon()).map(|t| problem.discount.powi(t as i32)).collect();

    // Start from the honest optimum.
    let honest = optimal_policy(mdp, &problem.own_reward)?.policy;
    let mut vertices = vec![make_vertex(problem, honest)?];
    let mut weights = vec![1.0];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    let mixed = |vertices: &[Vertex], weights: &[f64]| {
        let mut image = vec![0.0; fmap.dim()];
        let mut own = 0.0;
        for (v, &w) in vertices.iter().zip(weights) {
            image.iter_mut().zip(&v.image).for_each(|(m, x)| *m += w * x);
            own += w * v.own;
        }
        (image, own)
    };

    while iterations < config.max_iterations {
        let (image, own) = mixed(&vertices, &weights);
        let resid: Vec<f64> = image.iter().zip(&target).map(|(x, t)| x - t).collect();
        // gradient as a time-varying state reward
        let pull: Vec<f64> = (0..mdp.num_states()).map(|s| -2.0 * dot(&resid, fmap.get(s))).collect();
        let plan = plan_with(mdp, |t, s| beta * gammas[t] * own_rewards[s] + pull[s]);
        let cand = make_vertex(problem, plan.policy)?;
        let lin = |img: &[f64], own: f64| beta * own - 2.0 * dot(&resid, img);
        gap = lin(&cand.image, cand.own) - lin(&image, own);
        if gap <= config.gap_tol {
            break;
        }
        iterations += 1;
        if !vertices.iter().any(|v| v.occupancy == cand.occupancy) {
            vertices.push(cand);
            weights.push(0.0);
        }
        let images: Vec<&[f64]> = vertices.iter().map(|v| v.image.as_slice()).collect();
        let owns: Vec<f64> = vertices.iter().map(|v| v.own).collect();
        weights = simplex_qp(&images, &owns, &target, beta, &weights, config.gap_tol * 1e-2);
        // drop vertices that left the support
        let mut k = 0;
        vertices.retain(|_| {
            let keep = weights[k] > 0.0;
            k += 1;
            keep
        });
        weights.retain(|w| *w > 0.0);
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }

    let parts: Vec<(&OccupancyMeasure, f64)> = vertices.iter().zip(&weights).map(|(v, &w)| (&v.occupancy, w)).collect();
    let occupancy = OccupancyMeasure::mixture(&parts).expect("at least one vertex");
    let (image, own_value) = mixed(&vertices, &weights);
    let objective_value = objective(beta, own_value, &image, &target);
    let flow_violation = occupancy.flow_violation(mdp);

    let trajectory = decode_trajectory(mdp, &occupancy, config.decode, config.seed)?.trajectory;
    let trajectory_objective = problem.trajectory_objective(&target, &trajectory)?;
    let solution = BestResponseSolution {
        occupancy,
        objective_value,
        target_vector: target,
        trajectory,
        trajectory_objective,
        own_value,
        solver_stats: SolverStats { iterations, duality_gap: gap, flow_violation, active_vertices: vertices.len() },
        support: vertices.into_iter().zip(weights).map(|(v, w)| (w, v.policy)).collect(),
    };
    if gap > config.gap_tol {
        return Err(Error::SolverNotConverged { iterations, gap, best: Box::new(solution) });
    }
    Ok(solution)
}

/// The submitted best-response trajectory.
pub fn best_response_trajectory(problem: &BestResponseProblem<'_>, seed: u64) -> Result<Trajectory> {
    let config = SolverConfig { seed, ..SolverConfig::default() };
    Ok(solve_best_response(problem, &config)?.trajectory)
}

/// Maximizes `β ownᵀλ − ‖Σ_k λ_k x_k − target‖²` over the simplex by FISTA with
/// adaptive restart, stopping when the simplex Frank–Wolfe gap drops to `tol`.
fn simplex_qp(images: &[&[f64]], owns: &[f64], target: &[f64], beta: f64, start: &[f64], tol: f64) -> Vec<f64> {
    let k = images.len();
    let grad = |lam: &[f64]| {
        let mut x = vec![0.0; target.len()];
        for (img, &l) in images.iter().zip(lam) {
            x.iter_mut().zip(img.iter()).for_each(|(m, v)| *m += l * v);
        }
        let resid: Vec<f64> = x.iter().zip(target).map(|(a, b)| a - b).collect();
        images.iter().zip(owns).map(|(img, &o)| beta * o - 2.0 * dot(img, &resid)).collect::<Vec<f64>>()
    };
    // Lipschitz constant of the gradient: 2 λ_max(XᵀX) by power iteration
    let gram: Vec<Vec<f64>> = images.iter().map(|a| images.iter().map(|b| dot(a, b)).collect()).collect();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lmax = 0.0;
    for _ in 0..100 {
        let w: Vec<f64> = gram.iter().map(|row| dot(row, &v)).collect();
        let n = norm2(&w);
        if n == 0.0 {
            break;
        }
        lmax = n;
        v = w.into_iter().map(|x| x / n).collect();
    }
    let lip = (2.0 * lmax * 1.01).max(1e-12);

    let mut lam = start.to_vec();
    let mut y = lam.clone();
    let mut momentum: f64 = 1.0;
    for _ in 0..50_000 {
        let gy = grad(&y);
        let step: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a + g / lip).collect();
        let next = project_simplex(&step);
        let ngrad = grad(&next);
        let fw_gap = ngrad.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - dot(&ngrad, &next);
        // Gradient restart test: values are too flat near the optimum to compare in f64.
        let uphill: f64 = y.iter().zip(&next).zip(&lam).map(|((y, n), l)| (y - n) * (n - l)).sum();
        if uphill > 0.0 {
            momentum = 1.0;
        }
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let coef = (momentum - 1.0) / m_next;
        y = next.iter().zip(&lam).map(|(a, b)| a + coef * (a - b)).collect();
        momentum = m_next;
        lam = next;
        if fw_gap <= tol {
            break;
        }
    }
    lam
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Smallest `β` (to relative precision `rel_tol`) at which the fractional best
/// response attains the human's optimal own value, searched up to `beta_max`.
/// `None` if honesty is not reached by `beta_max`.
pub fn honesty_crossover(problem: &BestResponseProblem<'_>, beta_max: f64, rel_tol: f64, config: &SolverConfig) -> Result<Option<f64>> {
    let best_own = {
        let plan = optimal_policy(problem.mdp, &problem.own_reward.clone())?;
        discounted_state_value(problem, &occupancy_of_policy(problem.mdp, &plan.policy)?)
    };
    let honest_at = |beta: f64| -> Result<bool> {
        let p = problem.clone().with_beta(beta);
        let sol = match solve_best_response(&p, config) {
            Ok(s) => s,
            Err(Error::SolverNotConverged { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        Ok(best_own - sol.own_value <= 1e-9 * (1.0 + best_own.abs()))
    };
    if honest_at(0.0)? {
        return Ok(Some(0.0));
    }
    if !honest_at(beta_max)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, beta_max);
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if honest_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{enumerate_trajectories, trajectory_return, FLOW_TOL};

    fn chain(horizon: usize) -> Mdp {
        Mdp::deterministic(&[vec![0, 1], vec![0, 2], vec![1, 2]], vec![1.0, 0.0, 0.0], horizon).unwrap()
    }

    fn two_feature_chain() -> Arc<FeatureMap> {
        Arc::new(FeatureMap::new(vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap())
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        assert_eq!(project_simplex(&[3.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.2, -0.4, 0.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12 && p[1] == 0.0);
    }

    #[test]
    fn single_human_target_is_own_ideal() {
        let mdp = chain(4);
        let fmap = two_feature_chain();
        let r = RewardModel::new(vec![0.2, 1.0], Arc::clone(&fmap)).unwrap();
        let p = BestResponseProblem::against(&mdp, r.clone(), &[]).unwrap();
        let ideal = feature_expectations(&mdp, &optimal_policy(&mdp, &r).unwrap().policy, &fmap).unwrap();
        assert_eq!(build_target(&p).unwrap(), ideal);
    }

    #[test]
    fn aligned_and_shifted_others() {
        let mdp = chain(4);
        let fmap = two_feature_chain();
        let r = RewardModel::new(vec![0.2, 1.0], Arc::clone(&fmap)).unwrap();
        let ideal = feature_expectations(&mdp, &optimal_policy(&mdp, &r).unwrap().policy, &fmap).unwrap();
        let mut p = BestResponseProblem::against(&mdp, r, &[]).unwrap();
        p.num_humans = 2;
        p.others_features = ideal.clone();
        assert_eq!(build_target(&p).unwrap(), ideal);
        let delta = [0.5, -1.5];
        p.others_features = ideal.iter().zip(&delta).map(|(e, d)| e + d).collect();
        let t = build_target(&p).unwrap();
        for k in 0..2 {
            assert!((t[k] - (ideal[k] - delta[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn alone_the_best_response_is_honest() {
        let mdp = chain(4);
        let fmap = two_feature_chain();
        let r = RewardModel::new(vec![0.2, 1.0], Arc::clone(&fmap)).unwrap();
        let p = BestResponseProblem::against(&mdp, r.clone(), &[]).unwrap();
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        assert!(sol.objective_value.abs() < 1e-9);
        let honest = occupancy_of_policy(&mdp, &optimal_policy(&mdp, &r).unwrap().policy).unwrap();
        let diff: f64 = sol.occupancy.as_slice().iter().zip(honest.as_slice()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 1e-9);
        assert!(sol.solver_stats.flow_violation < 1e-6);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let mdp = chain(2);
        let r = RewardModel::new(vec![0.0, 1.0], two_feature_chain()).unwrap();
        let p = BestResponseProblem::against(&mdp, r, &[]).unwrap();
        assert!(p.clone().with_beta(-1.0).check().is_err());
        assert!(p.clone().with_discount(0.0).check().is_err());
        assert!(p.with_discount(1.5).check().is_err());
    }

    #[test]
    fn fractional_optimum_dominates_every_trajectory() {
        let mdp = chain(4);
        let fmap = two_feature_chain();
        let r = RewardModel::new(vec![0.0, 1.0], Arc::clone(&fmap)).unwrap();
        let other = Trajectory::from_actions(&mdp, 0, &[1, 1, 1, 1]).unwrap();
        let p = BestResponseProblem::against(&mdp, r.clone(), &[other]).unwrap();
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        let target = &sol.target_vector;
        let mut best = f64::NEG_INFINITY;
        for t in enumerate_trajectories(&mdp, 1000).unwrap() {
            best = best.max(p.trajectory_objective(target, &t).unwrap());
        }
        assert!(sol.objective_value >= best - 1e-6);
        assert!(sol.trajectory_objective <= sol.objective_value + 1e-6);
        assert!(sol.occupancy.flow_violation(&mdp) < FLOW_TOL);
        // honest trajectory reaches state 2 and stays: features (1, 3)
        let honest = Trajectory::from_actions(&mdp, 0, &[1, 1, 1, 1]).unwrap();
        assert_eq!(trajectory_return(&honest, &r).unwrap(), 2.0);
    }

    #[test]
    fn large_beta_recovers_honest_value() {
        let mdp = chain(3);
        let fmap = two_feature_chain();
        let r = RewardModel::new(vec![0.3, 1.0], Arc::clone(&fmap)).unwrap();
        let other = Trajectory::from_actions(&mdp, 0, &[0, 0, 0]).unwrap();
        let p = BestResponseProblem::against(&mdp, r.clone(), &[other]).unwrap().with_beta(1e4);
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        let best = optimal_policy(&mdp, &r).unwrap().value;
        assert!((sol.own_value - best).abs() < 1e-9);
        assert!((trajectory_return(&sol.trajectory, &r).unwrap() - best).abs() < 1e-9);
    }

    /// Start state with three absorbing successors A=(1,0), B=(0,1), C=(0.9,0.9).
    fn fork() -> (Mdp, Arc<FeatureMap>) {
        let mdp = Mdp::deterministic(&[vec![1, 2, 3], vec![1; 3], vec![2; 3], vec![3; 3]], vec![1.0, 0.0, 0.0, 0.0], 2).unwrap();
        let fmap = Arc::new(FeatureMap::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.9, 0.9]]).unwrap());
        (mdp, fmap)
    }

    #[test]
    fn crossover_is_bracketed() {
        let (mdp, fmap) = fork();
        let r = RewardModel::new(vec![1.0, 0.2], Arc::clone(&fmap)).unwrap();
        let other = Trajectory::from_actions(&mdp, 0, &[0, 0]).unwrap();
        let p = BestResponseProblem::against(&mdp, r, &[other]).unwrap();
        let cfg = SolverConfig::default();
        let beta = honesty_crossover(&p, 1e4, 1e-3, &cfg).unwrap().expect("honest by 1e4");
        assert!(beta > 0.0);
        let best = optimal_policy(&mdp, &p.own_reward).unwrap().value;
        let above = solve_best_response(&p.clone().with_beta(beta * 1.01), &cfg).unwrap();
        assert!((above.own_value - best).abs() < 1e-9);
        let below = solve_best_response(&p.clone().with_beta(beta * 0.9), &cfg).unwrap();
        assert!(best - below.own_value > 1e-9);
    }

    #[test]
    fn fractional_mixture_on_the_fork() {
        let (mdp, fmap) = fork();
        let r = RewardModel::new(vec![1.0, 0.2], Arc::clone(&fmap)).unwrap();
        let other = Trajectory::from_actions(&mdp, 0, &[0, 0]).unwrap();
        let p = BestResponseProblem::against(&mdp, r, &[other]).unwrap();
        let sol = solve_best_response(&p, &SolverConfig::default()).unwrap();
        // target (0.8, 1.8); the closest point of the hull lies on segment C-B
        assert_eq!(sol.target_vector, vec![0.8, 1.8]);
        assert_eq!(sol.support.len(), 2);
        let x = sol.occupancy.feature_image(&fmap);
        let lam = 0.18 / 0.82;
        assert!((x[0] - (0.9 - 0.9 * lam)).abs() < 1e-6 && (x[1] - (0.9 + 0.1 * lam)).abs() < 1e-6, "{x:?}");
        // the submitted trajectory goes to C
        assert_eq!(sol.trajectory.steps()[1].state, 3);
    }
}

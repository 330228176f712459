//! The learner: maximum-entropy fitting of one linear reward to the pooled
//! demonstrations, and the robot's plan under the fitted reward.
//!
//! Demonstrators are modeled as noisily optimal: the soft (log-sum-exp)
//! backward induction below gives, on deterministic dynamics,
//! `P(τ | w) = μ0(s0) exp(φ(τ)ᵀ w) / Z(s0, w)` over feasible trajectories.
//! The fitted objective is the average log-likelihood
//! `L(w) = mean_i φ(τ_i)ᵀ w − Σ_s μ0(s) log Z(s, w)`, which is concave with
//! gradient `mean_i φ(τ_i) − E_{π_soft(w)}[φ]`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{
    feature_expectations, optimal_policy, rollout, trajectory_features, FeatureMap, Mdp, Policy,
    RewardModel, Trajectory,
};
use crate::util::{dot, log_sum_exp, norm2};

#[derive(Clone, Debug)]
pub struct SoftPlan {
    pub policy: Policy,
    /// `log Z(s, w) = V^0_soft(s)` per start state.
    pub log_partition: Vec<f64>,
    /// `Σ_s μ0(s) log Z(s, w)`.
    pub expected_log_partition: f64,
}

/// Maximum-entropy policy by soft backward induction:
/// `Q^t(s,a) = r(s) + Σ_{s'} P(s'|s,a) V^{t+1}(s')`, `V^t(s) = log Σ_a exp Q^t(s,a)`,
/// `π^t(a|s) = exp(Q^t(s,a) − V^t(s))`.
pub fn soft_value_iteration(mdp: &Mdp, reward: &RewardModel) -> Result<SoftPlan> {
    reward.features().check_mdp(mdp)?;
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let r = reward.state_rewards();
    let mut probs = vec![0.0; horizon * ns * na];
    let mut next_v = vec![0.0; ns];
    let mut cur_v = vec![0.0; ns];
    let mut q = vec![0.0; na];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            for (a, qa) in q.iter_mut().enumerate() {
                *qa = r[s] + mdp.successors(s, a).iter().map(|&(s2, p)| p * next_v[s2]).sum::<f64>();
            }
            let v = log_sum_exp(&q);
            cur_v[s] = v;
            let row = &mut probs[(t * ns + s) * na..(t * ns + s + 1) * na];
            for (p, qa) in row.iter_mut().zip(&q) {
                *p = (qa - v).exp();
            }
            // renormalize away rounding so the row passes the 1e-9 policy check
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
        std::mem::swap(&mut next_v, &mut cur_v);
    }
    let log_partition = next_v;
    let expected_log_partition = dot(mdp.initial(), &log_partition);
    Ok(SoftPlan {
        policy: Policy::new(horizon, ns, na, probs)?,
        log_partition,
        expected_log_partition,
    })
}

/// `E_{π_soft(w)}[φ]`.
pub fn soft_feature_expectations(mdp: &Mdp, reward: &RewardModel) -> Result<Vec<f64>> {
    let plan = soft_value_iteration(mdp, reward)?;
    feature_expectations(mdp, &plan.policy, reward.features())
}

/// The pooled demonstrations, one trajectory per human.
#[derive(Clone, Debug)]
pub struct DemonstrationSet<'a> {
    mdp: &'a Mdp,
    fmap: &'a Arc<FeatureMap>,
    trajectories: Vec<Trajectory>,
}

impl<'a> DemonstrationSet<'a> {
    pub fn new(mdp: &'a Mdp, fmap: &'a Arc<FeatureMap>, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::invalid("demonstration set is empty"));
        }
        fmap.check_mdp(mdp)?;
        for t in &trajectories {
            t.check(mdp)?;
        }
        Ok(DemonstrationSet { mdp, fmap, trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn mdp(&self) -> &Mdp {
        self.mdp
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        self.fmap
    }

    /// `mean_i φ(τ_i)`.
    pub fn empirical_features(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.fmap.dim()];
        for t in &self.trajectories {
            let f = trajectory_features(t, self.fmap).expect("checked at construction");
            mean.iter_mut().zip(&f).for_each(|(m, x)| *m += x);
        }
        let n = self.trajectories.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Stop once `‖E_soft[φ] − mean φ(τ_i)‖₂` falls to this.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { tol: 1e-4, max_iterations: 5000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitIteration {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    pub stationarity_residual: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<FitIteration>,
}

impl FitResult {
    pub fn reward(&self, fmap: &Arc<FeatureMap>) -> Result<RewardModel> {
        RewardModel::new(self.weights.clone(), Arc::clone(fmap))
    }

    /// One CSV row per accepted iteration.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        for row in &self.trace {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

struct Eval {
    log_likelihood: f64,
    gradient: Vec<f64>,
}

fn evaluate(mdp: &Mdp, fmap: &Arc<FeatureMap>, empirical: &[f64], w: &[f64]) -> Result<Eval> {
    let reward = RewardModel::new(w.to_vec(), Arc::clone(fmap))?;
    let plan = soft_value_iteration(mdp, &reward)?;
    let expected = feature_expectations(mdp, &plan.policy, fmap)?;
    Ok(Eval {
        log_likelihood: dot(empirical, w) - plan.expected_log_partition,
        gradient: empirical.iter().zip(&expected).map(|(e, x)| e - x).collect(),
    })
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

/// Gradient ascent with Barzilai–Borwein step proposals and Armijo backtracking,
/// starting from `w = 0`. Never fails on non-convergence: the best iterate comes
/// back with `converged = false`.
pub fn fit_reward(demos: &DemonstrationSet<'_>, config: &FitConfig) -> Result<FitResult> {
    let (mdp, fmap) = (demos.mdp(), demos.features());
    let empirical = demos.empirical_features();
    let mut w = vec![0.0; fmap.dim()];
    let mut cur = evaluate(mdp, fmap, &empirical, &w)?;
    let mut residual = norm2(&cur.gradient);
    let mut trace = vec![FitIteration { iteration: 0, log_likelihood: cur.log_likelihood, residual, step: 0.0 }];
    // a safe first step: the likelihood's curvature is bounded by T² ‖φ‖²_max
    let fmax = (0..fmap.num_states()).map(|s| norm2(fmap.get(s))).fold(0.0, f64::max).max(1e-12);
    let mut step = 1.0 / (mdp.horizon() as f64 * fmax).powi(2);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;

    while residual > config.tol && iterations < config.max_iterations {
        if let Some((pw, pg)) = &prev {
            let s: Vec<f64> = w.iter().zip(pw).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = cur.gradient.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = -dot(&s, &y);
            let bb = dot(&s, &s) / sy;
            step = if sy > 0.0 && bb.is_finite() { bb } else { step * 2.0 };
        }
        let gnorm2 = residual * residual;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let cand: Vec<f64> = w.iter().zip(&cur.gradient).map(|(x, g)| x + step * g).collect();
            let ev = evaluate(mdp, fmap, &empirical, &cand)?;
            if ev.log_likelihood >= cur.log_likelihood + ARMIJO * step * gnorm2 {
                accepted = Some((cand, ev));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, ev)) = accepted else {
            break;
        };
        iterations += 1;
        prev = Some((std::mem::replace(&mut w, cand), std::mem::replace(&mut cur.gradient, ev.gradient)));
        cur.log_likelihood = ev.log_likelihood;
        residual = norm2(&cur.gradient);
        trace.push(FitIteration { iteration: iterations, log_likelihood: cur.log_likelihood, residual, step });
    }

    Ok(FitResult {
        weights: w,
        stationarity_residual: residual,
        log_likelihood: cur.log_likelihood,
        iterations,
        converged: residual <= config.tol,
        trace,
    })
}

/// The robot plans with hard argmax under the fitted reward and rolls out once.
pub fn robot_trajectory(fit: &FitResult, mdp: &Mdp, fmap: &Arc<FeatureMap>, seed: u64) -> Result<Trajectory> {
    let plan = optimal_policy(mdp, &fit.reward(fmap)?)?;
    rollout(mdp, &plan.policy, seed)
}

//! Finite-horizon tabular MDPs without reward, linear state-feature rewards,
//! exact planning, and occupancy-measure algebra.
//!
//! Policies are time-indexed: `π^t(a | s)` for `t in 0..T`. Rewards are linear
//! in per-state features, so the return of a trajectory is `Σ_t φ(s_t)ᵀ w`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{dot, rng_from_seed, sample_categorical};

/// Row-sum tolerance for transition and initial distributions.
pub const STOCHASTIC_TOL: f64 = 1e-9;
/// Per-constraint tolerance for accepting an occupancy measure.
pub const FLOW_TOL: f64 = 1e-8;
/// Below this mass a state is treated as unvisited when decoding.
const ZERO_MASS: f64 = 1e-12;
/// Q-values closer than this count as tied; ties go to the lowest action.
pub(crate) const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum { state: usize, action: usize, sum: f64 },
    NegativeTransition { state: usize, action: usize, next: usize, prob: f64 },
    InitialSum { sum: f64 },
    NegativeInitial { state: usize, prob: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "P[s={state}][a={action}] sums to {sum}")
            }
            Violation::NegativeTransition { state, action, next, prob } => {
                write!(f, "P[s={state}][a={action}][s'={next}] = {prob} < 0")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitial { state, prob } => write!(f, "mu0[{state}] = {prob} < 0"),
        }
    }
}

/// A finite MDP without reward `(S, A, P, μ0, T)`.
///
/// Construction only checks shapes and `T > 0`; call [`Mdp::validate`] (or
/// [`Mdp::validated`]) for the probability constraints.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MdpRaw", into = "MdpRaw")]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    initial: Vec<f64>,
    successors: Vec<Vec<(usize, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct MdpRaw {
    transition: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
    horizon: usize,
}

impl TryFrom<MdpRaw> for Mdp {
    type Error = Error;
    fn try_from(raw: MdpRaw) -> Result<Self> {
        Mdp::from_nested(&raw.transition, raw.initial, raw.horizon)?.validated()
    }
}

impl From<Mdp> for MdpRaw {
    fn from(m: Mdp) -> Self {
        let transition = (0..m.num_states)
            .map(|s| (0..m.num_actions).map(|a| m.transition_row(s, a).to_vec()).collect())
            .collect();
        MdpRaw { transition, initial: m.initial, horizon: m.horizon }
    }
}

impl Mdp {
    /// `transition` is flat, indexed `[s][a][s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("mdp needs at least one state and one action"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        let expected = num_states * num_actions * num_states;
        if transition.len() != expected {
            return Err(Error::Dimension { expected, got: transition.len() });
        }
        if initial.len() != num_states {
            return Err(Error::Dimension { expected: num_states, got: initial.len() });
        }
        if transition.iter().chain(&initial).any(|p| !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite"));
        }
        let successors = (0..num_states * num_actions)
            .map(|sa| {
                let row = &transition[sa * num_states..(sa + 1) * num_states];
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(s2, p)| (s2, *p))
                    .collect()
            })
            .collect();
        Ok(Mdp { num_states, num_actions, horizon, transition, initial, successors })
    }

    pub fn from_nested(transition: &[Vec<Vec<f64>>], initial: Vec<f64>, horizon: usize) -> Result<Self> {
        let num_states = transition.len();
        let num_actions = transition.first().map_or(0, |r| r.len());
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(Error::invalid(format!("state {s} has {} actions, expected {num_actions}", per_action.len())));
            }
            for row in per_action {
                if row.len() != num_states {
                    return Err(Error::Dimension { expected: num_states, got: row.len() });
                }
                flat.extend_from_slice(row);
            }
        }
        Mdp::new(num_states, num_actions, flat, initial, horizon)
    }

    /// Builds an MDP where every action has one successor: `next[s][a]`.
    pub fn deterministic(next: &[Vec<usize>], initial: Vec<f64>, horizon: usize) -> Result<Self> {
        let num_states = next.len();
        let num_actions = next.first().map_or(0, |r| r.len());
        let mut flat = vec![0.0; num_states * num_actions * num_states];
        for (s, row) in next.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::invalid("ragged successor table"));
            }
            for (a, &s2) in row.iter().enumerate() {
                if s2 >= num_states {
                    return Err(Error::invalid(format!("successor {s2} out of range")));
                }
                flat[(s * num_actions + a) * num_states + s2] = 1.0;
            }
        }
        Mdp::new(num_states, num_actions, flat, initial, horizon)
    }

    /// Returns `self` if [`Mdp::validate`] is clean, otherwise an error listing the violations.
    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_empty() {
            Ok(self)
        } else {
            let msg = report.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            Err(Error::NotStochastic(msg))
        }
    }

    /// Lists every violated stochasticity or normalization constraint.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                for (next, &prob) in row.iter().enumerate() {
                    if prob < 0.0 {
                        out.push(Violation::NegativeTransition { state: s, action: a, next, prob });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    out.push(Violation::RowSum { state: s, action: a, sum });
                }
            }
        }
        for (state, &prob) in self.initial.iter().enumerate() {
            if prob < 0.0 {
                out.push(Violation::NegativeInitial { state, prob });
            }
        }
        let sum: f64 = self.initial.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            out.push(Violation::InitialSum { sum });
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Successors of `(s, a)` with positive probability.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.num_actions + a]
    }

    /// True when every `(s, a)` has a single successor.
    pub fn is_deterministic(&self) -> bool {
        self.successors.iter().all(|succ| succ.len() == 1)
    }

    /// Same dynamics with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(Mdp { horizon, ..self.clone() })
    }

    /// Same dynamics with a different initial distribution.
    pub fn with_initial(&self, initial: Vec<f64>) -> Result<Self> {
        Mdp::new(self.num_states, self.num_actions, self.transition.clone(), initial, self.horizon)
    }
}

/// Per-state feature vectors `φ(s) ∈ R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FeatureMap {
    dim: usize,
    features: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for FeatureMap {
    type Error = Error;
    fn try_from(features: Vec<Vec<f64>>) -> Result<Self> {
        FeatureMap::new(features)
    }
}

impl From<FeatureMap> for Vec<Vec<f64>> {
    fn from(f: FeatureMap) -> Self {
        f.features
    }
}

impl FeatureMap {
    pub fn new(features: Vec<Vec<f64>>) -> Result<Self> {
        let dim = features.first().map_or(0, |f| f.len());
        if dim == 0 {
            return Err(Error::invalid("feature map needs at least one state and one dimension"));
        }
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::Dimension { expected: dim, got: bad.len() });
        }
        if features.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(FeatureMap { dim, features })
    }

    /// One-hot state indicators, `d = |S|`.
    pub fn indicators(num_states: usize) -> Result<Self> {
        FeatureMap::new(
            (0..num_states)
                .map(|s| (0..num_states).map(|k| if k == s { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, s: usize) -> &[f64] {
        &self.features[s]
    }

    /// `Σ_{t,s,a} ρ^t[s][a] φ(s)`, accumulated from per-state masses.
    pub fn image_of_state_mass(&self, mass: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (s, &m) in mass.iter().enumerate() {
            if m != 0.0 {
                for (o, f) in out.iter_mut().zip(&self.features[s]) {
                    *o += m * f;
                }
            }
        }
        out
    }

    pub(crate) fn check_mdp(&self, mdp: &Mdp) -> Result<()> {
        if self.num_states() != mdp.num_states() {
            return Err(Error::Dimension { expected: mdp.num_states(), got: self.num_states() });
        }
        Ok(())
    }
}

/// Linear reward `r(s) = φ(s)ᵀ w`.
#[derive(Clone, Debug)]
pub struct RewardModel {
    weights: Vec<f64>,
    features: Arc<FeatureMap>,
}

impl RewardModel {
    pub fn new(weights: Vec<f64>, features: Arc<FeatureMap>) -> Result<Self> {
        if weights.len() != features.dim() {
            return Err(Error::Dimension { expected: features.dim(), got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("reward weights must be finite"));
        }
        Ok(RewardModel { weights, features })
    }

    pub fn zero(features: Arc<FeatureMap>) -> Self {
        RewardModel { weights: vec![0.0; features.dim()], features }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn features(&self) -> &Arc<FeatureMap> {
        &self.features
    }

    pub fn state_reward(&self, s: usize) -> f64 {
        dot(self.features.get(s), &self.weights)
    }

    pub fn state_rewards(&self) -> Vec<f64> {
        (0..self.features.num_states()).map(|s| self.state_reward(s)).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        RewardModel {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            features: Arc::clone(&self.features),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
}

/// A length-`T` sequence of `(state, action)` pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    /// Builds a trajectory and checks it against `mdp` (length, support, feasibility).
    pub fn new(steps: Vec<Step>, mdp: &Mdp) -> Result<Self> {
        let traj = Trajectory { steps };
        traj.check(mdp)?;
        Ok(traj)
    }

    pub(crate) fn from_steps_unchecked(steps: Vec<Step>) -> Self {
        Trajectory { steps }
    }

    pub fn from_pairs(pairs: &[(usize, usize)], mdp: &Mdp) -> Result<Self> {
        Trajectory::new(pairs.iter().map(|&(state, action)| Step { state, action }).collect(), mdp)
    }

    /// Follows `actions` from `start` in a deterministic MDP.
    pub fn from_actions(mdp: &Mdp, start: usize, actions: &[usize]) -> Result<Self> {
        let mut steps = Vec::with_capacity(actions.len());
        let mut s = start;
        for (t, &a) in actions.iter().enumerate() {
            if a >= mdp.num_actions() || s >= mdp.num_states() {
                return Err(Error::invalid("action or state out of range"));
            }
            steps.push(Step { state: s, action: a });
            if t + 1 < actions.len() {
                match mdp.successors(s, a) {
                    [(next, _)] => s = *next,
                    _ => return Err(Error::invalid("from_actions needs deterministic transitions")),
                }
            }
        }
        Trajectory::new(steps, mdp)
    }

    pub fn check(&self, mdp: &Mdp) -> Result<()> {
        if self.steps.len() != mdp.horizon() {
            return Err(Error::Dimension { expected: mdp.horizon(), got: self.steps.len() });
        }
        for step in &self.steps {
            if step.state >= mdp.num_states() || step.action >= mdp.num_actions() {
                return Err(Error::invalid(format!("step {step:?} out of range")));
            }
        }
        if mdp.initial()[self.steps[0].state] <= 0.0 {
            return Err(Error::invalid(format!("start state {} outside initial support", self.steps[0].state)));
        }
        for (t, w) in self.steps.windows(2).enumerate() {
            if mdp.prob(w[0].state, w[0].action, w[1].state) <= 0.0 {
                return Err(Error::invalid(format!("infeasible transition at t={t}: {:?} -> {}", w[0], w[1].state)));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.state)
    }

    /// Visit counts per `(s, a)`, flat `[s][a]`.
    pub fn visitation(&self, num_states: usize, num_actions: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states * num_actions];
        for st in &self.steps {
            out[st.state * num_actions + st.action] += 1.0;
        }
        out
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.steps.iter().map(|s| format!("({},{})", s.state, s.action)).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Cumulative state features `Σ_t φ(s_t)`.
pub fn trajectory_features(traj: &Trajectory, fmap: &FeatureMap) -> Result<Vec<f64>> {
    let mut out = vec![0.0; fmap.dim()];
    for s in traj.states() {
        if s >= fmap.num_states() {
            return Err(Error::Dimension { expected: fmap.num_states(), got: s + 1 });
        }
        for (o, f) in out.iter_mut().zip(fmap.get(s)) {
            *o += f;
        }
    }
    Ok(out)
}

/// `φ(τ)ᵀ w`.
pub fn trajectory_return(traj: &Trajectory, reward: &RewardModel) -> Result<f64> {
    Ok(dot(&trajectory_features(traj, reward.features())?, reward.weights()))
}

/// Time-indexed stochastic policy, flat `[t][s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = horizon * num_states * num_actions;
        if probs.len() != expected {
            return Err(Error::Dimension { expected, got: probs.len() });
        }
        let policy = Policy { horizon, num_states, num_actions, probs };
        for t in 0..horizon {
            for s in 0..num_states {
                let row = policy.row(t, s);
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::invalid(format!("policy row (t={t}, s={s}) is not a distribution")));
                }
            }
        }
        Ok(policy)
    }

    pub fn uniform(mdp: &Mdp) -> Self {
        let a = mdp.num_actions();
        Policy {
            horizon: mdp.horizon(),
            num_states: mdp.num_states(),
            num_actions: a,
            probs: vec![1.0 / a as f64; mdp.horizon() * mdp.num_states() * a],
        }
    }

    /// Degenerate policy from `choice[t][s]`.
    pub fn deterministic(num_actions: usize, choice: &[Vec<usize>]) -> Self {
        let horizon = choice.len();
        let num_states = choice.first().map_or(0, |c| c.len());
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (t, row) in choice.iter().enumerate() {
            for (s, &a) in row.iter().enumerate() {
                probs[(t * num_states + s) * num_actions + a] = 1.0;
            }
        }
        Policy { horizon, num_states, num_actions, probs }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.probs[(t * self.num_states + s) * self.num_actions + a]
    }

    pub fn row(&self, t: usize, s: usize) -> &[f64] {
        let start = (t * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// Most likely action at `(t, s)`, lowest index on ties.
    pub fn greedy_action(&self, t: usize, s: usize) -> usize {
        argmax_lowest(self.row(t, s))
    }

    pub(crate) fn check_mdp(&self, mdp: &Mdp) -> Result<()> {
        if self.horizon != mdp.horizon() || self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(Error::invalid("policy shape does not match mdp"));
        }
        Ok(())
    }
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] + TIE_EPS {
            best = i;
        }
    }
    best
}

/// Output of exact backward induction.
#[derive(Clone, Debug)]
pub struct Plan {
    pub policy: Policy,
    /// `Σ_s μ0[s] V^0[s]`.
    pub value: f64,
    /// `V^t[s]`, flat `[t][s]`, for `t in 0..T`.
    pub values: Vec<f64>,
}

impl Plan {
    pub fn state_value(&self, t: usize, s: usize, num_states: usize) -> f64 {
        self.values[t * num_states + s]
    }
}

/// Backward induction for a time-varying state reward `reward(t, s)`.
/// The greedy action is the lowest-index maximizer of `Q^t(s, ·)`.
pub fn plan_with<F: Fn(usize, usize) -> f64>(mdp: &Mdp, reward: F) -> Plan {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut values = vec![0.0; horizon * ns];
    let mut choice = vec![vec![0usize; ns]; horizon];
    let mut next_v = vec![0.0; ns];
    let mut q = vec![0.0; na];
    for t in (0..horizon).rev() {
        for s in 0..ns {
            let r = reward(t, s);
            for (a, qa) in q.iter_mut().enumerate() {
                let future: f64 = mdp.successors(s, a).iter().map(|&(s2, p)| p * next_v[s2]).sum();
                *qa = r + future;
            }
            let a = argmax_lowest(&q);
            choice[t][s] = a;
            values[t * ns + s] = q[a];
        }
        next_v.copy_from_slice(&values[t * ns..(t + 1) * ns]);
    }
    let value = dot(mdp.initial(), &values[..ns]);
    Plan { policy: Policy::deterministic(na, &choice), value, values }
}

/// Optimal time-indexed deterministic policy for `E[Σ_t φ(s_t)ᵀ w]`.
pub fn optimal_policy(mdp: &Mdp, reward: &RewardModel) -> Result<Plan> {
    reward.features().check_mdp(mdp)?;
    let r = reward.state_rewards();
    Ok(plan_with(mdp, |_, s| r[s]))
}

/// `Pr(s_t = s)` under `policy`, flat `[t][s]`.
pub fn state_marginals(mdp: &Mdp, policy: &Policy) -> Vec<f64> {
    let (ns, na, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut out = vec![0.0; horizon * ns];
    out[..ns].copy_from_slice(mdp.initial());
    for t in 0..horizon.saturating_sub(1) {
        let (cur, next) = out.split_at_mut((t + 1) * ns);
        let cur = &cur[t * ns..];
        let next = &mut next[..ns];
        for s in 0..ns {
            if cur[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = cur[s] * policy.prob(t, s, a);
                if w == 0.0 {
                    continue;
                }
                for &(s2, p) in mdp.successors(s, a) {
                    next[s2] += w * p;
                }
            }
        }
    }
    out
}

/// Exact `E_{τ∼π, s0∼μ0}[φ(τ)]` by forward propagation.
pub fn feature_expectations(mdp: &Mdp, policy: &Policy, fmap: &FeatureMap) -> Result<Vec<f64>> {
    policy.check_mdp(mdp)?;
    fmap.check_mdp(mdp)?;
    let ns = mdp.num_states();
    let marg = state_marginals(mdp, policy);
    let mut mass = vec![0.0; ns];
    for t in 0..mdp.horizon() {
        for s in 0..ns {
            mass[s] += marg[t * ns + s];
        }
    }
    Ok(fmap.image_of_state_mass(&mass))
}

/// Per-timestep state-action visitation `ρ^t[s][a]`, flat `[t][s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMeasure {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    rho: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(mdp: &Mdp, rho: Vec<f64>) -> Result<Self> {
        let expected = mdp.horizon() * mdp.num_states() * mdp.num_actions();
        if rho.len() != expected {
            return Err(Error::Dimension { expected, got: rho.len() });
        }
        Ok(OccupancyMeasure {
            horizon: mdp.horizon(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            rho,
        })
    }

    pub fn zeros(mdp: &Mdp) -> Self {
        OccupancyMeasure {
            horizon: mdp.horizon(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            rho: vec![0.0; mdp.horizon() * mdp.num_states() * mdp.num_actions()],
        }
    }

    /// 0/1 occupancy of a single trajectory.
    pub fn from_trajectory(mdp: &Mdp, traj: &Trajectory) -> Result<Self> {
        traj.check(mdp)?;
        let mut occ = OccupancyMeasure::zeros(mdp);
        for (t, st) in traj.steps().iter().enumerate() {
            let i = occ.index(t, st.state, st.action);
            occ.rho[i] = 1.0;
        }
        Ok(occ)
    }

    fn index(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.num_states + s) * self.num_actions + a
    }

    pub fn get(&self, t: usize, s: usize, a: usize) -> f64 {
        self.rho[self.index(t, s, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `Σ_a ρ^t[s][a]`.
    pub fn state_mass(&self, t: usize, s: usize) -> f64 {
        let start = self.index(t, s, 0);
        self.rho[start..start + self.num_actions].iter().sum()
    }

    /// Total mass per state summed over time and actions.
    pub fn total_state_mass(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for t in 0..self.horizon {
            for (s, o) in out.iter_mut().enumerate() {
                *o += self.state_mass(t, s);
            }
        }
        out
    }

    /// `Σ_{t,s,a} ρ^t[s][a] φ(s)`.
    pub fn feature_image(&self, fmap: &FeatureMap) -> Vec<f64> {
        fmap.image_of_state_mass(&self.total_state_mass())
    }

    /// `Σ_{t,s,a} ρ^t[s][a] c(t, s)` for a state-level linear functional.
    pub fn linear_state(&self, c: impl Fn(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                let m = self.state_mass(t, s);
                if m != 0.0 {
                    acc += m * c(t, s);
                }
            }
        }
        acc
    }

    /// Largest absolute violation over the initial, flow, and nonnegativity constraints.
    pub fn flow_violation(&self, mdp: &Mdp) -> f64 {
        let (ns, na) = (self.num_states, self.num_actions);
        let mut worst: f64 = 0.0;
        for &r in &self.rho {
            worst = worst.max(-r);
        }
        for s in 0..ns {
            worst = worst.max((self.state_mass(0, s) - mdp.initial()[s]).abs());
        }
        let mut inflow = vec![0.0; ns];
        for t in 0..self.horizon.saturating_sub(1) {
            inflow.iter_mut().for_each(|x| *x = 0.0);
            for s in 0..ns {
                for a in 0..na {
                    let r = self.get(t, s, a);
                    if r != 0.0 {
                        for &(s2, p) in mdp.successors(s, a) {
                            inflow[s2] += p * r;
                        }
                    }
                }
            }
            for s2 in 0..ns {
                worst = worst.max((self.state_mass(t + 1, s2) - inflow[s2]).abs());
            }
        }
        worst
    }

    /// Largest deviation of `Σ_{s,a} ρ^t[s][a]` from 1 over `t`.
    pub fn normalization_violation(&self) -> f64 {
        (0..self.horizon)
            .map(|t| ((0..self.num_states).map(|s| self.state_mass(t, s)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check(&self, mdp: &Mdp, tol: f64) -> Result<()> {
        let v = self.flow_violation(mdp);
        if v > tol {
            return Err(Error::invalid(format!("occupancy violates flow constraints by {v:.3e}")));
        }
        Ok(())
    }

    /// Convex combination `Σ_k λ_k ρ_k`.
    pub fn mixture(parts: &[(&OccupancyMeasure, f64)]) -> Option<Self> {
        let (first, _) = parts.first()?;
        let mut rho = vec![0.0; first.rho.len()];
        for (occ, w) in parts {
            for (r, x) in rho.iter_mut().zip(&occ.rho) {
                *r += w * x;
            }
        }
        Some(OccupancyMeasure { rho, ..(*first).clone() })
    }
}

/// `ρ^t[s][a] = Pr(s_t = s) π^t(a | s)`.
pub fn occupancy_of_policy(mdp: &Mdp, policy: &Policy) -> Result<OccupancyMeasure> {
    policy.check_mdp(mdp)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let marg = state_marginals(mdp, policy);
    let mut occ = OccupancyMeasure::zeros(mdp);
    for t in 0..mdp.horizon() {
        for s in 0..ns {
            for a in 0..na {
                let i = occ.index(t, s, a);
                occ.rho[i] = marg[t * ns + s] * policy.prob(t, s, a);
            }
        }
    }
    Ok(occ)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Lowest-index argmax of `ρ^t[s][·]` at each visited state.
    #[default]
    Argmax,
    /// Sample `a ∝ ρ^t[s][a]`.
    Sample,
}

#[derive(Clone, Debug)]
pub struct Decoded {
    pub trajectory: Trajectory,
    /// Timesteps where the visited state carried no occupancy mass and a uniform action was used.
    pub fallback_steps: Vec<usize>,
}

/// Rolls one trajectory out of an occupancy measure. Initial and next states are
/// sampled from the MDP; actions follow `mode`.
pub fn decode_trajectory(mdp: &Mdp, occ: &OccupancyMeasure, mode: DecodeMode, seed: u64) -> Result<Decoded> {
    occ.check(mdp, FLOW_TOL)?;
    let mut rng = rng_from_seed(seed);
    let na = mdp.num_actions();
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut fallback_steps = Vec::new();
    let mut s = sample_categorical(mdp.initial(), &mut rng);
    for t in 0..mdp.horizon() {
        let start = occ.index(t, s, 0);
        let row = &occ.rho[start..start + na];
        let a = if row.iter().sum::<f64>() <= ZERO_MASS {
            fallback_steps.push(t);
            sample_categorical(&vec![1.0; na], &mut rng)
        } else {
            match mode {
                DecodeMode::Argmax => argmax_lowest(row),
                DecodeMode::Sample => sample_categorical(row, &mut rng),
            }
        };
        steps.push(Step { state: s, action: a });
        if t + 1 < mdp.horizon() {
            s = sample_categorical(mdp.transition_row(s, a), &mut rng);
        }
    }
    Ok(Decoded { trajectory: Trajectory::from_steps_unchecked(steps), fallback_steps })
}

/// Samples one trajectory from `policy`.
pub fn rollout(mdp: &Mdp, policy: &Policy, seed: u64) -> Result<Trajectory> {
    policy.check_mdp(mdp)?;
    let mut rng = rng_from_seed(seed);
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut s = sample_categorical(mdp.initial(), &mut rng);
    for t in 0..mdp.horizon() {
        let a = sample_categorical(policy.row(t, s), &mut rng);
        steps.push(Step { state: s, action: a });
        if t + 1 < mdp.horizon() {
            s = sample_categorical(mdp.transition_row(s, a), &mut rng);
        }
    }
    Ok(Trajectory::from_steps_unchecked(steps))
}

/// Every feasible trajectory, branching over start states, actions and successors.
/// Fails when the count would exceed `budget`.
pub fn enumerate_trajectories(mdp: &Mdp, budget: usize) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    let mut stack: Vec<Step> = Vec::with_capacity(mdp.horizon());
    fn rec(mdp: &Mdp, s: usize, stack: &mut Vec<Step>, out: &mut Vec<Trajectory>, budget: usize) -> Result<()> {
        for a in 0..mdp.num_actions() {
            stack.push(Step { state: s, action: a });
            if stack.len() == mdp.horizon() {
                if out.len() >= budget {
                    return Err(Error::BudgetExceeded { needed: budget as u128 + 1, budget: budget as u128 });
                }
                out.push(Trajectory::from_steps_unchecked(stack.clone()));
            } else {
                for &(s2, _) in mdp.successors(s, a) {
                    rec(mdp, s2, stack, out, budget)?;
                }
            }
            stack.pop();
        }
        Ok(())
    }
    for (s0, &p) in mdp.initial().iter().enumerate() {
        if p > 0.0 {
            rec(mdp, s0, &mut stack, &mut out, budget)?;
        }
    }
    Ok(out)
}

/// Probability of `traj` under `policy` and the MDP dynamics.
pub fn trajectory_probability(mdp: &Mdp, policy: &Policy, traj: &Trajectory) -> f64 {
    let steps = traj.steps();
    let mut p = mdp.initial()[steps[0].state];
    for (t, st) in steps.iter().enumerate() {
        p *= policy.prob(t, st.state, st.action);
        if let Some(next) = steps.get(t + 1) {
            p *= mdp.prob(st.state, st.action, next.state);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 3-state chain, actions {left, right}, start at 0.
    fn chain(horizon: usize) -> Mdp {
        Mdp::deterministic(&[vec![0, 1], vec![0, 2], vec![1, 2]], vec![1.0, 0.0, 0.0], horizon).unwrap()
    }

    fn two_state_symmetric(horizon: usize) -> Mdp {
        // Each action moves to either state with probability 1/2.
        Mdp::new(2, 2, vec![0.5; 8], vec![0.5, 0.5], horizon).unwrap()
    }

    #[test]
    fn validate_accepts_stochastic_rows() {
        assert!(two_state_symmetric(3).validate().is_empty());
    }

    #[test]
    fn validate_names_the_bad_row() {
        let mut p = vec![0.5; 8];
        p[0] = 0.4;
        let mdp = Mdp::new(2, 2, p, vec![0.5, 0.5], 3).unwrap();
        let report = mdp.validate();
        assert_eq!(report.len(), 1);
        match &report[0] {
            Violation::RowSum { state: 0, action: 0, sum } => assert!((sum - 0.9).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(mdp.validated().is_err());
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(Mdp::new(1, 1, vec![1.0], vec![1.0], 0).is_err());
    }

    #[test]
    fn features_single_step_and_additivity() {
        let mdp = Mdp::deterministic(&[vec![1], vec![0]], vec![1.0, 0.0], 1).unwrap();
        let fmap = FeatureMap::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let t = Trajectory::from_pairs(&[(0, 0)], &mdp).unwrap();
        assert_eq!(trajectory_features(&t, &fmap).unwrap(), vec![1.0, 0.0]);

        let mdp = Mdp::deterministic(&[vec![0, 1], vec![0, 1]], vec![1.0, 0.0], 3).unwrap();
        let fmap = FeatureMap::new(vec![vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let t = Trajectory::from_actions(&mdp, 0, &[0, 1, 0]).unwrap();
        assert_eq!(trajectory_features(&t, &fmap).unwrap(), vec![1.0, 5.0]);
    }

    #[test]
    fn indicator_features_count_visits() {
        let mdp = chain(3);
        let fmap = FeatureMap::indicators(3).unwrap();
        let t = Trajectory::from_actions(&mdp, 0, &[1, 1, 0]).unwrap();
        // visits 0, 1, 2
        assert_eq!(trajectory_features(&t, &fmap).unwrap(), vec![1.0, 1.0, 1.0]);
        let t = Trajectory::from_actions(&mdp, 0, &[0, 1, 0]).unwrap();
        // visits 0, 0, 1
        assert_eq!(trajectory_features(&t, &fmap).unwrap(), vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn trajectory_checks_support_and_feasibility() {
        let mdp = chain(2);
        assert!(Trajectory::from_pairs(&[(1, 0), (0, 0)], &mdp).is_err());
        assert!(Trajectory::from_pairs(&[(0, 0), (2, 0)], &mdp).is_err());
        assert!(Trajectory::from_pairs(&[(0, 1)], &mdp).is_err());
        assert!(Trajectory::from_pairs(&[(0, 1), (1, 0)], &mdp).is_ok());
    }

    #[test]
    fn returns_scale_with_visits() {
        let mdp = chain(4);
        let fmap = Arc::new(FeatureMap::indicators(3).unwrap());
        let t = Trajectory::from_actions(&mdp, 0, &[0, 0, 1, 0]).unwrap();
        let zero = RewardModel::zero(Arc::clone(&fmap));
        assert_eq!(trajectory_return(&t, &zero).unwrap(), 0.0);
        let r = RewardModel::new(vec![2.5, 0.0, 0.0], fmap).unwrap();
        assert_eq!(trajectory_return(&t, &r).unwrap(), 3.0 * 2.5);
    }

    #[test]
    fn zero_reward_plan_takes_lowest_action() {
        let mdp = chain(4);
        let fmap = Arc::new(FeatureMap::indicators(3).unwrap());
        let plan = optimal_policy(&mdp, &RewardModel::zero(fmap)).unwrap();
        assert_eq!(plan.value, 0.0);
        for t in 0..4 {
            for s in 0..3 {
                assert_eq!(plan.policy.greedy_action(t, s), 0);
            }
        }
    }

    #[test]
    fn single_state_value_is_forced() {
        let mdp = Mdp::new(1, 2, vec![1.0, 1.0], vec![1.0], 5).unwrap();
        let fmap = Arc::new(FeatureMap::new(vec![vec![2.0, -1.0]]).unwrap());
        let r = RewardModel::new(vec![0.5, 3.0], fmap).unwrap();
        let plan = optimal_policy(&mdp, &r).unwrap();
        assert!((plan.value - 5.0 * (1.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn chain_plan_matches_action_sequence_enumeration() {
        for horizon in 1..=5 {
            let mdp = chain(horizon);
            let fmap = Arc::new(FeatureMap::indicators(3).unwrap());
            let r = RewardModel::new(vec![0.0, 0.0, 1.0], fmap).unwrap();
            let plan = optimal_policy(&mdp, &r).unwrap();
            // brute force over 2^T action sequences
            let mut best = f64::NEG_INFINITY;
            for code in 0..(1usize << horizon) {
                let actions: Vec<usize> = (0..horizon).map(|k| (code >> k) & 1).collect();
                let t = Trajectory::from_actions(&mdp, 0, &actions).unwrap();
                best = best.max(trajectory_return(&t, &r).unwrap());
            }
            assert!((plan.value - best).abs() < 1e-12, "T={horizon}");
            if horizon >= 3 {
                assert_eq!(plan.policy.greedy_action(0, 0), 1);
            }
        }
    }

    #[test]
    fn deterministic_expectations_equal_the_path() {
        let mdp = chain(5);
        let fmap = Arc::new(FeatureMap::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 3.0]]).unwrap());
        let r = RewardModel::new(vec![0.0, 1.0], Arc::clone(&fmap)).unwrap();
        let plan = optimal_policy(&mdp, &r).unwrap();
        let path = rollout(&mdp, &plan.policy, 0).unwrap();
        let e = feature_expectations(&mdp, &plan.policy, &fmap).unwrap();
        assert_eq!(e, trajectory_features(&path, &fmap).unwrap());
    }

    #[test]
    fn uniform_policy_on_symmetric_mdp_splits_evenly() {
        let mdp = two_state_symmetric(6);
        let fmap = FeatureMap::indicators(2).unwrap();
        let e = feature_expectations(&mdp, &Policy::uniform(&mdp), &fmap).unwrap();
        assert!((e[0] - 3.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_everything_gives_flat_occupancy() {
        let (ns, na) = (3, 2);
        let p = vec![1.0 / ns as f64; ns * na * ns];
        let mdp = Mdp::new(ns, na, p, vec![1.0 / 3.0; 3], 4).unwrap();
        let occ = occupancy_of_policy(&mdp, &Policy::uniform(&mdp)).unwrap();
        for &r in occ.as_slice() {
            assert!((r - 1.0 / 6.0).abs() < 1e-12);
        }
        assert!(occ.flow_violation(&mdp) < 1e-12);
        assert!(occ.normalization_violation() < 1e-12);
    }

    #[test]
    fn path_occupancy_is_binary_and_decodes_back() {
        let mdp = chain(4);
        let t = Trajectory::from_actions(&mdp, 0, &[1, 0, 1, 1]).unwrap();
        let occ = OccupancyMeasure::from_trajectory(&mdp, &t).unwrap();
        assert!(occ.as_slice().iter().all(|&r| r == 0.0 || r == 1.0));
        assert!(occ.flow_violation(&mdp) < 1e-12);
        let d = decode_trajectory(&mdp, &occ, DecodeMode::Argmax, 9).unwrap();
        assert_eq!(d.trajectory, t);
        assert!(d.fallback_steps.is_empty());
    }

    #[test]
    fn decoding_rejects_infeasible_occupancy() {
        let mdp = chain(2);
        let occ = OccupancyMeasure::zeros(&mdp);
        assert!(decode_trajectory(&mdp, &occ, DecodeMode::Argmax, 0).is_err());
    }

    #[test]
    fn enumeration_respects_budget() {
        let mdp = chain(3);
        assert_eq!(enumerate_trajectories(&mdp, 100).unwrap().len(), 8);
        assert!(matches!(enumerate_trajectories(&mdp, 7), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn mdp_round_trips_through_json() {
        let mdp = two_state_symmetric(2);
        let text = serde_json::to_string(&mdp).unwrap();
        let back: Mdp = serde_json::from_str(&text).unwrap();
        assert_eq!(back.transition_row(1, 1), mdp.transition_row(1, 1));
        assert!(serde_json::from_str::<Mdp>(r#"{"transition":[[[0.9]]],"initial":[1.0],"horizon":1}"#).is_err());
    }
}

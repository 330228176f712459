//! Honesty thresholds for collegial mechanisms and an exhaustive
//! straightforwardness check on tiny MDPs.
//!
//! A demonstrator's utility is `β R_i(τ_i) + E R_i(g(τ_i, τ_{−i}))`: the direct
//! reward of their own demonstration plus what the mechanism `g` produces
//! for them. A mechanism is straightforward for human `i` when some
//! demonstration is a best response against every choice of the others.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{fit_reward, DemonstrationSet, FitConfig};
use crate::mdp::{enumerate_trajectories, occupancy_of_policy, optimal_policy, FeatureMap, Mdp, RewardModel, Trajectory};

/// Tabular reward `R(s, a)`, flat `[s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn new(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension { expected: num_states * num_actions, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reward table entries must be finite"));
        }
        Ok(RewardTable { num_states, num_actions, values })
    }

    /// `R(s, a) = φ(s)ᵀ w` for every action.
    pub fn from_model(model: &RewardModel, num_actions: usize) -> Self {
        let values = model.state_rewards().into_iter().flat_map(|r| std::iter::repeat_n(r, num_actions)).collect();
        RewardTable { num_states: model.features().num_states(), num_actions, values }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn trajectory_return(&self, traj: &Trajectory) -> f64 {
        traj.steps().iter().map(|st| self.get(st.state, st.action)).sum()
    }

    /// `Σ_{s,a} visitation[s][a] R(s, a)`.
    pub fn expected(&self, visitation: &[f64]) -> f64 {
        self.values.iter().zip(visitation).map(|(r, v)| r * v).sum()
    }
}

#[derive(Clone, Debug)]
pub struct RewardProfile {
    rewards: Vec<RewardTable>,
    integer_valued: bool,
}

impl RewardProfile {
    /// With `integer_valued`, every entry must be a nonnegative integer.
    pub fn new(rewards: Vec<RewardTable>, integer_valued: bool) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::invalid("profile needs at least one human"));
        }
        let shape = (rewards[0].num_states, rewards[0].num_actions);
        if rewards.iter().any(|r| (r.num_states, r.num_actions) != shape) {
            return Err(Error::invalid("reward tables differ in shape"));
        }
        if integer_valued {
            for (i, r) in rewards.iter().enumerate() {
                if r.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::invalid(format!("human {i} has a non-integer or negative reward")));
                }
            }
        }
        Ok(RewardProfile { rewards, integer_valued })
    }

    pub fn rewards(&self) -> &[RewardTable] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn integer_valued(&self) -> bool {
        self.integer_valued
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollegialityReport {
    /// `M = max_{i,s,a} R_i(s, a)`.
    pub max_reward: f64,
    /// `γ = min_i γ_i`.
    pub gamma_gap: f64,
    /// `β > M` suffices for integer rewards.
    pub threshold_integer: f64,
    /// `β > M / γ` suffices for real rewards.
    pub threshold_real: f64,
    /// `γ_i = min {R*_i − R_i(s,a) : R_i(s,a) < R*_i}`.
    pub per_human_gaps: Vec<f64>,
}

impl CollegialityReport {
    /// The applicable bound: `M` for integer profiles, `M/γ` otherwise.
    pub fn threshold(&self, integer_valued: bool) -> f64 {
        if integer_valued {
            self.threshold_integer
        } else {
            self.threshold_real
        }
    }
}

pub fn compute_thresholds(profile: &RewardProfile) -> Result<CollegialityReport> {
    let max_reward = profile.rewards.iter().flat_map(|r| r.values.iter().cloned()).fold(f64::NEG_INFINITY, f64::max);
    let mut per_human_gaps = Vec::with_capacity(profile.len());
    for (i, r) in profile.rewards.iter().enumerate() {
        let best = r.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gap = r.values.iter().filter(|v| **v < best).map(|v| best - v).fold(f64::INFINITY, f64::min);
        if !gap.is_finite() {
            return Err(Error::ConstantReward(i));
        }
        per_human_gaps.push(gap);
    }
    let gamma_gap = per_human_gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CollegialityReport {
        max_reward,
        gamma_gap,
        threshold_integer: max_reward,
        threshold_real: max_reward / gamma_gap,
        per_human_gaps,
    })
}

/// What the robot does with a demonstration profile: expected per-`(s, a)`
/// visit counts of its output, and the lottery when it is a finite one.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismOutcome {
    pub visitation: Vec<f64>,
    pub lottery: Vec<(f64, Trajectory)>,
}

impl MechanismOutcome {
    pub fn from_lottery(mdp: &Mdp, lottery: Vec<(f64, Trajectory)>) -> Self {
        let mut visitation = vec![0.0; mdp.num_states() * mdp.num_actions()];
        for (p, t) in &lottery {
            for st in t.steps() {
                visitation[st.state * mdp.num_actions() + st.action] += p;
            }
        }
        MechanismOutcome { visitation, lottery }
    }

    pub fn expected_reward(&self, reward: &RewardTable) -> f64 {
        reward.expected(&self.visitation)
    }
}

/// A game form: demonstrations in, (a lottery over) robot behavior out.
pub trait Mechanism: Sync {
    fn name(&self) -> &str;
    fn outcome(&self, mdp: &Mdp, demos: &[Trajectory]) -> Result<MechanismOutcome>;
}

/// Maximum-entropy feature matching on the pooled demonstrations, followed by
/// the robot's hard-argmax plan.
pub struct FeatureMatching {
    pub features: Arc<FeatureMap>,
    pub fit: FitConfig,
}

impl Mechanism for FeatureMatching {
    fn name(&self) -> &str {
        "feature-matching"
    }

    fn outcome(&self, mdp: &Mdp, demos: &[Trajectory]) -> Result<MechanismOutcome> {
        let set = DemonstrationSet::new(mdp, &self.features, demos.to_vec())?;
        let fit = fit_reward(&set, &self.fit)?;
        let plan = optimal_policy(mdp, &fit.reward(&self.features)?)?;
        let occ = occupancy_of_policy(mdp, &plan.policy)?;
        let na = mdp.num_actions();
        let mut visitation = vec![0.0; mdp.num_states() * na];
        for t in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                for a in 0..na {
                    visitation[s * na + a] += occ.get(t, s, a);
                }
            }
        }
        Ok(MechanismOutcome { visitation, lottery: Vec::new() })
    }
}

/// The robot replays the most demonstrated trajectory, uniform over ties.
pub struct TrajectoryPlurality;

impl Mechanism for TrajectoryPlurality {
    fn name(&self) -> &str {
        "trajectory-plurality"
    }

    fn outcome(&self, mdp: &Mdp, demos: &[Trajectory]) -> Result<MechanismOutcome> {
        if demos.is_empty() {
            return Err(Error::invalid("no demonstrations"));
        }
        let mut counts: Vec<(&Trajectory, usize)> = Vec::new();
        for d in demos {
            match counts.iter_mut().find(|(t, _)| *t == d) {
                Some((_, c)) => *c += 1,
                None => counts.push((d, 1)),
            }
        }
        let top = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
        let winners: Vec<&Trajectory> = counts.iter().filter(|(_, c)| *c == top).map(|(t, _)| *t).collect();
        let p = 1.0 / winners.len() as f64;
        Ok(MechanismOutcome::from_lottery(mdp, winners.into_iter().map(|t| (p, t.clone())).collect()))
    }
}

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// Mechanism outcomes for every joint demonstration profile on a tiny MDP,
/// computed once and reused across humans and values of `β`.
pub struct OutcomeTable {
    trajectories: Vec<Trajectory>,
    num_humans: usize,
    outcomes: Vec<MechanismOutcome>,
}

impl OutcomeTable {
    pub fn build(mdp: &Mdp, mechanism: &dyn Mechanism, num_humans: usize, budget: u128) -> Result<Self> {
        if num_humans == 0 {
            return Err(Error::invalid("need at least one human"));
        }
        let trajectories = enumerate_trajectories(mdp, budget.min(usize::MAX as u128) as usize)?;
        let n = trajectories.len() as u128;
        let needed = n.checked_pow(num_humans as u32).unwrap_or(u128::MAX);
        if needed > budget {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let outcomes = (0..needed as usize)
            .into_par_iter()
            .map(|code| {
                let demos: Vec<Trajectory> = decode_profile(code, trajectories.len(), num_humans)
                    .into_iter()
                    .map(|k| trajectories[k].clone())
                    .collect();
                mechanism.outcome(mdp, &demos)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OutcomeTable { trajectories, num_humans, outcomes })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn num_humans(&self) -> usize {
        self.num_humans
    }

    /// Outcome when human `h` demonstrates `trajectories[choice[h]]`.
    pub fn outcome(&self, choice: &[usize]) -> &MechanismOutcome {
        &self.outcomes[encode_profile(choice, self.trajectories.len())]
    }

    /// Exhaustive straightforwardness check for `human` at `beta`.
    pub fn check(&self, profile: &RewardProfile, human: usize, beta: f64) -> Result<StraightforwardReport> {
        if profile.len() != self.num_humans || human >= self.num_humans {
            return Err(Error::invalid("profile does not match the outcome table"));
        }
        let reward = &profile.rewards[human];
        let n = self.trajectories.len();
        let own: Vec<f64> = self.trajectories.iter().map(|t| reward.trajectory_return(t)).collect();
        let num_others = n.pow(self.num_humans as u32 - 1);

        let best_sets: Vec<Vec<bool>> = (0..num_others)
            .into_par_iter()
            .map(|code| {
                let mut choice = decode_profile(code, n, self.num_humans - 1);
                choice.insert(human, 0);
                let vals: Vec<f64> = (0..n)
                    .map(|k| {
                        choice[human] = k;
                        beta * own[k] + self.outcome(&choice).expected_reward(reward)
                    })
                    .collect();
                let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let tol = 1e-9 * (1.0 + best.abs());
                vals.iter().map(|v| *v >= best - tol).collect()
            })
            .collect();

        // Trajectories the human values equally are interchangeable: straightforwardness
        // asks for a return level that is a best response against every opponent profile.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| own[*a].total_cmp(&own[*b]));
        let mut class = vec![0; n];
        let mut levels: Vec<f64> = Vec::new();
        for &k in &order {
            match levels.last() {
                Some(&l) if own[k] - l <= 1e-9 * (1.0 + l.abs()) => {}
                _ => levels.push(own[k]),
            }
            class[k] = levels.len() - 1;
        }
        let class_sets: Vec<Vec<bool>> = best_sets
            .iter()
            .map(|set| {
                let mut c = vec![false; levels.len()];
                (0..n).filter(|k| set[*k]).for_each(|k| c[class[k]] = true);
                c
            })
            .collect();

        let mut common = vec![true; n];
        let mut common_levels = vec![true; levels.len()];
        let mut broke_at = None;
        for (j, (set, cset)) in best_sets.iter().zip(&class_sets).enumerate() {
            common.iter_mut().zip(set).for_each(|(c, b)| *c &= *b);
            common_levels.iter_mut().zip(cset).for_each(|(c, b)| *c &= *b);
            if broke_at.is_none() && !common_levels.iter().any(|c| *c) {
                broke_at = Some(j);
            }
        }
        let dominant: Vec<usize> = (0..n).filter(|k| common[*k]).collect();
        let dominant_returns: Vec<f64> = (0..levels.len()).filter(|c| common_levels[*c]).map(|c| levels[c]).collect();
        let witness = broke_at.map(|k| {
            let disjoint = (0..k).find(|&j| !class_sets[j].iter().zip(&class_sets[k]).any(|(a, b)| *a && *b));
            let others = |code: usize| decode_profile(code, n, self.num_humans - 1);
            let members = |code: usize| (0..n).filter(|i| best_sets[code][*i]).collect::<Vec<_>>();
            Witness {
                first_others: disjoint.map(others),
                first_best: disjoint.map(members),
                second_others: others(k),
                second_best: members(k),
            }
        });
        Ok(StraightforwardReport {
            straightforward: !dominant_returns.is_empty(),
            dominant,
            dominant_returns,
            witness,
            evaluated_pairs: (num_others * n) as u128,
        })
    }
}

fn decode_profile(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(code % base);
        code /= base;
    }
    out
}

fn encode_profile(choice: &[usize], base: usize) -> usize {
    choice.iter().rev().fold(0, |acc, &k| acc * base + k)
}

/// Opponent profiles (indices into the enumerated trajectories) whose best-response
/// sets share no own-return level. `first_*` is `None` when no single earlier profile is
/// disjoint from the second and only the running intersection became empty.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub first_others: Option<Vec<usize>>,
    pub first_best: Option<Vec<usize>>,
    pub second_others: Vec<usize>,
    pub second_best: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StraightforwardReport {
    /// Some own-return level is a best response against every opponent profile.
    pub straightforward: bool,
    /// Demonstrations that are best responses against every opponent profile.
    /// Can be empty while `straightforward` holds, when the mechanism separates
    /// demonstrations the human values equally.
    pub dominant: Vec<usize>,
    pub dominant_returns: Vec<f64>,
    pub witness: Option<Witness>,
    pub evaluated_pairs: u128,
}

/// Enumerates every demonstration of `human` against every choice of the others.
pub fn brute_force_straightforward(
    mdp: &Mdp,
    profile: &RewardProfile,
    mechanism: &dyn Mechanism,
    human: usize,
    beta: f64,
    budget: u128,
) -> Result<StraightforwardReport> {
    OutcomeTable::build(mdp, mechanism, profile.len(), budget)?.check(profile, human, beta)
}

/// Outcome-table cache keyed by mechanism name, for sweeping several `β`.
#[derive(Default)]
pub struct TableCache {
    tables: HashMap<String, OutcomeTable>,
}

impl TableCache {
    pub fn get_or_build(&mut self, mdp: &Mdp, mechanism: &dyn Mechanism, num_humans: usize, budget: u128) -> Result<&OutcomeTable> {
        let key = format!("{}/{}", mechanism.name(), num_humans);
        if !self.tables.contains_key(&key) {
            let table = OutcomeTable::build(mdp, mechanism, num_humans, budget)?;
            self.tables.insert(key.clone(), table);
        }
        Ok(&self.tables[&key])
    }
}

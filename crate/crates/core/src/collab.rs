//! Stateless sequential collaboration: for `M` rounds each human picks an arm,
//! novel picks score `1/t`, and the robot either stops early with a uniform
//! arm or finally samples an arm in proportion to its score.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::util::{rng_from_seed, sample_categorical, SimRng};

/// `R_h(a) ≥ 0`, one row per human, one column per arm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatelessProfile {
    rewards: Vec<Vec<f64>>,
}

impl StatelessProfile {
    pub fn new(rewards: Vec<Vec<f64>>) -> Result<Self> {
        let m = rewards.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::invalid("profile needs at least one human and one arm"));
        }
        if let Some(row) = rewards.iter().find(|r| r.len() != m) {
            return Err(Error::Dimension { expected: m, got: row.len() });
        }
        if rewards.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("rewards must be finite and nonnegative"));
        }
        if rewards.iter().flatten().all(|x| *x == 0.0) {
            return Err(Error::invalid("profile has no positive reward"));
        }
        Ok(StatelessProfile { rewards })
    }

    /// Scales every entry so the largest is 1.
    pub fn normalized(&self) -> Self {
        let max = self.rewards.iter().flatten().cloned().fold(0.0, f64::max);
        StatelessProfile { rewards: self.rewards.iter().map(|r| r.iter().map(|x| x / max).collect()).collect() }
    }

    pub fn num_humans(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_arms(&self) -> usize {
        self.rewards[0].len()
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.rewards[h]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn welfare(&self, arm: usize) -> f64 {
        self.rewards.iter().map(|r| r[arm]).sum()
    }

    pub fn optimal_welfare(&self) -> f64 {
        (0..self.num_arms()).map(|a| self.welfare(a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Truthful-greedy agents with the default discount.
    pub fn truthful_agents(&self) -> Vec<HumanAgent> {
        self.rewards.iter().map(|r| HumanAgent::new(r.clone(), DEFAULT_DISCOUNT, Behavior::TruthfulGreedy).unwrap()).collect()
    }
}

pub const DEFAULT_DISCOUNT: f64 = 0.9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    /// Best remaining arm each round.
    #[default]
    TruthfulGreedy,
    /// Always names the top arm; repeats execute nothing.
    FavoriteOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HumanAgent {
    pub reward: Vec<f64>,
    pub discount: f64,
    pub behavior: Behavior,
}

impl HumanAgent {
    pub fn new(reward: Vec<f64>, discount: f64, behavior: Behavior) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!("discount must lie in (0, 1), got {discount}")));
        }
        Ok(HumanAgent { reward, discount, behavior })
    }

    fn choose(&self, remaining: &[bool]) -> usize {
        match self.behavior {
            Behavior::TruthfulGreedy => truthful_greedy_policy(self, remaining),
            Behavior::FavoriteOnly => truthful_greedy_policy(self, &vec![true; remaining.len()]),
        }
    }
}

/// Highest-reward arm still in `remaining`, lowest index on ties.
pub fn truthful_greedy_policy(agent: &HumanAgent, remaining: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (a, ok) in remaining.iter().enumerate() {
        if *ok && best.is_none_or(|b| agent.reward[a] > agent.reward[b]) {
            best = Some(a);
        }
    }
    best.expect("truthful_greedy_policy needs a remaining arm")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    /// 1-based, as in the scoring rule.
    pub round: usize,
    pub human: usize,
    pub arm: usize,
    pub novel: bool,
    /// `1/t` for novel picks, zero otherwise.
    #[serde(serialize_with = "ratio_as_string")]
    pub increment: Ratio<u64>,
}

fn ratio_as_string<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismTrace {
    pub num_arms: usize,
    pub num_humans: usize,
    pub records: Vec<RoundRecord>,
    /// Round after which the uniform early stop fired.
    pub early_stop: Option<usize>,
    /// Set when the final scores were all zero and the lottery fell back to uniform.
    pub uniform_fallback: bool,
    pub scores: Vec<f64>,
    pub final_lottery: Vec<f64>,
    pub robot_arm: usize,
    /// Reward each human collected from executed arms.
    pub human_rewards: Vec<f64>,
}

impl MechanismTrace {
    /// Scores rebuilt from the records in exact arithmetic.
    pub fn exact_scores(&self) -> Vec<BigRational> {
        let mut scores = vec![BigRational::zero(); self.num_arms];
        for r in &self.records {
            scores[r.arm] += BigRational::new(BigInt::from(*r.increment.numer()), BigInt::from(*r.increment.denom()));
        }
        scores
    }

    /// The lottery implied by the exact scores and the stopping branch.
    pub fn exact_lottery(&self) -> Vec<BigRational> {
        let uniform = || vec![BigRational::new(1.into(), BigInt::from(self.num_arms)); self.num_arms];
        if self.early_stop.is_some() {
            return uniform();
        }
        let scores = self.exact_scores();
        let total: BigRational = scores.iter().sum();
        if total.is_zero() {
            return uniform();
        }
        scores.into_iter().map(|s| s / &total).collect()
    }

    /// Checks the trace invariants, exactly where arithmetic allows.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let mut used = vec![vec![false; self.num_arms]; self.num_humans];
        for r in &self.records {
            let expected = if r.novel { Ratio::new(1, r.round as u64) } else { Ratio::zero() };
            if r.increment != expected {
                return Err(format!("round {} human {}: increment {} instead of {}", r.round, r.human, r.increment, expected));
            }
            if r.novel == used[r.human][r.arm] {
                return Err(format!("round {} human {}: novelty flag wrong for arm {}", r.round, r.human, r.arm));
            }
            used[r.human][r.arm] = true;
        }
        let exact = self.exact_scores();
        for (a, (s, e)) in self.scores.iter().zip(&exact).enumerate() {
            let e = e.to_f64().unwrap_or(f64::NAN);
            if (s - e).abs() > 1e-12 * e.max(1.0) {
                return Err(format!("arm {a}: running score {s} differs from exact {e}"));
            }
        }
        for (a, (p, e)) in self.final_lottery.iter().zip(self.exact_lottery()).enumerate() {
            let e = e.to_f64().unwrap_or(f64::NAN);
            if (p - e).abs() > 1e-12 {
                return Err(format!("arm {a}: lottery {p} differs from exact {e}"));
            }
        }
        Ok(())
    }
}

/// `1 − 2^(−1/M)`: surviving all `M` checks has probability one half.
pub fn stop_probability(num_arms: usize) -> f64 {
    -(-std::f64::consts::LN_2 / num_arms as f64).exp_m1()
}

pub fn run_mechanism(profile: &StatelessProfile, agents: &[HumanAgent], seed: u64) -> Result<MechanismTrace> {
    run_with_rng(profile, agents, &mut rng_from_seed(seed))
}

fn check_agents(profile: &StatelessProfile, agents: &[HumanAgent]) -> Result<()> {
    if agents.len() != profile.num_humans() {
        return Err(Error::Dimension { expected: profile.num_humans(), got: agents.len() });
    }
    if let Some(a) = agents.iter().find(|a| a.reward.len() != profile.num_arms()) {
        return Err(Error::Dimension { expected: profile.num_arms(), got: a.reward.len() });
    }
    Ok(())
}

pub fn run_with_rng(profile: &StatelessProfile, agents: &[HumanAgent], rng: &mut SimRng) -> Result<MechanismTrace> {
    check_agents(profile, agents)?;
    let (m, n) = (profile.num_arms(), profile.num_humans());
    let p_stop = stop_probability(m);
    let mut remaining = vec![vec![true; m]; n];
    let mut scores = vec![0.0; m];
    let mut human_rewards = vec![0.0; n];
    let mut records = Vec::with_capacity(m * n);
    let mut early_stop = None;

    for t in 1..=m {
        for (h, agent) in agents.iter().enumerate() {
            assert!(remaining[h].iter().any(|r| *r), "human {h} ran out of arms at round {t}");
            let arm = agent.choose(&remaining[h]);
            let novel = remaining[h][arm];
            let increment = if novel { Ratio::new(1, t as u64) } else { Ratio::zero() };
            if novel {
                remaining[h][arm] = false;
                scores[arm] += 1.0 / t as f64;
                human_rewards[h] += profile.row(h)[arm];
            }
            records.push(RoundRecord { round: t, human: h, arm, novel, increment });
        }
        if rng.random::<f64>() < p_stop {
            early_stop = Some(t);
            break;
        }
    }

    let total: f64 = scores.iter().sum();
    let uniform_fallback = early_stop.is_none() && total == 0.0;
    let final_lottery = if early_stop.is_some() || uniform_fallback {
        vec![1.0 / m as f64; m]
    } else {
        scores.iter().map(|s| s / total).collect()
    };
    let robot_arm = if early_stop.is_some() || uniform_fallback {
        rng.random_range(0..m)
    } else {
        sample_categorical(&final_lottery, rng)
    };
    Ok(MechanismTrace {
        num_arms: m,
        num_humans: n,
        records,
        early_stop,
        uniform_fallback,
        scores,
        final_lottery,
        robot_arm,
        human_rewards,
    })
}

/// Exact expected robot welfare for agents whose picks ignore the robot's coin:
/// half the mass is uniform, half follows the final scores.
pub fn expected_welfare(profile: &StatelessProfile, agents: &[HumanAgent]) -> Result<f64> {
    check_agents(profile, agents)?;
    let m = profile.num_arms();
    let mut remaining = vec![vec![true; m]; agents.len()];
    let mut scores = vec![0.0; m];
    for t in 1..=m {
        for (h, agent) in agents.iter().enumerate() {
            let arm = agent.choose(&remaining[h]);
            if remaining[h][arm] {
                remaining[h][arm] = false;
                scores[arm] += 1.0 / t as f64;
            }
        }
    }
    let uniform: f64 = (0..m).map(|a| profile.welfare(a)).sum::<f64>() / m as f64;
    let total: f64 = scores.iter().sum();
    let scored = if total == 0.0 { uniform } else { (0..m).map(|a| scores[a] / total * profile.welfare(a)).sum() };
    Ok(0.5 * uniform + 0.5 * scored)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProfileFamily {
    /// Rows drawn from a flat Dirichlet.
    Dirichlet { count: usize, seed: u64 },
    /// Every human wants arm 0 only.
    Unanimous,
    /// A shared compromise arm worth 1/2 to everyone, each human's favourite elsewhere.
    Antagonistic,
    /// The welfare-optimal arm is valued by one human and ranked last by the rest.
    SingleSupporter,
}

impl ProfileFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileFamily::Dirichlet { .. } => "dirichlet",
            ProfileFamily::Unanimous => "unanimous",
            ProfileFamily::Antagonistic => "antagonistic",
            ProfileFamily::SingleSupporter => "single-supporter",
        }
    }

    pub fn generate(&self, num_arms: usize, num_humans: usize) -> Result<Vec<StatelessProfile>> {
        let (m, n) = (num_arms, num_humans);
        if m == 0 || n == 0 {
            return Err(Error::invalid("need at least one arm and one human"));
        }
        match *self {
            ProfileFamily::Dirichlet { count, seed } => {
                let mut rng = rng_from_seed(seed);
                (0..count)
                    .map(|_| {
                        let rows = (0..n)
                            .map(|_| {
                                let e: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                                let s: f64 = e.iter().sum();
                                e.into_iter().map(|x| x / s).collect()
                            })
                            .collect();
                        StatelessProfile::new(rows)
                    })
                    .collect()
            }
            ProfileFamily::Unanimous => {
                let row: Vec<f64> = (0..m).map(|a| if a == 0 { 1.0 } else { 0.0 }).collect();
                Ok(vec![StatelessProfile::new(vec![row; n])?])
            }
            ProfileFamily::Antagonistic => {
                if m < 2 {
                    return Ok(Vec::new());
                }
                let rows = (0..n)
                    .map(|h| {
                        let mut r = vec![0.0; m];
                        r[0] = 0.5;
                        r[1 + h % (m - 1)] = 1.0;
                        r
                    })
                    .collect();
                Ok(vec![StatelessProfile::new(rows)?])
            }
            ProfileFamily::SingleSupporter => {
                if m < 2 {
                    return Ok(Vec::new());
                }
                let eps = 1e-3;
                let rows = (0..n)
                    .map(|h| {
                        if h == 0 {
                            (0..m).map(|a| if a == m - 1 { 1.0 } else { 0.0 }).collect()
                        } else {
                            (0..m).map(|a| if a == m - 1 { 0.0 } else { eps * (m - 1 - a) as f64 / m as f64 }).collect()
                        }
                    })
                    .collect();
                Ok(vec![StatelessProfile::new(rows)?])
            }
        }
    }
}

/// The standard adversarial mix: random rows plus the structured families.
pub fn adversarial_families(dirichlet_count: usize, seed: u64) -> Vec<ProfileFamily> {
    vec![
        ProfileFamily::Dirichlet { count: dirichlet_count, seed },
        ProfileFamily::Unanimous,
        ProfileFamily::Antagonistic,
        ProfileFamily::SingleSupporter,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionPoint {
    pub num_arms: usize,
    pub num_humans: usize,
    pub runs: usize,
    /// Max over profiles of optimal welfare over estimated expected welfare.
    pub distortion: f64,
    pub worst_family: String,
    pub worst_index: usize,
    pub profiles: usize,
    /// Profiles skipped because their estimated expected welfare was zero.
    pub excluded: usize,
}

/// Mean robot welfare over `runs` seeded runs.
pub fn estimate_welfare(profile: &StatelessProfile, agents: &[HumanAgent], runs: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for _ in 0..runs {
        total += profile.welfare(run_with_rng(profile, agents, &mut rng)?.robot_arm);
    }
    Ok(total / runs as f64)
}

pub fn empirical_distortion(
    families: &[ProfileFamily],
    num_arms: usize,
    num_humans: usize,
    runs: usize,
    seed: u64,
) -> Result<DistortionPoint> {
    let mut profiles = Vec::new();
    for f in families {
        for (i, p) in f.generate(num_arms, num_humans)?.into_iter().enumerate() {
            profiles.push((f.name(), i, p));
        }
    }
    let ratios = profiles
        .par_iter()
        .enumerate()
        .map(|(k, (_, _, p))| {
            let w = estimate_welfare(p, &p.truthful_agents(), runs, seed.wrapping_add(k as u64))?;
            Ok(if w > 0.0 { Some(p.optimal_welfare() / w) } else { None })
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let excluded = ratios.iter().filter(|r| r.is_none()).count();
    let (worst, distortion) = ratios
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.map(|r| (k, r)))
        .fold((0, f64::NEG_INFINITY), |acc, (k, r)| if r > acc.1 { (k, r) } else { acc });
    if distortion == f64::NEG_INFINITY {
        return Err(Error::invalid("every profile had zero expected welfare"));
    }
    Ok(DistortionPoint {
        num_arms,
        num_humans,
        runs,
        distortion,
        worst_family: profiles[worst].0.to_string(),
        worst_index: profiles[worst].1,
        profiles: profiles.len(),
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionFit {
    /// `b` in `log Δ = a + b log M + ½ log log M`.
    pub exponent: f64,
    pub intercept: f64,
    /// Least-squares `c` in `Δ ≈ c √(M log M)`.
    pub scale: f64,
}

pub fn fit_distortion(points: &[DistortionPoint]) -> Result<DistortionFit> {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.num_arms as f64, p.distortion)).collect();
    if pts.len() < 2 || pts.iter().any(|(m, d)| *m < 2.0 || *d <= 0.0) {
        return Err(Error::invalid("fit needs two or more points with M ≥ 2 and positive distortion"));
    }
    let xs: Vec<f64> = pts.iter().map(|(m, _)| m.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(m, d)| d.ln() - 0.5 * m.ln().ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let g: Vec<f64> = pts.iter().map(|(m, _)| (m * m.ln()).sqrt()).collect();
    let scale = pts.iter().zip(&g).map(|((_, d), g)| d * g).sum::<f64>() / g.iter().map(|g| g * g).sum::<f64>();
    Ok(DistortionFit { exponent, intercept: my - exponent * mx, scale })
}

//! Scenario files and the end-to-end gridworld experiments.
//!
//! A scenario fixes the environment, each human's reward weights, which human
//! demonstrates strategically, the `β` grid and the seeds. Nothing is drawn
//! from the clock, so a scenario plus its seeds determines every output byte.

mod fig1;
mod sweep;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use fig1::{run_fig1, Fig1Artifacts, Fig1Report, Perturbation, Variant};
pub use sweep::{run_beta_sweep, SweepResult, SweepRow, TrajectoryRow};

use crate::best_response::{honesty_crossover, solve_best_response, BestResponseProblem, BestResponseSolution, SolverConfig, TargetMode};
use crate::collegiality::{
    compute_thresholds, CollegialityReport, FeatureMatching, Mechanism, OutcomeTable, RewardProfile, RewardTable, TrajectoryPlurality,
};
use crate::config::{load, EnvSpec};
use crate::error::{Error, Result};
use crate::gridworld::{FeatureChannel, GridWorld};
use crate::inference::{fit_reward, robot_trajectory, DemonstrationSet, FitConfig, FitResult};
use crate::mdp::{optimal_policy, rollout, trajectory_return, FeatureMap, Mdp, RewardModel, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanSpec {
    pub name: String,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub strategic: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub env: EnvSpec,
    pub humans: Vec<HumanSpec>,
    /// Strictly increasing. When absent, derived from the scenario's threshold.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// `β` used for the side-by-side honest/strategic comparison.
    #[serde(default)]
    pub fig1_beta: f64,
    /// `γ` weighting the direct term of the collegial objective.
    #[serde(default = "one")]
    pub discount: f64,
    #[serde(default)]
    pub target_mode: TargetMode,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = load(path)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!("scenario version {} unsupported, expected {SCHEMA_VERSION}", self.version)));
        }
        if self.humans.is_empty() {
            return Err(Error::Config("scenario has no humans".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("scenario needs at least one explicit seed".into()));
        }
        if let Some(b) = &self.betas {
            check_beta_grid(b)?;
        }
        if !(self.fig1_beta >= 0.0 && self.fig1_beta.is_finite()) {
            return Err(Error::Config("fig1_beta must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// An 8×8 deterministic gridworld with horizon 16, starting in the top-right
    /// corner. A 3×3 gold block and a 3×2 silver block overlap in two cells.
    /// H1 wants gold and mildly likes silver; H2 wants silver and mildly
    /// dislikes gold. Honest H2 sits on the overlap, so the robot learns a
    /// taste for both and stays on gold. H2 does better by demonstrating
    /// silver away from gold.
    pub fn default_gridworld() -> Self {
        let gold = (0..9).map(|i| [5 + i % 3, 1 + i / 3]).collect();
        let silver = (0..6).map(|i| [4 + i % 3, 3 + i / 3]).collect();
        Scenario {
            version: SCHEMA_VERSION,
            name: "gold-and-silver".into(),
            env: EnvSpec::Gridworld(GridWorld {
                width: 8,
                height: 8,
                slip: 0.0,
                horizon: 16,
                start: [7, 0],
                channels: vec![
                    FeatureChannel { name: "gold".into(), cells: gold, value: 1.0 },
                    FeatureChannel { name: "silver".into(), cells: silver, value: 1.0 },
                ],
            }),
            humans: vec![
                HumanSpec { name: "H1".into(), weights: vec![1.0, 0.2], strategic: false },
                HumanSpec { name: "H2".into(), weights: vec![-0.2, 1.0], strategic: true },
            ],
            betas: None,
            seeds: vec![0],
            out: default_out(),
            fig1_beta: 0.0,
            discount: 1.0,
            target_mode: TargetMode::Hard,
            solver: SolverConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

fn check_beta_grid(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Config("betas must be finite and nonnegative".into()));
    }
    if b.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("beta grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `0` followed by `count` log-spaced values from `0.1` to `10 · threshold`.
pub fn default_beta_grid(threshold: f64, count: usize) -> Vec<f64> {
    let (lo, hi) = (0.1f64, (10.0 * threshold).max(1.0));
    let mut out = vec![0.0];
    for k in 0..count {
        let f = if count == 1 { 1.0 } else { k as f64 / (count - 1) as f64 };
        out.push(lo * (hi / lo).powf(f));
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdSummary {
    pub report: CollegialityReport,
    pub integer_valued: bool,
    /// `M` for integer profiles, `M/γ` otherwise.
    pub analytic: f64,
    /// Smallest `β` at which the strategic human's best response is honest,
    /// when a strategic human exists and honesty is reached.
    pub surrogate_crossover: Option<f64>,
    /// Largest of the two.
    pub threshold: f64,
}

/// What the robot learned and did with one set of demonstrations.
#[derive(Clone, Debug)]
pub struct RobotOutcome {
    pub fit: FitResult,
    pub trajectory: Trajectory,
}

/// A scenario with its environment built.
pub struct Setup {
    pub scenario: Scenario,
    pub mdp: Mdp,
    pub features: Arc<FeatureMap>,
    pub rewards: Vec<RewardModel>,
}

impl Setup {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let (mdp, fmap) = scenario.env.build()?;
        let features = Arc::new(fmap);
        let rewards = scenario
            .humans
            .iter()
            .map(|h| {
                RewardModel::new(h.weights.clone(), Arc::clone(&features))
                    .map_err(|e| Error::Config(format!("human {}: {e}", h.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Setup { scenario, mdp, features, rewards })
    }

    pub fn num_humans(&self) -> usize {
        self.rewards.len()
    }

    /// Index of the single strategic human.
    pub fn strategic_index(&self) -> Result<usize> {
        let flagged: Vec<usize> = (0..self.num_humans()).filter(|&h| self.scenario.humans[h].strategic).collect();
        match flagged.as_slice() {
            [h] => Ok(*h),
            _ => Err(Error::Config(format!("expected exactly one strategic human, found {}", flagged.len()))),
        }
    }

    pub fn honest_trajectory(&self, human: usize, seed: u64) -> Result<Trajectory> {
        rollout(&self.mdp, &optimal_policy(&self.mdp, &self.rewards[human])?.policy, seed)
    }

    pub fn honest_trajectories(&self, seed: u64) -> Result<Vec<Trajectory>> {
        (0..self.num_humans()).map(|h| self.honest_trajectory(h, seed)).collect()
    }

    pub fn problem<'a>(&'a self, human: usize, others: &[Trajectory], beta: f64) -> Result<BestResponseProblem<'a>> {
        Ok(BestResponseProblem::against(&self.mdp, self.rewards[human].clone(), others)?
            .with_beta(beta)
            .with_discount(self.scenario.discount)
            .with_target_mode(self.scenario.target_mode))
    }

    pub fn best_response(&self, human: usize, others: &[Trajectory], beta: f64, seed: u64) -> Result<BestResponseSolution> {
        let config = SolverConfig { seed, ..self.scenario.solver };
        solve_best_response(&self.problem(human, others, beta)?, &config)
    }

    pub fn robot(&self, demos: &[Trajectory], seed: u64) -> Result<RobotOutcome> {
        let set = DemonstrationSet::new(&self.mdp, &self.features, demos.to_vec())?;
        let fit = fit_reward(&set, &self.scenario.fit)?;
        let trajectory = robot_trajectory(&fit, &self.mdp, &self.features, seed)?;
        Ok(RobotOutcome { fit, trajectory })
    }

    /// Undiscounted return of `traj` for every human.
    pub fn returns(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        self.rewards.iter().map(|r| trajectory_return(traj, r)).collect()
    }

    pub fn reward_profile(&self) -> Result<RewardProfile> {
        let na = self.mdp.num_actions();
        let tables: Vec<RewardTable> = self.rewards.iter().map(|r| RewardTable::from_model(r, na)).collect();
        let integer = tables.iter().all(|t| t.values().iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
        RewardProfile::new(tables, integer)
    }

    /// Analytic thresholds, and the `β` beyond which the strategic human's
    /// best response against honest others is honest.
    pub fn thresholds(&self, seed: u64) -> Result<ThresholdSummary> {
        let profile = self.reward_profile()?;
        let report = compute_thresholds(&profile)?;
        let analytic = report.threshold(profile.integer_valued());
        let surrogate_crossover = match self.strategic_index() {
            Ok(h) => {
                let honest = self.honest_trajectories(seed)?;
                let others: Vec<Trajectory> = honest.into_iter().enumerate().filter(|(k, _)| *k != h).map(|(_, t)| t).collect();
                let beta_max = (100.0 * analytic).max(1e4);
                let config = SolverConfig { seed, ..self.scenario.solver };
                honesty_crossover(&self.problem(h, &others, 0.0)?, beta_max, 1e-3, &config)?
            }
            Err(_) => None,
        };
        let threshold = analytic.max(surrogate_crossover.unwrap_or(analytic));
        Ok(ThresholdSummary { report, integer_valued: profile.integer_valued(), analytic, surrogate_crossover, threshold })
    }

    /// The scenario's grid, or `0` plus 19 log-spaced values up to ten times the threshold.
    pub fn betas(&self, seed: u64) -> Result<Vec<f64>> {
        match &self.scenario.betas {
            Some(b) => Ok(b.clone()),
            None => Ok(default_beta_grid(self.thresholds(seed)?.threshold, 19)),
        }
    }

    /// Exhaustive straightforwardness for every human, `β` and both mechanisms.
    /// Rows carry `None` when the environment is too large to enumerate.
    pub fn straightforward_table(&self, betas: &[f64], budget: u128) -> Result<Vec<StraightforwardRow>> {
        let profile = self.reward_profile()?;
        let feature_matching = FeatureMatching { features: Arc::clone(&self.features), fit: self.scenario.fit };
        let mechanisms: [&dyn Mechanism; 2] = [&feature_matching, &TrajectoryPlurality];
        let mut rows = Vec::new();
        for mech in mechanisms {
            let table = match OutcomeTable::build(&self.mdp, mech, self.num_humans(), budget) {
                Ok(t) => Some(t),
                Err(Error::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
            for h in 0..self.num_humans() {
                for &beta in betas {
                    let report = table.as_ref().map(|t| t.check(&profile, h, beta)).transpose()?;
                    rows.push(StraightforwardRow {
                        mechanism: mech.name().to_string(),
                        human: self.scenario.humans[h].name.clone(),
                        beta,
                        straightforward: report.as_ref().map(|r| r.straightforward),
                        witness: report.and_then(|r| r.witness).map(|w| format!("{w:?}")),
                    });
                }
            }
        }
        Ok(rows)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StraightforwardRow {
    pub mechanism: String,
    pub human: String,
    pub beta: f64,
    /// `None` when the enumeration budget was exceeded.
    pub straightforward: Option<bool>,
    pub witness: Option<String>,
}

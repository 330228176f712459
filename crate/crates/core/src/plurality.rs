//! Three voters, three alternatives, plurality with a uniform random tiebreak.
//!
//! A voter with utility `u` on the 2-simplex who casts vote `v` gets
//! `β u[v] + E_lottery[u]`. A utility is manipulable when no single vote is
//! optimal against every pair of opposing votes.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::util::{rng_from_seed, wilson_interval};

pub const NUM_ALTERNATIVES: usize = 3;
const SUM_TOL: f64 = 1e-12;
const TIE_TOL: f64 = 1e-12;

/// Alternatives are indexed `0..3`.
pub type Vote = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimplexUtility([f64; 3]);

impl SimplexUtility {
    pub fn new(u: [f64; 3]) -> Result<Self> {
        if u.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("utilities must be finite and nonnegative"));
        }
        let sum: f64 = u.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("utilities sum to {sum}, not 1")));
        }
        Ok(SimplexUtility(u))
    }

    pub fn values(&self) -> [f64; 3] {
        self.0
    }

    /// Applies `perm` to the alternatives: the new alternative `perm[k]` is the old `k`.
    pub fn relabel(&self, perm: [usize; 3]) -> Self {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[perm[k]] = self.0[k];
        }
        SimplexUtility(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VoteOutcomeLottery {
    pub probs: [f64; 3],
}

impl VoteOutcomeLottery {
    pub fn expected(&self, u: &SimplexUtility) -> f64 {
        self.probs.iter().zip(u.0).map(|(p, x)| p * x).sum()
    }
}

/// The alternatives with the most votes share the win uniformly.
pub fn plurality_lottery(votes: [Vote; 3]) -> VoteOutcomeLottery {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let winners = counts.iter().filter(|c| **c == top).count() as f64;
    let mut probs = [0.0; 3];
    for k in 0..3 {
        if counts[k] == top {
            probs[k] = 1.0 / winners;
        }
    }
    VoteOutcomeLottery { probs }
}

/// Every vote attaining the maximal payoff, in increasing order.
pub fn best_response_vote(u: &SimplexUtility, others: [Vote; 2], beta: f64) -> Vec<Vote> {
    let payoff: Vec<f64> = (0..3).map(|v| beta * u.0[v] + plurality_lottery([v, others[0], others[1]]).expected(u)).collect();
    let best = payoff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..3).filter(|v| payoff[*v] >= best - TIE_TOL).collect()
}

fn best_response_mask(u: &SimplexUtility, others: [Vote; 2], beta: f64) -> u8 {
    best_response_vote(u, others, beta).into_iter().fold(0, |m, v| m | (1 << v))
}

/// All nine ordered pairs of opposing votes.
pub fn opponent_profiles() -> impl Iterator<Item = [Vote; 2]> {
    (0..3).flat_map(|a| (0..3).map(move |b| [a, b]))
}

pub fn is_manipulable(u: &SimplexUtility, beta: f64) -> bool {
    opponent_profiles().fold(0b111u8, |m, o| m & best_response_mask(u, o, beta)) == 0
}

/// Two opposing profiles whose best-response sets are disjoint, if any exist.
pub fn manipulation_witness(u: &SimplexUtility, beta: f64) -> Option<([Vote; 2], [Vote; 2])> {
    let masks: Vec<([Vote; 2], u8)> = opponent_profiles().map(|o| (o, best_response_mask(u, o, beta))).collect();
    for (i, (a, ma)) in masks.iter().enumerate() {
        for (b, mb) in &masks[i + 1..] {
            if ma & mb == 0 {
                return Some((*a, *b));
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum FractionMethod {
    /// Midpoint rule over the `n²` cells of a barycentric grid with `n` subdivisions per edge.
    ExactMesh { subdivisions: usize },
    /// Uniform Dirichlet(1,1,1) samples.
    MonteCarlo { samples: u64, seed: u64 },
}

impl Default for FractionMethod {
    fn default() -> Self {
        FractionMethod::ExactMesh { subdivisions: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractionEstimate {
    pub beta: f64,
    pub method: FractionMethod,
    pub fraction: f64,
    pub manipulable: u64,
    pub points: u64,
    /// 95% Wilson interval for Monte Carlo; `None` for the mesh.
    pub interval: Option<(f64, f64)>,
    /// Edge length of a mesh cell.
    pub spacing: Option<f64>,
}

pub const MIN_SAMPLES: u64 = 10_000;
const BLOCK: u64 = 4096;

/// Dirichlet(1,1,1) draw via normalized exponentials.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R) -> SimplexUtility {
    let e: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(Exp1));
    let s: f64 = e.iter().sum();
    let mut u = e.map(|x| x / s);
    // keep the sum exact enough for the invariant
    u[2] = (1.0 - u[0] - u[1]).max(0.0);
    SimplexUtility(u)
}

/// Seeded samples with their classification. Samples are drawn in fixed-size
/// blocks with per-block seeds, so the result does not depend on thread count.
pub fn classify_samples(beta: f64, samples: u64, seed: u64) -> Vec<(SimplexUtility, bool)> {
    let blocks = samples.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng_from_seed(seed ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = BLOCK.min(samples - b * BLOCK);
            (0..n)
                .map(|_| {
                    let u = sample_simplex(&mut rng);
                    (u, is_manipulable(&u, beta))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn mesh_points(n: usize) -> Vec<SimplexUtility> {
    let nf = n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n - i {
            // upward cell with corners (i,j), (i+1,j), (i,j+1)
            let (a, b) = ((i as f64 + 1.0 / 3.0) / nf, (j as f64 + 1.0 / 3.0) / nf);
            out.push(SimplexUtility([a, b, 1.0 - a - b]));
            if i + j + 1 < n {
                let (a, b) = ((i as f64 + 2.0 / 3.0) / nf, (j as f64 + 2.0 / 3.0) / nf);
                out.push(SimplexUtility([a, b, 1.0 - a - b]));
            }
        }
    }
    out
}

pub fn manipulable_fraction(beta: f64, method: FractionMethod) -> Result<FractionEstimate> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta must be finite and nonnegative"));
    }
    let (manipulable, points, interval, spacing) = match method {
        FractionMethod::ExactMesh { subdivisions } => {
            if subdivisions == 0 {
                return Err(Error::invalid("mesh needs at least one subdivision"));
            }
            let pts = mesh_points(subdivisions);
            let hits = pts.par_iter().filter(|u| is_manipulable(u, beta)).count() as u64;
            (hits, pts.len() as u64, None, Some(1.0 / subdivisions as f64))
        }
        FractionMethod::MonteCarlo { samples, seed } => {
            if samples < MIN_SAMPLES {
                return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
            }
            let hits = classify_samples(beta, samples, seed).iter().filter(|(_, m)| *m).count() as u64;
            (hits, samples, Some(wilson_interval(hits, samples, 1.959_963_984_540_054)), None)
        }
    };
    Ok(FractionEstimate {
        beta,
        method,
        fraction: manipulable as f64 / points as f64,
        manipulable,
        points,
        interval,
        spacing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(x: [f64; 3]) -> SimplexUtility {
        SimplexUtility::new(x).unwrap()
    }

    #[test]
    fn lottery_cases() {
        assert_eq!(plurality_lottery([0, 0, 1]).probs, [1.0, 0.0, 0.0]);
        assert_eq!(plurality_lottery([1, 1, 1]).probs, [0.0, 1.0, 0.0]);
        let third = 1.0 / 3.0;
        assert_eq!(plurality_lottery([0, 1, 2]).probs, [third; 3]);
    }

    #[test]
    fn insincere_vote_against_split_opponents() {
        assert_eq!(best_response_vote(&u([0.6, 0.4, 0.0]), [1, 2], 0.0), vec![1]);
    }

    #[test]
    fn own_term_dominates_at_vertex() {
        for o in opponent_profiles() {
            assert_eq!(best_response_vote(&u([1.0, 0.0, 0.0]), o, 1.0), vec![0]);
        }
    }

    #[test]
    fn decided_outcome_makes_every_vote_optimal() {
        assert_eq!(best_response_vote(&u([0.2, 0.5, 0.3]), [0, 0], 0.0), vec![0, 1, 2]);
    }

    #[test]
    fn manipulability_examples() {
        assert!(!is_manipulable(&u([1.0, 0.0, 0.0]), 0.0));
        assert!(!is_manipulable(&u([1.0, 0.0, 0.0]), 3.0));
        assert!(is_manipulable(&u([0.6, 0.4, 0.0]), 0.0));
        let third = 1.0 / 3.0;
        let centre = SimplexUtility([third, third, third]);
        assert!(!is_manipulable(&centre, 0.0));
        assert!(!is_manipulable(&centre, 1.0));
    }

    #[test]
    fn witness_pairs_split_and_tied_opponents() {
        let (a, b) = manipulation_witness(&u([0.6, 0.4, 0.0]), 0.0).unwrap();
        let sets = (best_response_vote(&u([0.6, 0.4, 0.0]), a, 0.0), best_response_vote(&u([0.6, 0.4, 0.0]), b, 0.0));
        assert!(sets.0.iter().all(|v| !sets.1.contains(v)));
    }

    #[test]
    fn mesh_covers_the_simplex() {
        let pts = mesh_points(7);
        assert_eq!(pts.len(), 49);
        assert!(pts.iter().all(|p| p.0.iter().all(|x| *x > 0.0)));
    }

    #[test]
    fn small_sample_counts_are_rejected() {
        assert!(manipulable_fraction(0.0, FractionMethod::MonteCarlo { samples: 10, seed: 0 }).is_err());
    }

    #[test]
    fn samples_do_not_depend_on_blocking() {
        let a = classify_samples(0.0, 5000, 3);
        let b = classify_samples(0.0, 5000, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 5000);
    }
}

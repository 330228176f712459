use statrs::distribution::{ChiSquared, ContinuousCDF};

use mpag::collab::{run_mechanism, stop_probability, StatelessProfile};

/// Pearson statistic and its upper-tail probability.
fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, f64) {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (*o as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    (stat, 1.0 - dist.cdf(stat))
}

#[test]
fn stopping_round_is_geometric() {
    let profile = StatelessProfile::new(vec![vec![0.9, 0.1, 0.5, 0.3, 0.0], vec![0.2, 1.0, 0.0, 0.4, 0.6]]).unwrap();
    let agents = profile.truthful_agents();
    let m = profile.num_arms();
    let runs = 100_000u64;
    // bins 0..m-1: stopped after round k+1; bin m: survived
    let mut counts = vec![0u64; m + 1];
    for seed in 0..runs {
        let trace = run_mechanism(&profile, &agents, seed).unwrap();
        counts[trace.early_stop.map_or(m, |k| k - 1)] += 1;
    }
    let p = stop_probability(m);
    let mut expected: Vec<f64> = (0..m).map(|k| runs as f64 * p * (1.0 - p).powi(k as i32)).collect();
    expected.push(runs as f64 * (1.0 - p).powi(m as i32));
    assert!((expected[m] / runs as f64 - 0.5).abs() < 1e-12);
    let (stat, tail) = chi_square(&counts, &expected);
    assert!(tail > 1e-3, "χ² = {stat}, p = {tail}, counts {counts:?}");
}

#[test]
fn robot_follows_the_final_lottery() {
    let profile = StatelessProfile::new(vec![vec![1.0, 0.6, 0.0], vec![0.0, 0.7, 1.0], vec![0.3, 1.0, 0.0]]).unwrap();
    let agents = profile.truthful_agents();
    // condition on surviving: the lottery is then fixed by the deterministic picks
    let mut counts = [0u64; 3];
    let mut lottery = None;
    for seed in 0..60_000 {
        let trace = run_mechanism(&profile, &agents, seed).unwrap();
        if trace.early_stop.is_none() {
            counts[trace.robot_arm] += 1;
            lottery.get_or_insert(trace.final_lottery.clone());
        }
    }
    let lottery = lottery.unwrap();
    let n: u64 = counts.iter().sum();
    let expected: Vec<f64> = lottery.iter().map(|q| q * n as f64).collect();
    let (stat, tail) = chi_square(&counts, &expected);
    assert!(tail > 1e-3, "χ² = {stat}, p = {tail}, counts {counts:?} vs {lottery:?}");
}

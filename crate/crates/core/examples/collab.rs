//! One run of the sequential collaboration mechanism, its exact expected
//! welfare, and a small distortion curve.

use mpag::collab::{adversarial_families, empirical_distortion, expected_welfare, fit_distortion, run_mechanism, StatelessProfile};

fn main() -> mpag::Result<()> {
    let profile = StatelessProfile::new(vec![vec![1.0, 0.6, 0.0, 0.0], vec![0.0, 0.7, 1.0, 0.0], vec![0.0, 0.0, 0.2, 1.0]])?;
    let agents = profile.truthful_agents();
    let trace = run_mechanism(&profile, &agents, 3)?;
    for r in &trace.records {
        println!("round {} human {} pulls arm {} (+{})", r.round, r.human, r.arm, r.increment);
    }
    println!("early stop {:?}, lottery {:?}", trace.early_stop, trace.exact_lottery().iter().map(|p| p.to_string()).collect::<Vec<_>>());
    trace.verify().expect("trace invariants");
    println!("expected welfare {:.4} of optimum {}", expected_welfare(&profile, &agents)?, profile.optimal_welfare());

    let families = adversarial_families(20, 0);
    let points = [2, 4, 8, 16]
        .into_iter()
        .map(|m| empirical_distortion(&families, m, 3, 200, 0))
        .collect::<mpag::Result<Vec<_>>>()?;
    for p in &points {
        println!("M = {:>2}: distortion {:.3} (worst family {})", p.num_arms, p.distortion, p.worst_family);
    }
    let fit = fit_distortion(&points)?;
    println!("growth exponent against sqrt(M log M): {:.3}", fit.exponent);
    Ok(())
}

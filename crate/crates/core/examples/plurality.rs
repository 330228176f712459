//! How often a three-voter plurality vote with uniform tie-breaking can be
//! manipulated, as a function of the weight on the voter's own ballot.

use mpag::plurality::{manipulable_fraction, manipulation_witness, FractionMethod, SimplexUtility};

fn main() -> mpag::Result<()> {
    let u = SimplexUtility::new([0.5, 0.4, 0.1])?;
    if let Some((a, b)) = manipulation_witness(&u, 0.0) {
        println!("utility {:?}: best vote differs between opponents {a:?} and {b:?}", u.values());
    }
    for beta in [0.0, 0.5, 1.0, 2.0] {
        let mc = manipulable_fraction(beta, FractionMethod::MonteCarlo { samples: 100_000, seed: 1 })?;
        let mesh = manipulable_fraction(beta, FractionMethod::ExactMesh { subdivisions: 400 })?;
        let (lo, hi) = mc.interval.unwrap_or((f64::NAN, f64::NAN));
        println!("β = {beta}: Monte Carlo {:.4} [{lo:.4}, {hi:.4}], mesh {:.4}", mc.fraction, mesh.fraction);
    }
    Ok(())
}

//! Exhaustion by balls: `u_n` on `B_n` with exterior value `η`, followed as
//! `n` grows.
//!
//! `cargo run --release --example exhaustion`

use mixlap::coefficients::CoefficientModel;
use mixlap::dirichlet::Grading;
use mixlap::exhaustion::{exhaustion_experiment, ExhaustionSetup};
use mixlap::radial::OperatorParams;

fn main() -> mixlap::Result<()> {
    let setup = ExhaustionSetup {
        params: OperatorParams::new(3, 0.25)?,
        radii: vec![10.0, 20.0, 40.0],
        etas: vec![1.0, 2.0],
        nodes: 600,
        grading: Grading::Uniform,
        observation_radius: None,
    };
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0)?;
    let report = exhaustion_experiment(&setup, &coeff)?;
    for series in &report.series {
        println!(
            "eta = {}: u_n(0) = {:?}, gaps {:?}, decreasing {}",
            series.eta,
            series.center_values,
            series.gaps,
            series.decreasing()
        );
        if let Some(b) = &series.barrier {
            println!(
                "  barrier r^-{:.3}: fitted C {:.3e}, holds on {:.1}% of tail nodes",
                b.beta,
                b.scale,
                100.0 * b.fraction
            );
        }
    }
    println!(
        "spread of the limits across eta: {:.4}",
        report.limit_spread
    );
    Ok(())
}

//! Implicit Euler for `u_t = 𝓛u - c u` on a ball, started from `ψ_β`.
//!
//! `cargo run --release --example parabolic`

use mixlap::coefficients::CoefficientModel;
use mixlap::dirichlet::{DirichletProblem, RadialGrid};
use mixlap::parabolic::{zero_uniqueness_check, ParabolicStepper};
use mixlap::radial::{OperatorParams, RadialFunction};

fn main() -> mixlap::Result<()> {
    let params = OperatorParams::new(3, 0.25)?;
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 0.0)?;
    let problem = DirichletProblem::new(params, coeff, 1.0, RadialGrid::uniform(10.0, 300)?);
    let stepper = ParabolicStepper::new(&problem, 0.01)?;
    let trace = stepper.run(stepper.sample(&RadialFunction::weight(1.0)), 400, 100)?;
    for (t, u) in &trace.snapshots {
        println!("t = {t:>5.2}: u(0) = {:.6}", u[0]);
    }
    println!(
        "max |u - eta| at the end: {:.3e}",
        trace.max_deviation.last().unwrap()
    );
    println!("max norm nonincreasing: {}", trace.contracts(1e-12));

    let zero = zero_uniqueness_check(&problem, 0.01, 200, 1e-12)?;
    println!(
        "zero data, perturbation 1e-12: max |u| = {:.2e}, passed {}",
        zero.max_abs, zero.passed
    );
    Ok(())
}

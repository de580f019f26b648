//! Radial Dirichlet problem on a ball with exterior value `η`, and the
//! randomized weak maximum principle check.
//!
//! `cargo run --release --example dirichlet_ball`

use mixlap::coefficients::CoefficientModel;
use mixlap::dirichlet::{wmp_check, DirichletProblem, DirichletSolver, RadialGrid};
use mixlap::radial::OperatorParams;

fn main() -> mixlap::Result<()> {
    let params = OperatorParams::new(3, 0.25)?;
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0)?;
    let problem = DirichletProblem::new(params, coeff, 1.0, RadialGrid::uniform(10.0, 400)?);
    let solver = DirichletSolver::new(&problem)?;
    for eta in [1.0, 2.0, -1.0] {
        let u = solver.solve(eta)?;
        println!(
            "eta = {eta:>4}: u(0) = {:.6}, u(5) = {:.6}, max|u| = {:.6}, residual {:.1e}",
            u.center_value,
            u.value_at(5.0),
            u.max_abs,
            u.residual_norm
        );
    }
    let wmp = wmp_check(&problem, 16, 42)?;
    println!(
        "maximum principle: {}/{} nonnegative, {}/{} ordered, min value {:.2e}",
        wmp.nonnegative_passes, wmp.trials, wmp.comparison_passes, wmp.trials, wmp.min_value
    );
    Ok(())
}

//! Fractional Laplacian of `ψ_β = (1+r²)^(-β/2)`: adaptive quadrature against
//! the hypergeometric closed form.
//!
//! `cargo run --release --example closed_form_oracle`

use mixlap::radial::{
    fraclap_quadrature, OperatorParams, QuadratureConfig, RadialFunction,
    WeightFractionalLaplacian, WeightSpec,
};

fn main() -> mixlap::Result<()> {
    let quad = QuadratureConfig::default();
    println!(
        "{:>2} {:>5} {:>5} {:>6} {:>22} {:>22} {:>10}",
        "N", "s", "beta", "r", "closed", "quadrature", "rel.err"
    );
    for (dim, s, beta) in [
        (2, 0.25, 1.0),
        (3, 0.5, 2.0),
        (3, 0.25, 3.2),
        (4, 0.75, 5.0),
    ] {
        let params = OperatorParams::new(dim, s)?;
        let closed = WeightFractionalLaplacian::calibrate(&params, WeightSpec::new(beta)?, &quad)?;
        for r in [0.0, 0.5, 2.0, 10.0] {
            let exact = closed.eval(r)?;
            let numeric = fraclap_quadrature(&params, &RadialFunction::weight(beta), r, &quad)?;
            let err = (numeric - exact).abs() / exact.abs();
            println!(
                "{dim:>2} {s:>5} {beta:>5} {r:>6} {exact:>22.15e} {numeric:>22.15e} {err:>10.2e}"
            );
        }
        println!(
            "   prefactor {:.12} (calibrated at r = 2)",
            closed.prefactor()
        );
    }
    Ok(())
}

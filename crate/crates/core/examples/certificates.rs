//! Potential thresholds and supersolution certificates for `ψ_β` in each
//! weight regime.
//!
//! `cargo run --release --example certificates`

use mixlap::certificates::{certify_elliptic, threshold_pc0, CertifyOptions, WeightRegime};
use mixlap::coefficients::CoefficientModel;
use mixlap::radial::{OperatorParams, QuadratureConfig, WeightFractionalLaplacian, WeightSpec};

fn main() -> mixlap::Result<()> {
    let quad = QuadratureConfig::default();
    let options = CertifyOptions::default();
    let cases = [
        (4, WeightRegime::Subcritical, 1.0, 1.0),
        (3, WeightRegime::Subcritical, 2.4, 1.0),
        (3, WeightRegime::Intermediate, 2.75, 0.3),
        (3, WeightRegime::Critical, 3.0, 0.3),
        (3, WeightRegime::Supercritical, 3.2, 0.3),
    ];
    for (dim, regime, beta, alpha) in cases {
        let params = OperatorParams::new(dim, 0.25)?;
        let closed = WeightFractionalLaplacian::calibrate(&params, WeightSpec::new(beta)?, &quad)?;
        let base = CoefficientModel::lower_bound(alpha, 1.0, 1.0)?;
        let t = threshold_pc0(regime, &closed, &base, None)?;
        println!(
            "N={dim} regime {} beta={beta} alpha={alpha}: threshold p*c0 = {:.4e}, R_eps = {:.3e}",
            regime.tag(),
            t.value,
            t.r_eps
        );
        for factor in [0.5, 1.1] {
            let c0 = (factor * t.value).max(factor);
            let coeff = CoefficientModel::lower_bound(alpha, 1.0, c0)?;
            let cert = certify_elliptic(regime, &params, beta, 1.0, &coeff, &options)?;
            println!(
                "  c0 = {c0:.3e}: {:?}, max margin {:.3e}, first violation {:?}",
                cert.verdict,
                cert.max_margin(),
                cert.first_violation
            );
        }
    }
    Ok(())
}

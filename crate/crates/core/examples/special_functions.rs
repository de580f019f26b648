//! Gamma, digamma and the Gauss hypergeometric function, including the
//! analytic continuation to large negative arguments.
//!
//! `cargo run --release --example special_functions`

use mixlap::special::{digamma, gamma, gauss_2f1, hyp2f1_neg_square, HypergeometricArgs};

fn main() -> mixlap::Result<()> {
    for x in [-0.5, 0.5, 1.0, 3.25, 10.0] {
        println!("Gamma({x}) = {:.15e}", gamma(x)?);
    }
    println!("digamma(1) = {:.15} (minus Euler's constant)", digamma(1.0));

    // 2F1(1,1;2;z) = -ln(1-z)/z
    for z in [-0.9, -0.3, 0.5, 0.9] {
        let got = gauss_2f1(&HypergeometricArgs::new(1.0, 1.0, 2.0, z)?)?;
        let exact = -(1.0 - z).ln() / z;
        println!("2F1(1,1;2;{z:>4}) = {got:.15} (closed form {exact:.15})");
    }

    // Decay of 2F1(N/2+s, β/2+s; N/2; -r²) for N = 3, s = 0.25, β = 1.
    for r in [1.0, 10.0, 1e3, 1e6] {
        println!(
            "shape factor at r = {r:e}: {:.6e}",
            hyp2f1_neg_square(1.75, 0.75, 1.5, r)?
        );
    }
    Ok(())
}

//! Power-law barrier `V = C r^(-β)` absorbing the density outside a ball.
//!
//! `cargo run --release --example decay_barrier`

use mixlap::certificates::decay_barrier;
use mixlap::radial::{OperatorParams, QuadratureConfig};

fn main() -> mixlap::Result<()> {
    let quad = QuadratureConfig::default();
    for (dim, s, alpha) in [(3, 0.25, 1.0), (3, 0.5, 2.0), (5, 0.75, 1.8)] {
        let params = OperatorParams::new(dim, s)?;
        let b = decay_barrier(&params, alpha, 1.0, 1.0, 1.0, &quad)?;
        println!(
            "N={dim} s={s} alpha={alpha}: beta={:.3} C={:.4e} theta={:.6} (spread {:.1e}) decay bound {} absorbs density {}",
            b.beta, b.scale, b.theta, b.theta_spread, b.decay_bound_holds, b.absorbs_density
        );
    }
    // alpha <= 2s leaves no room for the barrier.
    let params = OperatorParams::new(3, 0.25)?;
    if let Err(e) = decay_barrier(&params, 0.4, 1.0, 1.0, 1.0, &quad) {
        println!("alpha = 0.4: {e}");
    }
    Ok(())
}

//! Worked cases for each module, checked against oracles written here and
//! against values frozen from them.

use std::f64::consts::PI;

use mixlap::certificates::{
    certify_elliptic, certify_parabolic_lambda, decay_barrier, threshold_pc0, CertifyOptions,
    WeightRegime,
};
use mixlap::coefficients::CoefficientModel;
use mixlap::dirichlet::{solve_dirichlet, DirichletProblem, RadialGrid};
use mixlap::parabolic::{zero_uniqueness_check, ParabolicStepper};
use mixlap::radial::{
    convexity_check, fraclap_quadrature, mixed_operator, product_rule_check, supersolution_check,
    OperatorParams, QuadratureConfig, RadialFunction, WeightFractionalLaplacian, WeightSpec,
};
use mixlap::special::{
    far_field_constant, gamma, gauss_2f1, limit_constant, HypergeometricArgs, LimitRegime,
    TailRegime,
};
use mixlap::MixlapError;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// `ln Γ(x)` for `x > 0` by recurrence up to 10 and the Stirling series.
fn ln_gamma_oracle(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

fn gamma_oracle(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma_oracle(1.0 - x))
    } else {
        ln_gamma_oracle(x).exp()
    }
}

/// Gauss series for `|z| < 1`.
fn series_2f1(a: f64, b: f64, c: f64, z: f64) -> f64 {
    series_2f1_terms(a, b, c, z, 200_000)
}

fn series_2f1_terms(a: f64, b: f64, c: f64, z: f64, terms: usize) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 0..terms {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `K · ₂F₁(N/2+s, β/2+s; N/2; -r²)` through Pfaff's transformation.
fn closed_form_oracle(dim: f64, s: f64, beta: f64, r: f64) -> f64 {
    let (a, b, c) = (dim / 2.0 + s, beta / 2.0 + s, dim / 2.0);
    let k = 4f64.powf(s) * gamma_oracle(b) * gamma_oracle(a)
        / (gamma_oracle(beta / 2.0) * gamma_oracle(c));
    let w = r * r / (1.0 + r * r);
    k * (1.0 + r * r).powf(-b) * series_2f1(c - a, b, c, w)
}

/// Same closed form for `r >> 1`, from the connection formula at `z = -r²`
/// (valid when `b - a` is not an integer).
fn closed_form_far_oracle(dim: f64, s: f64, beta: f64, r: f64) -> f64 {
    let (a, b, c) = (dim / 2.0 + s, beta / 2.0 + s, dim / 2.0);
    let k = 4f64.powf(s) * gamma_oracle(b) * gamma_oracle(a)
        / (gamma_oracle(beta / 2.0) * gamma_oracle(c));
    let x = r * r;
    let g = gamma_oracle;
    let first = g(c) * g(b - a) / (g(b) * g(c - a))
        * x.powf(-a)
        * series_2f1(a, a - c + 1.0, a - b + 1.0, -1.0 / x);
    let second = g(c) * g(a - b) / (g(a) * g(c - b))
        * x.powf(-b)
        * series_2f1(b, b - c + 1.0, b - a + 1.0, -1.0 / x);
    k * (first + second)
}

// Values frozen from the oracles above.
const GAMMA_MINUS_HALF: f64 = -3.544_907_701_811_032;
const C1_N3_S025_B275: f64 = 0.833_382_125_451_530_9;
const C2_N3_S025_B3: f64 = 0.196_723_433_169_349_4;
const C3_N3_S025_B32: f64 = 1.818_985_475_400_191;
const CLOSED_N3_S025_B1_R2: f64 = 0.261_768_496_918_537_7;
const CLOSED_N3_S025_B1_R0: f64 = 1.013_967_360_100_927;
const LOG_RATIO_N3_S025_R1E3: f64 = 0.687_593_947_102_904;
const SLOPE_N3_S025_B32: f64 = -3.372_562_273_909_914;

#[test]
fn oracles_reproduce_frozen_values() {
    assert!(rel(gamma_oracle(-0.5), GAMMA_MINUS_HALF) < 1e-12);
    let c1 = -gamma_oracle(1.5) * gamma_oracle(0.125) / (gamma_oracle(1.75) * gamma_oracle(-0.125));
    assert!(rel(c1, C1_N3_S025_B275) < 1e-12);
    let c2 = -gamma_oracle(1.5) / (gamma_oracle(-0.25) * gamma_oracle(1.75));
    assert!(rel(c2, C2_N3_S025_B3) < 1e-12);
    let c3 = -gamma_oracle(1.5) * gamma_oracle(0.1) / (gamma_oracle(-0.25) * gamma_oracle(1.85));
    assert!(rel(c3, C3_N3_S025_B32) < 1e-12);
    assert!(
        rel(
            closed_form_oracle(3.0, 0.25, 1.0, 2.0),
            CLOSED_N3_S025_B1_R2
        ) < 1e-12
    );
    assert!(
        rel(
            closed_form_oracle(3.0, 0.25, 1.0, 0.0),
            CLOSED_N3_S025_B1_R0
        ) < 1e-12
    );
}

#[test]
fn gamma_at_half_integers() {
    assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) < 1e-14);
    assert!(rel(gamma(0.5).unwrap().powi(2), PI) < 1e-14);
    let g = gamma(-0.5).unwrap();
    assert!(g < 0.0);
    assert!(rel(g, GAMMA_MINUS_HALF) < 1e-14);
}

#[test]
fn gauss_2f1_at_unit_argument() {
    let at_one = gauss_2f1(&HypergeometricArgs::new(1.0, 1.0, 3.0, 1.0).unwrap()).unwrap();
    assert!(rel(at_one, 2.0) < 1e-14);
    assert!(rel(series_2f1_terms(1.0, 1.0, 3.0, 1.0 - 1e-8, 5_000_000), 2.0) < 1e-6);
}

#[test]
fn limit_constants_of_the_unit_argument_regimes() {
    let convergent = limit_constant(LimitRegime::Convergent, 1.0, 1.0, 3.0).unwrap();
    assert!(rel(convergent, 2.0) < 1e-14);
    let log = limit_constant(LimitRegime::Logarithmic, 1.0, 1.0, 2.0).unwrap();
    assert!(rel(log, 1.0) < 1e-14);
    let near_one = gauss_2f1(&HypergeometricArgs::new(1.0, 1.0, 3.0, 1.0 - 1e-6).unwrap()).unwrap();
    assert!((near_one - convergent).abs() < 1e-4);
    assert!(matches!(
        limit_constant(LimitRegime::Logarithmic, 1.0, 1.0, 3.0),
        Err(MixlapError::RegimeMismatch { .. })
    ));
}

#[test]
fn far_field_constants_are_positive_with_negative_gamma_factors() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    assert!(gamma(-0.125).unwrap() < 0.0);
    assert!(gamma(-0.25).unwrap() < 0.0);
    for (beta, regime, frozen) in [
        (2.75, TailRegime::Algebraic, C1_N3_S025_B275),
        (3.0, TailRegime::Logarithmic, C2_N3_S025_B3),
        (3.2, TailRegime::Saturated, C3_N3_S025_B32),
    ] {
        let c = far_field_constant(&p, beta).unwrap();
        assert_eq!(c.regime, regime);
        assert!(c.value > 0.0);
        assert!(
            rel(c.value, frozen) < 1e-12,
            "beta {beta}: {} vs {frozen}",
            c.value
        );
    }
}

#[test]
fn quadrature_matches_closed_form_at_two() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let value = fraclap_quadrature(&p, &RadialFunction::weight(1.0), 2.0, &q).unwrap();
    assert!(rel(value, CLOSED_N3_S025_B1_R2) < 1e-6);
    let closed =
        WeightFractionalLaplacian::calibrate(&p, WeightSpec::new(1.0).unwrap(), &q).unwrap();
    assert!(rel(closed.eval(2.0).unwrap(), value) < 1e-6);
}

#[test]
fn power_doubles_exactly() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let f = RadialFunction::power(1.3);
    let a = fraclap_quadrature(&p, &f, 1.5, &q).unwrap();
    let b = fraclap_quadrature(&p, &f, 3.0, &q).unwrap();
    assert!(rel(b / a, 2f64.powf(-1.3 - 0.5)) < 1e-8);
}

#[test]
fn closed_form_at_origin_equals_quadrature() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let closed =
        WeightFractionalLaplacian::calibrate(&p, WeightSpec::new(1.0).unwrap(), &q).unwrap();
    let at_zero = fraclap_quadrature(&p, &RadialFunction::weight(1.0), 0.0, &q).unwrap();
    assert!(rel(closed.eval(0.0).unwrap(), at_zero) < 1e-8);
    assert!(rel(at_zero, CLOSED_N3_S025_B1_R0) < 1e-8);
}

#[test]
fn saturated_tail_slope() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let closed = WeightFractionalLaplacian::literature(&p, WeightSpec::new(3.2).unwrap()).unwrap();
    let (v1, v2) = (closed.eval(1e2).unwrap(), closed.eval(1e4).unwrap());
    assert!(v1 < 0.0 && v2 < 0.0, "-(-Δ)^s ψ is positive far out");
    let slope = (v2.abs().ln() - v1.abs().ln()) / (1e4f64.ln() - 1e2f64.ln());
    let oracle = (closed_form_far_oracle(3.0, 0.25, 3.2, 1e4).abs().ln()
        - closed_form_far_oracle(3.0, 0.25, 3.2, 1e2).abs().ln())
        / (1e4f64.ln() - 1e2f64.ln());
    assert!((oracle - SLOPE_N3_S025_B32).abs() < 1e-6);
    assert!((slope - SLOPE_N3_S025_B32).abs() < 1e-6);
    // The fitted slope approaches -(2s+N) = -3.5 from above; the finite window
    // still carries the r^(-(β-N)) correction.
    assert!(slope > -3.5 && slope < -3.3);
}

#[test]
fn logarithmic_tail_ratio() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let closed = WeightFractionalLaplacian::literature(&p, WeightSpec::new(3.0).unwrap()).unwrap();
    let c2 = far_field_constant(&p, 3.0).unwrap().value;
    let ratio = |r: f64| {
        let x = 1.0 + r * r;
        closed.eval(r).unwrap() / (-closed.prefactor() * c2 * x.powf(-1.75) * x.ln())
    };
    assert!(rel(ratio(1e3), LOG_RATIO_N3_S025_R1E3) < 1e-6);
    // ratio = 1 + κ / log(1+r²) + ..., κ = 2ψ(1) - ψ(N/2+s) - ψ(-s).
    let kappa = -4.316_043;
    for r in [1e3, 1e5, 1e7] {
        let x = 1.0f64 + r * r;
        assert!((ratio(r) - 1.0 - kappa / x.ln()).abs() < 0.02, "r = {r}");
    }
}

#[test]
fn laplacian_of_weight_at_origin() {
    for (dim, beta) in [(3usize, 1.0), (4, 2.5), (2, 0.7)] {
        let w = WeightSpec::new(beta).unwrap();
        let expected = -beta * dim as f64;
        assert!(rel(w.laplacian(dim, 0.0), expected) < 1e-14);
        let h = 1e-4;
        let fd = dim as f64 * 2.0 * (w.value(h) - w.value(0.0)) / (h * h);
        assert!(rel(fd, expected) < 1e-6);
    }
}

#[test]
fn subharmonic_weights_have_nonpositive_mixed_operator() {
    let p = OperatorParams::new(4, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let f = RadialFunction::weight(1.5);
    for r in [0.0, 0.5, 1.0, 3.0, 10.0, 40.0] {
        assert!(mixed_operator(&p, &f, r, &q).unwrap() <= 0.0, "r = {r}");
    }
}

#[test]
fn supersolution_sign_check() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let grid: Vec<f64> = (0..=50).map(|k| k as f64).collect();
    let report = supersolution_check(&p, &RadialFunction::weight(2.4), &grid, &q).unwrap();
    assert!(report.passed);
    assert!(report.ode_failure_region.is_none());
    assert!(report.points.iter().all(|pt| pt.fraclap >= 0.0));

    // β > N-2s: the bracket (β-N+2s)r² - (N-2s+2) turns positive past its root.
    let beta = 3.0;
    let report = supersolution_check(&p, &RadialFunction::weight(beta), &grid, &q).unwrap();
    let root = ((3.0 - 0.5 + 2.0) / (beta - 3.0 + 0.5)).sqrt();
    let (first, last) = report.ode_failure_region.unwrap();
    assert!(first > root && first - 1.0 <= root, "{first} vs {root}");
    assert_eq!(last, 50.0);
}

#[test]
fn product_rule_residuals() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let (psi1, psi2, psi3) = (
        RadialFunction::weight(1.0),
        RadialFunction::weight(2.0),
        RadialFunction::weight(3.0),
    );
    let a = product_rule_check(&p, &psi2, &psi2, 1.0, &q).unwrap();
    assert!(a.residual <= 1e-5 * a.scale);
    let b = product_rule_check(&p, &psi1, &psi3, 0.0, &q).unwrap();
    assert!(b.residual <= 1e-5 * b.scale);
}

#[test]
fn convexity_margins() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let psi2 = RadialFunction::weight(2.0);
    for r in [0.0, 1.0, 5.0] {
        assert!(convexity_check(&p, &psi2, r, &q).unwrap() >= -1e-8);
    }
    let bumpy = RadialFunction::weight(1.0).product(
        &RadialFunction::new("1+sin(r)/4", 0.0, |r: f64| 1.0 + r.sin() / 4.0)
            .with_derivatives(|r: f64| r.cos() / 4.0, |r: f64| -r.sin() / 4.0),
    );
    assert!(convexity_check(&p, &bumpy, 2.0, &q).unwrap() >= 0.0);
}

fn log_grid(max: f64, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..points).map(|k| 1e-2 * (max / 1e-2f64).powf(k as f64 / (points - 1) as f64)));
    grid
}

#[test]
fn regime_i_thresholds() {
    let q = QuadratureConfig::default();
    let p4 = OperatorParams::new(4, 0.25).unwrap();
    let closed =
        WeightFractionalLaplacian::calibrate(&p4, WeightSpec::new(1.0).unwrap(), &q).unwrap();
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0).unwrap();
    assert_eq!(
        threshold_pc0(WeightRegime::Subcritical, &closed, &coeff, None)
            .unwrap()
            .value,
        0.0
    );

    let p3 = OperatorParams::new(3, 0.25).unwrap();
    let closed =
        WeightFractionalLaplacian::calibrate(&p3, WeightSpec::new(2.4).unwrap(), &q).unwrap();
    let t = threshold_pc0(WeightRegime::Subcritical, &closed, &coeff, None).unwrap();
    assert!((t.value - 2.4 * 1.4).abs() < 1e-12);
}

#[test]
fn supercritical_threshold_is_the_larger_bound() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let closed =
        WeightFractionalLaplacian::calibrate(&p, WeightSpec::new(3.2).unwrap(), &q).unwrap();
    let coeff = CoefficientModel::lower_bound(0.3, 1.0, 1.0).unwrap();
    let t = threshold_pc0(WeightRegime::Supercritical, &closed, &coeff, None).unwrap();
    let (far, compact) = (t.far_field_bound.unwrap(), t.compact_bound.unwrap());
    assert_eq!(t.value, far.max(compact));
    assert!(rel(t.tail_constant.unwrap(), C3_N3_S025_B32) < 1e-12);
    assert!(rel(t.epsilon, C3_N3_S025_B32 / 10.0) < 1e-12);
}

#[test]
fn regime_i_elliptic_certificate() {
    let p = OperatorParams::new(4, 0.25).unwrap();
    let options = CertifyOptions {
        grid: Some(log_grid(100.0, 200)),
        ..Default::default()
    };
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0).unwrap();
    let cert = certify_elliptic(WeightRegime::Subcritical, &p, 1.0, 1.0, &coeff, &options).unwrap();
    assert!(cert.passed(), "max margin {}", cert.max_margin());
    assert!(cert.first_violation.is_none());

    // Heavier density tails break the alpha <= 2 hypothesis; the margins stay
    // negative because the fractional part dominates, so only the warning shows it.
    let heavy = CoefficientModel::lower_bound(3.0, 1.0, 1.0).unwrap();
    let cert = certify_elliptic(WeightRegime::Subcritical, &p, 1.0, 1.0, &heavy, &options).unwrap();
    assert!(cert.max_margin() < 0.0);
    assert!(!cert.warnings.is_empty());
}

#[test]
fn parabolic_lambda_certificates() {
    let q = QuadratureConfig::default();
    let p3 = OperatorParams::new(3, 0.25).unwrap();
    let coeff = CoefficientModel::lower_bound(0.3, 1.0, 0.0).unwrap();
    let options = CertifyOptions::default();

    let closed =
        WeightFractionalLaplacian::calibrate(&p3, WeightSpec::new(2.75).unwrap(), &q).unwrap();
    let t = threshold_pc0(WeightRegime::Intermediate, &closed, &coeff, None).unwrap();
    let cert = certify_parabolic_lambda(
        WeightRegime::Intermediate,
        &p3,
        2.75,
        &coeff,
        1.1 * t.value,
        &options,
    )
    .unwrap();
    assert!(cert.passed());

    let p4 = OperatorParams::new(4, 0.25).unwrap();
    let cert = certify_parabolic_lambda(WeightRegime::Subcritical, &p4, 1.0, &coeff, 0.0, &options)
        .unwrap();
    assert!(cert.passed());

    let cert =
        certify_parabolic_lambda(WeightRegime::Supercritical, &p3, 3.2, &coeff, 0.0, &options)
            .unwrap();
    assert!(!cert.passed());
    assert!(cert.first_violation.is_some());
}

#[test]
fn barrier_construction() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let q = QuadratureConfig::default();
    let report = decay_barrier(&p, 1.0, 1.0, 1.0, 1.0, &q).unwrap();
    assert_eq!(report.beta, 0.25);
    assert!(report.theta_spread <= 1e-6);
    assert!(report.nonnegative && report.bounded_below_on_ball && report.vanishes_at_infinity);
    assert!(report.passed());
    assert!(matches!(
        decay_barrier(&p, 0.4, 1.0, 1.0, 1.0, &q),
        Err(MixlapError::RegimePrecondition(_))
    ));
}

#[test]
fn dirichlet_center_value_is_strictly_inside() {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0).unwrap();
    let problem = DirichletProblem::new(p, coeff, 1.0, RadialGrid::uniform(20.0, 2000).unwrap());
    let u = solve_dirichlet(&problem).unwrap();
    assert!(
        u.center_value > 0.0 && u.center_value < 1.0,
        "{}",
        u.center_value
    );
}

fn parabolic_problem() -> DirichletProblem {
    let p = OperatorParams::new(3, 0.25).unwrap();
    let coeff = CoefficientModel::lower_bound(1.0, 1.0, 0.0).unwrap();
    DirichletProblem::new(p, coeff, 0.0, RadialGrid::uniform(10.0, 200).unwrap())
}

#[test]
fn parabolic_max_norm_does_not_grow() {
    let problem = parabolic_problem();
    let verdict = |dt: f64, steps: usize| {
        let stepper = ParabolicStepper::new(&problem, dt).unwrap();
        let u0 = stepper.sample(&RadialFunction::weight(3.0));
        let trace = stepper.run(u0, steps, 0).unwrap();
        trace.max_abs.windows(2).all(|w| w[1] <= w[0] + 1e-15)
    };
    assert!(verdict(1e-2, 100));
    assert!(verdict(5e-3, 200));
}

#[test]
fn parabolic_roundoff_is_not_amplified() {
    let problem = parabolic_problem();
    for dt in [1e-2, 5e-3] {
        let report = zero_uniqueness_check(&problem, dt, 100, 1e-14).unwrap();
        assert!(report.final_max_abs <= 1e-12);
        assert!(report.passed);
    }
}

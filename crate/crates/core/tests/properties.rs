//! Property tests for the analytic identities and structural invariants.

use std::f64::consts::PI;

use mixlap::certificates::{certify_elliptic, CertifyOptions, WeightRegime};
use mixlap::coefficients::CoefficientModel;
use mixlap::dirichlet::{assemble, DirichletProblem, DirichletSolver, RadialGrid};
use mixlap::radial::{
    fraclap_quadrature, OperatorParams, QuadratureConfig, RadialFunction, WeightSpec,
};
use mixlap::special::{gamma, gauss_2f1, hyp2f1_neg_square, HypergeometricArgs};
use proptest::prelude::*;

/// Plain Gauss series, summed until terms are negligible.
fn series_2f1(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 0..20_000 {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn gamma_reflection(x in 0.01f64..0.99) {
        let lhs = gamma(x).unwrap() * gamma(1.0 - x).unwrap();
        let rhs = PI / (PI * x).sin();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn gamma_recurrence(x in 0.1f64..30.0) {
        let lhs = gamma(x + 1.0).unwrap();
        let rhs = x * gamma(x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn pfaff_matches_direct_series(
        a in 0.1f64..3.0, b in 0.1f64..3.0, c in 0.5f64..3.0, z in -0.45f64..0.0,
    ) {
        let direct = series_2f1(a, b, c, z);
        let got = gauss_2f1(&HypergeometricArgs::new(a, b, c, z).unwrap()).unwrap();
        prop_assert!((got - direct).abs() <= 1e-11 * direct.abs().max(1e-300), "{got} vs {direct}");
    }

    #[test]
    fn negative_square_is_pfaff_of_series(
        a in 0.5f64..3.0, b in 0.2f64..3.0, c in 0.5f64..2.5, r in 0.0f64..0.6,
    ) {
        // 2F1(a,b;c;-r²) = (1+r²)^(-b) 2F1(c-a, b; c; r²/(1+r²))
        let w = r * r / (1.0 + r * r);
        let expected = (1.0 + r * r).powf(-b) * series_2f1(c - a, b, c, w);
        let got = hyp2f1_neg_square(a, b, c, r).unwrap();
        prop_assert!((got - expected).abs() <= 1e-11 * expected.abs().max(1e-300));
    }

    #[test]
    fn quadrature_is_linear(
        x in -2.0f64..2.0, y in -2.0f64..2.0, r in 0.0f64..6.0, s in 0.1f64..0.9,
    ) {
        let p = OperatorParams::new(3, s).unwrap();
        let q = QuadratureConfig::default();
        let f = RadialFunction::weight(1.5);
        let g = RadialFunction::weight(3.5);
        let h = RadialFunction::linear_combination(&[(x, f.clone()), (y, g.clone())]);
        let lhs = fraclap_quadrature(&p, &h, r, &q).unwrap();
        let rhs = x * fraclap_quadrature(&p, &f, r, &q).unwrap() + y * fraclap_quadrature(&p, &g, r, &q).unwrap();
        let scale = (x.abs() + y.abs()) * fraclap_quadrature(&p, &f, 0.0, &q).unwrap().abs();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn powers_scale_homogeneously(
        s in 0.15f64..0.85, frac in 0.1f64..0.9, r in 0.5f64..5.0, lambda in 1.2f64..4.0,
    ) {
        let dim = 3;
        let beta = frac * (dim as f64 - 2.0 * s);
        let p = OperatorParams::new(dim, s).unwrap();
        let q = QuadratureConfig::default();
        let f = RadialFunction::power(beta);
        let a = fraclap_quadrature(&p, &f, r, &q).unwrap();
        let b = fraclap_quadrature(&p, &f, lambda * r, &q).unwrap();
        let exact = lambda.powf(-beta - 2.0 * s);
        prop_assert!((b / a - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn margins_decrease_with_potential(c_low in 0.0f64..5.0, bump in 0.01f64..50.0) {
        let p = OperatorParams::new(3, 0.25).unwrap();
        let options = CertifyOptions { grid: Some(vec![0.0, 0.3, 1.0, 4.0, 20.0, 90.0]), ..Default::default() };
        let run = |c0: f64| {
            let coeff = CoefficientModel::lower_bound(1.0, 1.0, c0).unwrap();
            certify_elliptic(WeightRegime::Subcritical, &p, 2.4, 1.0, &coeff, &options).unwrap()
        };
        let low = run(c_low);
        let high = run(c_low + bump);
        for (a, b) in low.margins.iter().zip(&high.margins) {
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn weight_growth_bound(beta in 0.1f64..6.0, r in 0.0f64..1e3) {
        let w = WeightSpec::new(beta).unwrap();
        prop_assert!(w.value(r) + w.derivative(r).abs() <= (1.0 + beta) * w.value(r) * (1.0 + 1e-14));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn dirichlet_solutions_are_bounded_by_the_exterior_value(
        eta in -3.0f64..3.0, c0 in 0.0f64..4.0, alpha in 0.0f64..2.0, s in 0.1f64..0.9,
    ) {
        let p = OperatorParams::new(3, s).unwrap();
        let coeff = CoefficientModel::lower_bound(alpha, 1.0, c0).unwrap();
        let problem = DirichletProblem::new(p, coeff, eta, RadialGrid::uniform(6.0, 60).unwrap());
        let sol = DirichletSolver::new(&problem).unwrap().solve(eta).unwrap();
        prop_assert!(sol.max_abs <= eta.abs() + 1e-10);
        prop_assert!(sol.values.iter().all(|u| u * eta >= -1e-12));
    }

    #[test]
    fn nonlocal_block_is_symmetric(s in 0.1f64..0.9, dim in 2usize..5) {
        let p = OperatorParams::new(dim, s).unwrap();
        let coeff = CoefficientModel::lower_bound(1.0, 1.0, 1.0).unwrap();
        let a = assemble(&DirichletProblem::new(p, coeff, 0.0, RadialGrid::uniform(3.0, 40).unwrap())).unwrap();
        let asym = (&a.nonlocal - a.nonlocal.transpose()).amax();
        prop_assert!(asym <= 1e-12 * a.nonlocal.amax());
    }
}

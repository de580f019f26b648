//! Implicit Euler for `ρ u_t = Δu - (-Δ)^s u` on a ball with constant
//! exterior value, sharing the spatial discretization of [`crate::dirichlet`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::certificates::{certify_parabolic_lambda, Certificate, CertifyOptions, WeightRegime};
use crate::coefficients::CoefficientModel;
use crate::dirichlet::{assemble, Assembly, DirichletProblem, DirichletSolver, Factorization};
use crate::error::{MixlapError, Result};
use crate::radial::{OperatorParams, RadialFunction};

pub const DEFAULT_DT: f64 = 1e-2;
/// Max-norm bound for the zero-data run.
pub const ZERO_TOL: f64 = 1e-12;

/// Time step `dt` for the spatial problem; its potential is ignored.
pub struct ParabolicStepper {
    assembly: Assembly,
    /// `V_i ρ(r_i) / dt`
    mass: Vec<f64>,
    factorization: Factorization,
    dt: f64,
    eta: f64,
}

impl ParabolicStepper {
    pub fn new(problem: &DirichletProblem, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MixlapError::Domain(format!(
                "time step {dt} must be positive"
            )));
        }
        let coeff = problem
            .coeff
            .clone()
            .with_profiles(problem.coeff.density.clone(), RadialFunction::constant(0.0));
        let spatial = DirichletProblem {
            coeff,
            ..problem.clone()
        };
        let assembly = assemble(&spatial)?;
        let mut mass = Vec::with_capacity(assembly.unknowns());
        for (&r, &v) in assembly.nodes.iter().zip(&assembly.volumes) {
            let rho = problem.coeff.density.value(r);
            if !(rho > 0.0) {
                return Err(MixlapError::Domain(format!(
                    "density {rho} must be positive (r = {r})"
                )));
            }
            mass.push(v * rho / dt);
        }
        let mut matrix: DMatrix<f64> = assembly.stiffness();
        for (i, m) in mass.iter().enumerate() {
            matrix[(i, i)] += m;
        }
        let factorization = Factorization::new(matrix)?;
        Ok(Self {
            assembly,
            mass,
            factorization,
            dt,
            eta: problem.eta,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Interior radii (the boundary node carries `η`).
    pub fn radii(&self) -> &[f64] {
        &self.assembly.nodes[..self.assembly.unknowns()]
    }

    /// Interior values of `f`.
    pub fn sample(&self, f: &RadialFunction) -> Vec<f64> {
        self.radii().iter().map(|&r| f.value(r)).collect()
    }

    /// One implicit step from interior values `u`.
    pub fn step(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.mass.len() {
            return Err(MixlapError::Domain(format!(
                "state has {} values, expected {}",
                u.len(),
                self.mass.len()
            )));
        }
        let rhs = DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(&self.mass)
                .zip(&self.assembly.exterior_coupling)
                .map(|((x, m), c)| m * x + self.eta * c),
        );
        Ok(self.factorization.solve(&rhs)?.iter().copied().collect())
    }

    pub fn run(
        &self,
        initial: Vec<f64>,
        steps: usize,
        snapshot_every: usize,
    ) -> Result<ParabolicTrace> {
        let mut trace = ParabolicTrace {
            dt: self.dt,
            eta: self.eta,
            radii: self.radii().to_vec(),
            max_abs: vec![max_abs(&initial)],
            max_deviation: vec![max_deviation(&initial, self.eta)],
            snapshots: vec![(0.0, initial.clone())],
            final_state: Vec::new(),
        };
        let mut u = initial;
        for k in 1..=steps {
            u = self.step(&u)?;
            trace.max_abs.push(max_abs(&u));
            trace.max_deviation.push(max_deviation(&u, self.eta));
            if snapshot_every > 0 && k % snapshot_every == 0 {
                trace.snapshots.push((k as f64 * self.dt, u.clone()));
            }
        }
        trace.final_state = u;
        Ok(trace)
    }
}

fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_deviation(u: &[f64], eta: f64) -> f64 {
    u.iter().fold(0.0, |m, x| m.max((x - eta).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParabolicTrace {
    pub dt: f64,
    pub eta: f64,
    pub radii: Vec<f64>,
    /// `max |u_k|` for `k = 0..=steps`.
    pub max_abs: Vec<f64>,
    /// `max |u_k - η|`.
    pub max_deviation: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_state: Vec<f64>,
}

impl ParabolicTrace {
    /// `max |u_k - η|` never increases (up to `tol`).
    pub fn contracts(&self, tol: f64) -> bool {
        self.max_deviation.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Snapshots as CSV (`t,r,u`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r,u\n");
        for (t, u) in &self.snapshots {
            for (r, v) in self.radii.iter().zip(u) {
                out.push_str(&format!("{t},{r:.17e},{v:.17e}\n"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroDataReport {
    pub steps: usize,
    pub dt: f64,
    pub perturbation: f64,
    pub max_abs: f64,
    pub final_max_abs: f64,
    pub passed: bool,
}

/// Zero initial datum (plus an optional uniform perturbation) and zero
/// exterior value: the run must stay below [`ZERO_TOL`].
pub fn zero_uniqueness_check(
    problem: &DirichletProblem,
    dt: f64,
    steps: usize,
    perturbation: f64,
) -> Result<ZeroDataReport> {
    let problem = DirichletProblem {
        eta: 0.0,
        ..problem.clone()
    };
    let stepper = ParabolicStepper::new(&problem, dt)?;
    let u0 = vec![perturbation; stepper.radii().len()];
    let trace = stepper.run(u0, steps, 0)?;
    let max_abs = trace.max_abs.iter().skip(1).fold(0.0f64, |m, &x| m.max(x));
    Ok(ZeroDataReport {
        steps,
        dt,
        perturbation,
        max_abs,
        final_max_abs: *trace.max_abs.last().unwrap_or(&0.0),
        passed: max_abs <= ZERO_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyStateReport {
    pub steps: usize,
    pub last_increment: f64,
    /// Max difference to the elliptic solution with `c ≡ 0`.
    pub elliptic_difference: f64,
    pub converged: bool,
}

/// Step until the increment drops below `increment_tol` and compare with the
/// elliptic solve sharing the exterior value.
pub fn steady_state_check(
    problem: &DirichletProblem,
    initial: &RadialFunction,
    dt: f64,
    increment_tol: f64,
    max_steps: usize,
) -> Result<SteadyStateReport> {
    let stepper = ParabolicStepper::new(problem, dt)?;
    let mut u = stepper.sample(initial);
    let mut steps = 0;
    let mut increment = f64::INFINITY;
    while steps < max_steps && increment > increment_tol {
        let next = stepper.step(&u)?;
        increment = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        steps += 1;
    }
    let spatial = DirichletProblem {
        coeff: problem
            .coeff
            .clone()
            .with_profiles(problem.coeff.density.clone(), RadialFunction::constant(0.0)),
        ..problem.clone()
    };
    let elliptic = DirichletSolver::new(&spatial)?.solve(problem.eta)?;
    let elliptic_difference = u
        .iter()
        .zip(&elliptic.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(SteadyStateReport {
        steps,
        last_increment: increment,
        elliptic_difference,
        converged: increment <= increment_tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub steps: usize,
    /// `min_k min_i (v_k - u_k)`; nonnegative when order is preserved.
    pub worst_gap: f64,
    pub ordered: bool,
}

/// Evolve `lower <= upper` side by side and check that the order persists.
pub fn comparison_check(
    stepper: &ParabolicStepper,
    lower: &RadialFunction,
    upper: &RadialFunction,
    steps: usize,
) -> Result<ComparisonReport> {
    let mut u = stepper.sample(lower);
    let mut v = stepper.sample(upper);
    if u.iter().zip(&v).any(|(a, b)| a > b) {
        return Err(MixlapError::Domain("initial data are not ordered".into()));
    }
    let mut worst = f64::INFINITY;
    for _ in 0..steps {
        u = stepper.step(&u)?;
        v = stepper.step(&v)?;
        worst = u.iter().zip(&v).fold(worst, |m, (a, b)| m.min(b - a));
    }
    Ok(ComparisonReport {
        steps,
        worst_gap: worst,
        ordered: worst >= -1e-12,
    })
}

/// `e^(-λt) ψ_β` supersolution check for `ρ u_t = 𝓛u`.
pub fn lambda_certificate(
    regime: WeightRegime,
    params: &OperatorParams,
    beta: f64,
    coeff: &CoefficientModel,
    lambda: f64,
    options: &CertifyOptions,
) -> Result<Certificate> {
    certify_parabolic_lambda(regime, params, beta, coeff, lambda, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::RadialGrid;

    fn problem(eta: f64) -> DirichletProblem {
        let params = OperatorParams::new(3, 0.25).unwrap();
        let coeff = CoefficientModel::lower_bound(1.0, 1.0, 3.0).unwrap();
        DirichletProblem::new(params, coeff, eta, RadialGrid::uniform(5.0, 80).unwrap())
    }

    #[test]
    fn constants_are_steady() {
        let st = ParabolicStepper::new(&problem(1.0), DEFAULT_DT).unwrap();
        let u = st.step(&vec![1.0; st.radii().len()]).unwrap();
        assert!(u.iter().all(|x| (x - 1.0).abs() < 1e-12));
        let zero = ParabolicStepper::new(&problem(0.0), DEFAULT_DT).unwrap();
        assert!(zero
            .step(&vec![0.0; zero.radii().len()])
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn weight_datum_decays_in_max_norm() {
        let st = ParabolicStepper::new(&problem(0.0), DEFAULT_DT).unwrap();
        let trace = st
            .run(st.sample(&RadialFunction::weight(3.0)), 100, 25)
            .unwrap();
        assert!(trace.max_abs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(trace.contracts(1e-15));
        assert_eq!(trace.snapshots.len(), 5);
    }

    #[test]
    fn zero_data_stays_zero() {
        let rep = zero_uniqueness_check(&problem(3.0), DEFAULT_DT, 50, 0.0).unwrap();
        assert!(rep.passed && rep.max_abs == 0.0);
        let rep = zero_uniqueness_check(&problem(0.0), DEFAULT_DT, 50, 1e-14).unwrap();
        assert!(rep.passed && rep.final_max_abs <= 1e-14);
    }

    #[test]
    fn order_is_preserved() {
        let st = ParabolicStepper::new(&problem(0.5), 0.05).unwrap();
        let lower = RadialFunction::constant(0.0);
        let upper = RadialFunction::weight(2.0);
        let rep = comparison_check(&st, &lower, &upper, 20).unwrap();
        assert!(rep.ordered, "{rep:?}");
        assert!(comparison_check(&st, &upper, &lower, 1).is_err());
    }
}

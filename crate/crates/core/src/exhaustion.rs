//! Exhaustion by balls: solve the Dirichlet problem on `B_n` for increasing
//! `n` with a fixed exterior value and watch the solutions converge.

use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::decay_barrier;
use crate::coefficients::{BoundMode, CoefficientModel};
use crate::dirichlet::{DirichletProblem, DirichletSolver, Grading, RadialGrid, RadialSolution};
use crate::error::{MixlapError, Result};
use crate::radial::{OperatorParams, QuadratureConfig};

/// Bound on `max |u_n| - |η|` accepted for every solve.
pub const SUP_BOUND_TOL: f64 = 1e-8;
/// Relative (to `|η|`) size of the final center-value gap for a Cauchy verdict.
pub const CAUCHY_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustionSetup {
    pub params: OperatorParams,
    pub radii: Vec<f64>,
    pub etas: Vec<f64>,
    pub nodes: usize,
    pub grading: Grading,
    /// Defaults to half the smallest radius.
    pub observation_radius: Option<f64>,
}

impl ExhaustionSetup {
    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.etas.is_empty() {
            return Err(MixlapError::Config(
                "exhaustion needs at least one radius and one eta".into(),
            ));
        }
        if !self.radii.windows(2).all(|w| w[1] > w[0]) || self.radii[0] <= 0.0 {
            return Err(MixlapError::Config(
                "radii must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn observation_radius(&self) -> f64 {
        self.observation_radius.unwrap_or(self.radii[0] / 2.0)
    }
}

/// One `(n, η)` solve, restricted to the observation window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallSolve {
    pub radius: f64,
    pub eta: f64,
    pub center_value: f64,
    pub max_abs: f64,
    pub residual_norm: f64,
    pub within_sup_bound: bool,
    pub window_radii: Vec<f64>,
    pub window_values: Vec<f64>,
}

/// `|u_n - η| <= C r^(-β)` on `r0 < r < n`, with `C` fitted on the smallest ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierFit {
    pub beta: f64,
    pub r0: f64,
    pub scale: f64,
    /// Scale produced by the barrier construction itself, for comparison.
    pub construction_scale: f64,
    pub tail_nodes: usize,
    pub satisfied: usize,
    pub per_radius_fraction: Vec<f64>,
    pub fraction: f64,
    /// `max(construction scale, 2|η| r0^β)`: dominates `|u_n - η|` on `B_{r0}`
    /// for every `n`, so comparison yields the bound on the whole tail.
    pub dominating_scale: f64,
    pub dominating_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaSeries {
    pub eta: f64,
    pub center_values: Vec<f64>,
    /// `|u_{n_{k+1}}(0) - u_{n_k}(0)|`.
    pub gaps: Vec<f64>,
    pub gaps_shrink: bool,
    pub cauchy: bool,
    pub sup_bound_holds: bool,
    pub barrier: Option<BarrierFit>,
}

impl EtaSeries {
    pub fn limit_estimate(&self) -> f64 {
        *self.center_values.last().unwrap_or(&f64::NAN)
    }

    pub fn final_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(0.0)
    }

    /// `u_n(0)` is nonincreasing along the radii.
    pub fn decreasing(&self) -> bool {
        self.center_values.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExhaustionReport {
    pub radii: Vec<f64>,
    pub nodes: usize,
    pub observation_radius: f64,
    pub series: Vec<EtaSeries>,
    pub solves: Vec<BallSolve>,
    /// Largest difference between the limit estimates of distinct `η`.
    pub limit_spread: f64,
}

impl ExhaustionReport {
    pub fn series_for(&self, eta: f64) -> Option<&EtaSeries> {
        self.series.iter().find(|s| s.eta == eta)
    }

    /// Center values as CSV (`n,eta,u0`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,eta,u0\n");
        for s in &self.solves {
            out.push_str(&format!("{},{},{:.17e}\n", s.radius, s.eta, s.center_value));
        }
        out
    }
}

fn solve_ball(
    setup: &ExhaustionSetup,
    coeff: &CoefficientModel,
    radius: f64,
) -> Result<Vec<RadialSolution>> {
    let grid = RadialGrid::new(radius, setup.nodes, setup.grading)?;
    let problem = DirichletProblem::new(setup.params, coeff.clone(), 0.0, grid);
    let solver = DirichletSolver::new(&problem)?;
    setup.etas.iter().map(|&eta| solver.solve(eta)).collect()
}

fn fit_barrier(
    setup: &ExhaustionSetup,
    coeff: &CoefficientModel,
    eta: f64,
    solutions: &[&RadialSolution],
) -> Result<Option<BarrierFit>> {
    let r0 = match coeff.mode {
        BoundMode::UpperBound { r0 } => r0,
        BoundMode::LowerBound => 1.0,
    };
    let construction = match decay_barrier(
        &setup.params,
        coeff.alpha,
        coeff.density_constant,
        r0,
        1.0,
        &QuadratureConfig::default(),
    ) {
        Ok(b) => b,
        Err(MixlapError::RegimePrecondition(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let beta = construction.beta;
    let tail = |sol: &RadialSolution| -> Vec<(f64, f64)> {
        let n = *sol.nodes.last().unwrap_or(&0.0);
        sol.nodes
            .iter()
            .zip(&sol.values)
            .filter(|(&r, _)| r > r0 && r < n)
            .map(|(&r, &u)| (r, (u - eta).abs()))
            .collect()
    };
    let first = tail(solutions[0]);
    let scale = first
        .iter()
        .fold(0.0f64, |m, &(r, gap)| m.max(gap * r.powf(beta)));
    let dominating_scale = construction.scale.max(2.0 * eta.abs() * r0.powf(beta));
    let holds = |c: f64, r: f64, gap: f64| gap <= c * r.powf(-beta) * (1.0 + 1e-12) + 1e-14;
    let mut tail_nodes = 0;
    let mut satisfied = 0;
    let mut dominated = 0;
    let mut per_radius_fraction = Vec::with_capacity(solutions.len());
    for sol in solutions {
        let pts = tail(sol);
        let ok = pts.iter().filter(|&&(r, gap)| holds(scale, r, gap)).count();
        dominated += pts
            .iter()
            .filter(|&&(r, gap)| holds(dominating_scale, r, gap))
            .count();
        per_radius_fraction.push(if pts.is_empty() {
            1.0
        } else {
            ok as f64 / pts.len() as f64
        });
        tail_nodes += pts.len();
        satisfied += ok;
    }
    let share = |k: usize| {
        if tail_nodes == 0 {
            1.0
        } else {
            k as f64 / tail_nodes as f64
        }
    };
    Ok(Some(BarrierFit {
        beta,
        r0,
        scale,
        construction_scale: construction.scale,
        tail_nodes,
        satisfied,
        per_radius_fraction,
        fraction: share(satisfied),
        dominating_scale,
        dominating_fraction: share(dominated),
    }))
}

/// Solve on every ball (in parallel across radii, one factorization each) for
/// every `η`, then summarize convergence of the center values and, when a
/// power-law barrier exists, the frozen-`C` barrier bound.
pub fn exhaustion_experiment(
    setup: &ExhaustionSetup,
    coeff: &CoefficientModel,
) -> Result<ExhaustionReport> {
    setup.validate()?;
    let r_obs = setup.observation_radius();
    let per_radius = setup
        .radii
        .par_iter()
        .map(|&n| solve_ball(setup, coeff, n))
        .collect::<Result<Vec<_>>>()?;

    let mut solves = Vec::new();
    for (&n, sols) in setup.radii.iter().zip(&per_radius) {
        for sol in sols {
            let (window_radii, window_values) = sol
                .nodes
                .iter()
                .zip(&sol.values)
                .filter(|(&r, _)| r <= r_obs)
                .map(|(&r, &u)| (r, u))
                .unzip();
            solves.push(BallSolve {
                radius: n,
                eta: sol.eta,
                center_value: sol.center_value,
                max_abs: sol.max_abs,
                residual_norm: sol.residual_norm,
                within_sup_bound: sol.max_abs <= sol.eta.abs() + SUP_BOUND_TOL,
                window_radii,
                window_values,
            });
        }
    }

    let mut series = Vec::with_capacity(setup.etas.len());
    for (k, &eta) in setup.etas.iter().enumerate() {
        let sols: Vec<&RadialSolution> = per_radius.iter().map(|v| &v[k]).collect();
        let center_values: Vec<f64> = sols.iter().map(|s| s.center_value).collect();
        let gaps: Vec<f64> = center_values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .collect();
        let final_gap = gaps.last().copied().unwrap_or(0.0);
        series.push(EtaSeries {
            eta,
            gaps_shrink: gaps.windows(2).all(|w| w[1] <= w[0]),
            cauchy: final_gap <= CAUCHY_TOL * eta.abs().max(f64::MIN_POSITIVE),
            sup_bound_holds: sols.iter().all(|s| s.max_abs <= eta.abs() + SUP_BOUND_TOL),
            barrier: if eta == 0.0 {
                None
            } else {
                fit_barrier(setup, coeff, eta, &sols)?
            },
            center_values,
            gaps,
        });
    }
    let limits: Vec<f64> = series.iter().map(EtaSeries::limit_estimate).collect();
    let limit_spread = limits
        .iter()
        .flat_map(|a| limits.iter().map(move |b| (a - b).abs()))
        .fold(0.0, f64::max);

    Ok(ExhaustionReport {
        radii: setup.radii.clone(),
        nodes: setup.nodes,
        observation_radius: r_obs,
        series,
        solves,
        limit_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(etas: Vec<f64>) -> ExhaustionSetup {
        ExhaustionSetup {
            params: OperatorParams::new(3, 0.25).unwrap(),
            radii: vec![4.0, 8.0],
            etas,
            nodes: 120,
            grading: Grading::Uniform,
            observation_radius: None,
        }
    }

    #[test]
    fn zero_exterior_value_is_trivially_cauchy() {
        let coeff = CoefficientModel::upper_bound(1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = exhaustion_experiment(&setup(vec![0.0]), &coeff).unwrap();
        let s = &rep.series[0];
        assert!(s.center_values.iter().all(|&u| u.abs() < 1e-14));
        assert!(s.cauchy && s.sup_bound_holds && s.barrier.is_none());
    }

    #[test]
    fn solutions_scale_with_eta() {
        let coeff = CoefficientModel::upper_bound(1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = exhaustion_experiment(&setup(vec![1.0, 2.0]), &coeff).unwrap();
        for (a, b) in rep.series[0]
            .center_values
            .iter()
            .zip(&rep.series[1].center_values)
        {
            assert!((2.0 * a - b).abs() < 1e-12);
            assert!(*a > 0.0 && *a < 1.0);
        }
        assert_eq!(rep.solves.len(), 4);
        assert!(rep
            .solves
            .iter()
            .all(|s| s.window_radii.iter().all(|&r| r <= 2.0)));
        assert!(rep.series[0].barrier.is_some());
    }

    #[test]
    fn rejects_unsorted_radii() {
        let coeff = CoefficientModel::upper_bound(1.0, 1.0, 1.0, 1.0).unwrap();
        let mut s = setup(vec![1.0]);
        s.radii = vec![8.0, 4.0];
        assert!(exhaustion_experiment(&s, &coeff).is_err());
    }
}

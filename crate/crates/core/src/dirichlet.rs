//! Radial finite-volume discretization of `-𝓛u + ρ c u = f` on a ball with a
//! constant exterior value, and the discrete maximum-principle checks.
//!
//! Nodes `0 = r_0 < … < r_M = R` carry control volumes (measured in units of
//! the unit-sphere area). The local part is the flux form of the radial
//! Laplacian; the nonlocal part couples every pair of cells through the
//! angle-integrated kernel and every cell to the exterior through its
//! analytic tail. The self-cell singular contribution is approximately a
//! multiple of the Laplacian and is folded into the flux coefficients, so the
//! scaled system matrix is symmetric with nonpositive off-diagonal entries
//! and exact zero row sums for constants.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{MixlapError, Result};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::radial::{exterior_moment_three_dim, sphere_area, OperatorParams, RadialFunction};
use crate::special::{gamma, hyp2f1_one_minus};

pub const MIN_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// Clusters nodes at both ends of `[0, R]`; `power = 1` is uniform.
    Graded {
        power: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialGrid {
    radius: f64,
    nodes: Vec<f64>,
    grading: Grading,
}

impl RadialGrid {
    /// `nodes` radii (including both endpoints) on `[0, radius]`.
    pub fn new(radius: f64, nodes: usize, grading: Grading) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MixlapError::Grid(format!(
                "radius {radius} must be positive"
            )));
        }
        if nodes < MIN_NODES {
            return Err(MixlapError::Grid(format!(
                "{nodes} nodes, need at least {MIN_NODES}"
            )));
        }
        let m = (nodes - 1) as f64;
        let map: Box<dyn Fn(f64) -> f64> = match grading {
            Grading::Uniform => Box::new(|x| x),
            Grading::Graded { power } if power >= 1.0 => {
                Box::new(move |x: f64| x.powf(power) / (x.powf(power) + (1.0 - x).powf(power)))
            }
            Grading::Graded { power } => {
                return Err(MixlapError::Grid(format!(
                    "grading power {power} must be >= 1"
                )))
            }
        };
        let mut pts: Vec<f64> = (0..nodes).map(|i| radius * map(i as f64 / m)).collect();
        pts[0] = 0.0;
        pts[nodes - 1] = radius;
        Self::from_nodes_with(pts, grading)
    }

    pub fn uniform(radius: f64, nodes: usize) -> Result<Self> {
        Self::new(radius, nodes, Grading::Uniform)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        Self::from_nodes_with(nodes, Grading::Uniform)
    }

    fn from_nodes_with(nodes: Vec<f64>, grading: Grading) -> Result<Self> {
        if nodes.len() < MIN_NODES {
            return Err(MixlapError::Grid(format!(
                "{} nodes, need at least {MIN_NODES}",
                nodes.len()
            )));
        }
        if nodes[0] != 0.0 {
            return Err(MixlapError::Grid("first node must be the origin".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(MixlapError::Grid(format!(
                "nodes not strictly increasing near {}",
                w[0]
            )));
        }
        let radius = *nodes.last().unwrap_or(&0.0);
        Ok(Self {
            radius,
            nodes,
            grading,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    /// Number of unknowns: every node except the boundary node `r_M = R`.
    pub fn unknowns(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `∫ ρ^{N-1} dρ` over each node's cell (half cells at both ends).
    pub fn cell_volumes(&self, dim: usize) -> Vec<f64> {
        let n = dim as i32;
        let x = &self.nodes;
        let last = x.len() - 1;
        (0..=last)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { 0.5 * (x[i - 1] + x[i]) };
                let hi = if i == last {
                    x[i]
                } else {
                    0.5 * (x[i] + x[i + 1])
                };
                (hi.powi(n) - lo.powi(n)) / dim as f64
            })
            .collect()
    }
}

/// `∫_{S^{N-1}} |x - ρω|^{-N-2s} dω` for `|x| = r`, `r ≠ ρ`.
pub fn angle_integrated_kernel(params: &OperatorParams, r: f64, rho: f64) -> Result<f64> {
    let dim = params.dim();
    let s = params.s();
    let p = dim as f64 + 2.0 * s;
    let (lo, hi) = if r < rho { (r, rho) } else { (rho, r) };
    if !(hi > lo) || lo < 0.0 {
        return Err(MixlapError::Domain(format!(
            "kernel needs distinct nonnegative radii, got {r}, {rho}"
        )));
    }
    if lo == 0.0 {
        return Ok(sphere_area(dim) * hi.powf(-p));
    }
    match dim {
        1 => Ok((hi - lo).powf(-1.0 - 2.0 * s) + (hi + lo).powf(-1.0 - 2.0 * s)),
        3 => {
            let q = 1.0 + 2.0 * s;
            let x = lo / hi;
            let bracket = (hi + lo).powf(-q) * (2.0 * q * x.atanh()).exp_m1();
            Ok(2.0 * PI / (q * r * rho) * bracket)
        }
        _ => {
            let w = ((hi - lo) / (hi + lo)).powi(2);
            let n = dim as f64;
            Ok(sphere_area(dim)
                * (hi + lo).powf(-p)
                * hyp2f1_one_minus(p / 2.0, (n - 1.0) / 2.0, n - 1.0, w)?)
        }
    }
}

/// Reference value of [`angle_integrated_kernel`] by adaptive angular quadrature.
pub fn angle_integrated_kernel_by_quadrature(
    params: &OperatorParams,
    r: f64,
    rho: f64,
) -> Result<f64> {
    let dim = params.dim();
    let p = dim as f64 + 2.0 * params.s();
    if dim == 1 {
        return angle_integrated_kernel(params, r, rho);
    }
    let d = r - rho;
    let cross = 4.0 * r * rho;
    let power = (dim - 2) as i32;
    let integrand = |theta: f64| {
        let c = (0.5 * theta).sin();
        (d * d + cross * c * c).powf(-p / 2.0) * theta.sin().powi(power)
    };
    // the integrand peaks sharply at θ = 0 when r ≈ ρ
    let width = (d.abs() / (r + rho).max(f64::MIN_POSITIVE)).max(1e-12);
    let mut breaks = vec![0.0, PI];
    for k in [1.0, 4.0, 16.0, 64.0] {
        if k * width < PI {
            breaks.push(k * width);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-13,
        max_intervals: 20_000,
    };
    let est = integrate_with_breaks(integrand, &breaks, tol)?;
    let ring = sphere_area(dim - 1);
    Ok(ring * est.value)
}

/// `∫_R^∞ K(r, ρ) ρ^{N-1} dρ` for `r < R`.
pub fn exterior_kernel_moment(params: &OperatorParams, r: f64, radius: f64) -> Result<f64> {
    let dim = params.dim();
    let s = params.s();
    if !(r < radius) {
        return Err(MixlapError::Domain(format!(
            "exterior moment needs r = {r} < R = {radius}"
        )));
    }
    if r == 0.0 {
        return Ok(sphere_area(dim) * radius.powf(-2.0 * s) / (2.0 * s));
    }
    match dim {
        3 => Ok(2.0 * PI / ((1.0 + 2.0 * s) * r) * exterior_moment_three_dim(s, r, radius)),
        1 => {
            let q = 2.0 * s;
            Ok(((radius - r).powf(-q) + (radius + r).powf(-q)) / q)
        }
        _ => {
            let far = 1e4 * radius;
            let n1 = (dim - 1) as i32;
            let integrand = |u: f64| {
                let gap = u.exp();
                let rho = r + gap;
                angle_integrated_kernel(params, r, rho).unwrap_or(f64::NAN) * rho.powi(n1) * gap
            };
            let lo = (radius - r).ln();
            let hi = (far - r).ln();
            let mut breaks = vec![lo, hi];
            for cut in [r, 2.0 * r, 10.0 * radius] {
                if cut.ln() > lo && cut.ln() < hi {
                    breaks.push(cut.ln());
                }
            }
            breaks.sort_by(f64::total_cmp);
            let near = integrate_with_breaks(integrand, &breaks, Tolerance::new(0.0, 1e-12))?;
            let tail = sphere_area(dim) * far.powf(-2.0 * s) / (2.0 * s);
            Ok(near.value + tail)
        }
    }
}

/// Flux-coefficient enhancement that accounts for the singular self-cell
/// part of the nonlocal operator over `|ρ - r| < half_width`.
fn self_cell_correction(params: &OperatorParams, half_width: f64, at_origin: bool) -> Result<f64> {
    let n = params.dim() as f64;
    let s = params.s();
    let c = params.normalization();
    let scale = half_width.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    if at_origin {
        Ok(c * sphere_area(params.dim()) * scale / (2.0 * n))
    } else {
        let k0 = PI.powf((n - 1.0) / 2.0) * gamma(0.5 + s)? / gamma((n + 2.0 * s) / 2.0)?;
        Ok(c * k0 * scale)
    }
}

/// The Dirichlet problem `-𝓛u + ρ c u = f` in `B_R`, `u = η` outside.
#[derive(Clone, Debug)]
pub struct DirichletProblem {
    pub params: OperatorParams,
    pub coeff: CoefficientModel,
    pub eta: f64,
    pub grid: RadialGrid,
    pub source: Option<RadialFunction>,
}

impl DirichletProblem {
    pub fn new(
        params: OperatorParams,
        coeff: CoefficientModel,
        eta: f64,
        grid: RadialGrid,
    ) -> Self {
        Self {
            params,
            coeff,
            eta,
            grid,
            source: None,
        }
    }

    pub fn with_source(mut self, source: RadialFunction) -> Self {
        self.source = Some(source);
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() {
            return Err(MixlapError::Domain("exterior value must be finite".into()));
        }
        for &r in self.grid.nodes() {
            let v = self.coeff.absorption(r);
            if !(v >= 0.0) {
                return Err(MixlapError::Domain(format!(
                    "potential ρc = {v} < 0 at r = {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Scaled discrete system: row `i` is `V_i` times the equation at node `i`.
///
/// `local` and `nonlocal` are symmetric; `exterior_coupling[i]` multiplies
/// `η` on the right-hand side.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub nodes: Vec<f64>,
    pub volumes: Vec<f64>,
    pub local: DMatrix<f64>,
    pub nonlocal: DMatrix<f64>,
    pub absorption: Vec<f64>,
    pub exterior_coupling: Vec<f64>,
    pub source: Vec<f64>,
}

impl Assembly {
    pub fn unknowns(&self) -> usize {
        self.volumes.len()
    }

    /// `local + nonlocal`: the discrete form `𝓑(u, v)` for `u, v` vanishing outside the ball.
    pub fn stiffness(&self) -> DMatrix<f64> {
        &self.local + &self.nonlocal
    }

    /// Symmetric system matrix including the absorption term.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let mut m = self.stiffness();
        for (i, a) in self.absorption.iter().enumerate() {
            m[(i, i)] += a;
        }
        m
    }

    /// The unscaled operator `-𝓛 + ρc` restricted to interior nodes.
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let mut m = self.system_matrix();
        for (i, v) in self.volumes.iter().enumerate() {
            m.row_mut(i).scale_mut(1.0 / v);
        }
        m
    }

    /// Right-hand side of [`Self::operator_matrix`] for exterior value `eta`.
    pub fn operator_rhs(&self, eta: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.unknowns(),
            (0..self.unknowns())
                .map(|i| (self.source[i] + eta * self.exterior_coupling[i]) / self.volumes[i]),
        )
    }

    /// Scaled right-hand side for source values `source` (already multiplied by the volumes).
    pub fn scaled_rhs(&self, source: &[f64], eta: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.unknowns(),
            source
                .iter()
                .zip(&self.exterior_coupling)
                .map(|(f, c)| f + eta * c),
        )
    }

    /// Break the M-matrix structure by a positive symmetric coupling of
    /// nodes `i` and `j` (fault injection for the maximum-principle checks).
    pub fn inject_positive_coupling(&mut self, i: usize, j: usize, strength: f64) {
        let a = strength * (self.nonlocal[(i, i)] * self.nonlocal[(j, j)]).sqrt();
        self.nonlocal[(i, j)] = a;
        self.nonlocal[(j, i)] = a;
    }
}

/// Positive diagonal and nonpositive off-diagonal entries.
pub fn check_sign_pattern(matrix: &DMatrix<f64>) -> Result<()> {
    for j in 0..matrix.ncols() {
        for i in 0..matrix.nrows() {
            let v = matrix[(i, j)];
            let bad = if i == j { !(v > 0.0) } else { v > 0.0 };
            if bad {
                return Err(MixlapError::SignPattern {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

pub fn assemble(problem: &DirichletProblem) -> Result<Assembly> {
    problem.validate()?;
    let params = &problem.params;
    let dim = params.dim();
    let c = params.normalization();
    let x = problem.grid.nodes();
    let m = problem.grid.unknowns();
    let radius = problem.grid.radius();
    let all_volumes = problem.grid.cell_volumes(dim);
    let volumes = all_volumes[..m].to_vec();

    // local flux form with the self-cell enhancement on each edge
    let mut local = DMatrix::zeros(m, m);
    let mut exterior_coupling = vec![0.0; m];
    for e in 0..m {
        let h = x[e + 1] - x[e];
        let mid = 0.5 * (x[e] + x[e + 1]);
        let flux = mid.powi(dim as i32 - 1) / h;
        let weight = flux * (1.0 + self_cell_correction(params, 0.5 * h, e == 0)?);
        local[(e, e)] += weight;
        if e + 1 < m {
            local[(e + 1, e + 1)] += weight;
            local[(e, e + 1)] -= weight;
            local[(e + 1, e)] -= weight;
        } else {
            exterior_coupling[e] += weight;
        }
    }

    // nonlocal pair interactions, row by row (upper triangle incl. the boundary node)
    let rows: Vec<Result<(Vec<f64>, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(m + 1 - i);
            for j in i + 1..=m {
                row.push(
                    c * volumes[i] * all_volumes[j] * angle_integrated_kernel(params, x[i], x[j])?,
                );
            }
            let ext = c * volumes[i] * exterior_kernel_moment(params, x[i], radius)?;
            Ok((row, ext))
        })
        .collect();
    let mut nonlocal = DMatrix::zeros(m, m);
    for (i, res) in rows.into_iter().enumerate() {
        let (row, ext) = res?;
        nonlocal[(i, i)] += ext;
        exterior_coupling[i] += ext;
        for (k, w) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            nonlocal[(i, i)] += w;
            if j < m {
                nonlocal[(j, j)] += w;
                nonlocal[(i, j)] = -w;
                nonlocal[(j, i)] = -w;
            } else {
                exterior_coupling[i] += w;
            }
        }
    }

    let absorption: Vec<f64> = (0..m)
        .map(|i| volumes[i] * problem.coeff.absorption(x[i]))
        .collect();
    let source: Vec<f64> = match &problem.source {
        Some(f) => (0..m).map(|i| volumes[i] * f.value(x[i])).collect(),
        None => vec![0.0; m],
    };
    let out = Assembly {
        nodes: x.to_vec(),
        volumes,
        local,
        nonlocal,
        absorption,
        exterior_coupling,
        source,
    };
    check_sign_pattern(&out.system_matrix())?;
    Ok(out)
}

/// Factored system matrix, reused for any number of right-hand sides.
pub enum Factorization {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factorization {
    /// Cholesky when the matrix is positive definite, partial-pivot LU otherwise.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        match matrix.clone().cholesky() {
            Some(ch) => Ok(Factorization::Cholesky(ch)),
            None => {
                let lu = matrix.lu();
                if lu.is_invertible() {
                    Ok(Factorization::Lu(lu))
                } else {
                    Err(MixlapError::Singular)
                }
            }
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Factorization::Cholesky(ch) => Ok(ch.solve(rhs)),
            Factorization::Lu(lu) => lu.solve(rhs).ok_or(MixlapError::Singular),
        }
    }
}

/// An assembled and factored problem.
pub struct DirichletSolver {
    pub assembly: Assembly,
    matrix: DMatrix<f64>,
    factorization: Factorization,
}

impl DirichletSolver {
    pub fn new(problem: &DirichletProblem) -> Result<Self> {
        Self::from_assembly(assemble(problem)?)
    }

    /// Factor an assembly as given, without re-checking its sign pattern.
    pub fn from_assembly(assembly: Assembly) -> Result<Self> {
        let matrix = assembly.system_matrix();
        let factorization = Factorization::new(matrix.clone())?;
        Ok(Self {
            assembly,
            matrix,
            factorization,
        })
    }

    /// Solve with scaled source `source` (volume-weighted) and exterior value `eta`.
    /// Returns the interior values and the relative residual.
    pub fn solve_scaled(&self, source: &[f64], eta: f64) -> Result<(DVector<f64>, f64)> {
        let rhs = self.assembly.scaled_rhs(source, eta);
        let u = self.factorization.solve(&rhs)?;
        let residual = (&self.matrix * &u - &rhs).amax();
        let scale = rhs
            .amax()
            .max(self.matrix.amax() * u.amax())
            .max(f64::MIN_POSITIVE);
        Ok((u, residual / scale))
    }

    pub fn solve(&self, eta: f64) -> Result<RadialSolution> {
        let (u, residual) = self.solve_scaled(&self.assembly.source, eta)?;
        Ok(self.package(u, eta, residual))
    }

    fn package(&self, u: DVector<f64>, eta: f64, residual_norm: f64) -> RadialSolution {
        let v = u.add_scalar(-eta);
        let energy = v.dot(&(self.assembly.stiffness() * &v));
        let mut values: Vec<f64> = u.iter().copied().collect();
        values.push(eta);
        RadialSolution {
            nodes: self.assembly.nodes.clone(),
            center_value: values[0],
            max_abs: values.iter().fold(0.0, |m, v| m.max(v.abs())),
            values,
            eta,
            residual_norm,
            energy,
        }
    }
}

/// Discrete solution on the grid nodes, boundary node included.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialSolution {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub eta: f64,
    pub residual_norm: f64,
    pub center_value: f64,
    pub max_abs: f64,
    /// `𝓑(u - η, u - η)` in the scaled discrete form.
    pub energy: f64,
}

impl RadialSolution {
    /// Piecewise-linear interpolation; `η` outside the ball.
    pub fn value_at(&self, r: f64) -> f64 {
        let last = *self.nodes.last().unwrap_or(&0.0);
        if r >= last {
            return self.eta;
        }
        let k = self.nodes.partition_point(|&x| x <= r).max(1);
        let (x0, x1) = (self.nodes[k - 1], self.nodes[k]);
        let t = (r - x0) / (x1 - x0);
        self.values[k - 1] * (1.0 - t) + self.values[k] * t
    }

    /// `|u(r) - η|`.
    pub fn tail_gap(&self, r: f64) -> f64 {
        (self.value_at(r) - self.eta).abs()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,u\n");
        for (r, u) in self.nodes.iter().zip(&self.values) {
            out.push_str(&format!("{r:.17e},{u:.17e}\n"));
        }
        out
    }
}

pub fn solve_dirichlet(problem: &DirichletProblem) -> Result<RadialSolution> {
    DirichletSolver::new(problem)?.solve(problem.eta)
}

/// Outcome of randomized maximum-principle and comparison trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WmpReport {
    pub trials: usize,
    pub nonnegative_passes: usize,
    pub comparison_passes: usize,
    pub min_value: f64,
    pub worst_comparison: f64,
    pub failed_trials: Vec<usize>,
    pub passed: bool,
}

/// Random nonnegative `(f, η)` solves on the given problem's grid.
pub fn wmp_check(problem: &DirichletProblem, trials: usize, seed: u64) -> Result<WmpReport> {
    let solver = DirichletSolver::new(problem)?;
    wmp_check_solver(&solver, trials, seed)
}

/// [`wmp_check`] on a pre-built solver (which may carry an injected fault).
///
/// Even trials use dense random data; odd trials put a single source spike
/// on successive nodes with zero exterior value.
pub fn wmp_check_solver(solver: &DirichletSolver, trials: usize, seed: u64) -> Result<WmpReport> {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = solver.assembly.unknowns();
    let volumes = &solver.assembly.volumes;
    let mut report = WmpReport {
        trials,
        nonnegative_passes: 0,
        comparison_passes: 0,
        min_value: f64::INFINITY,
        worst_comparison: f64::INFINITY,
        failed_trials: Vec::new(),
        passed: true,
    };
    for t in 0..trials {
        let (f, eta): (Vec<f64>, f64) = if t % 2 == 0 {
            (
                (0..m).map(|_| rng.gen::<f64>()).collect(),
                rng.gen_range(0.0..2.0),
            )
        } else {
            let mut f = vec![0.0; m];
            f[(t / 2) % m] = rng.gen_range(0.5..1.5);
            (f, 0.0)
        };
        let bump: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 0.1).collect();
        let d_eta = rng.gen::<f64>() * 0.1;

        let scaled: Vec<f64> = f.iter().zip(volumes).map(|(a, v)| a * v).collect();
        let (u1, _) = solver.solve_scaled(&scaled, eta)?;
        let f2: Vec<f64> = f
            .iter()
            .zip(&bump)
            .zip(volumes)
            .map(|((a, b), v)| (a + b) * v)
            .collect();
        let (u2, _) = solver.solve_scaled(&f2, eta + d_eta)?;

        let scale = u1.amax().max(1.0);
        let min_u = u1.min();
        let gap = (&u2 - &u1).min();
        report.min_value = report.min_value.min(min_u);
        report.worst_comparison = report.worst_comparison.min(gap);
        let nonneg = min_u >= -TOL * scale;
        let ordered = gap >= -TOL * scale;
        report.nonnegative_passes += nonneg as usize;
        report.comparison_passes += ordered as usize;
        if !(nonneg && ordered) {
            report.failed_trials.push(t);
        }
    }
    report.passed = report.failed_trials.is_empty();
    Ok(report)
}

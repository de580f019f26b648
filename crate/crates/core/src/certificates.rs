//! Grid-verified supersolution certificates for the weights `ψ_β`.
//!
//! A certificate checks `𝓛ψ_β - p ρ c ψ_β < 0` (elliptic) or
//! `𝓛ψ_β <= λ ρ ψ_β` (parabolic) on a radial grid, with the explicit lower
//! bound on `p c0` (or `λ`) that makes the inequality provable in each of
//! the four `(β, α)` regimes. The barrier `V = C r^(-β)` used for the
//! nonuniqueness construction is built and checked here as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{BoundMode, CoefficientModel, CoefficientSummary};
use crate::error::{MixlapError, Result};
use crate::radial::{
    fraclap_quadrature, OperatorParams, QuadratureConfig, RadialFunction,
    WeightFractionalLaplacian, WeightSpec,
};
use crate::special::{far_field_constant, hyp2f1_one_minus, TailRegime};

/// The four `(β, α)` cases in which the weight `ψ_β` certifies uniqueness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightRegime {
    /// `0 < β <= N - 2s`, `α <= 2`.
    #[serde(rename = "i")]
    Subcritical,
    /// `N - 2s < β < N`, `α <= 2s`.
    #[serde(rename = "ii")]
    Intermediate,
    /// `β = N`, `α < 2s`.
    #[serde(rename = "iii")]
    Critical,
    /// `β > N`, `α + β <= 2s + N`.
    #[serde(rename = "iv")]
    Supercritical,
}

impl WeightRegime {
    pub const ALL: [WeightRegime; 4] = [
        WeightRegime::Subcritical,
        WeightRegime::Intermediate,
        WeightRegime::Critical,
        WeightRegime::Supercritical,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            WeightRegime::Subcritical => "i",
            WeightRegime::Intermediate => "ii",
            WeightRegime::Critical => "iii",
            WeightRegime::Supercritical => "iv",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "i" => Ok(WeightRegime::Subcritical),
            "ii" => Ok(WeightRegime::Intermediate),
            "iii" => Ok(WeightRegime::Critical),
            "iv" => Ok(WeightRegime::Supercritical),
            other => Err(MixlapError::Config(format!(
                "unknown regime `{other}` (use i, ii, iii, iv)"
            ))),
        }
    }

    /// The regime whose `β` range contains `beta`.
    pub fn of_beta(params: &OperatorParams, beta: f64) -> Self {
        let n = params.dim() as f64;
        if beta <= n - 2.0 * params.s() {
            WeightRegime::Subcritical
        } else {
            match TailRegime::classify(params, beta) {
                Ok(TailRegime::Logarithmic) => WeightRegime::Critical,
                Ok(TailRegime::Saturated) => WeightRegime::Supercritical,
                _ => WeightRegime::Intermediate,
            }
        }
    }

    /// Violated hypotheses, as human-readable messages.
    pub fn precondition_violations(
        self,
        params: &OperatorParams,
        beta: f64,
        alpha: f64,
    ) -> Vec<String> {
        let n = params.dim() as f64;
        let s = params.s();
        let mut out = Vec::new();
        if !(beta > 0.0) {
            out.push(format!("beta = {beta} must be positive"));
        }
        if WeightRegime::of_beta(params, beta) != self {
            out.push(format!(
                "beta = {beta} is outside the beta range of regime {}",
                self.tag()
            ));
        }
        let alpha_ok = match self {
            WeightRegime::Subcritical => alpha <= 2.0,
            WeightRegime::Intermediate => alpha <= 2.0 * s,
            WeightRegime::Critical => alpha < 2.0 * s,
            WeightRegime::Supercritical => alpha + beta <= 2.0 * s + n + 1e-12,
        };
        if !alpha_ok {
            out.push(format!(
                "alpha = {alpha} violates the alpha condition of regime {}",
                self.tag()
            ));
        }
        out
    }
}

/// The explicit lower bound on `p c0` (or `λ`) and the quantities behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub epsilon: f64,
    pub r_eps: f64,
    pub m_eps_beta: f64,
    /// Far-field constant of the tail regime (absent in regime i).
    pub tail_constant: Option<f64>,
    pub far_field_bound: Option<f64>,
    pub compact_bound: Option<f64>,
    pub prefactor: f64,
}

/// Relative size of `ε` with respect to the tail constant.
pub const DEFAULT_EPSILON_FRACTION: f64 = 0.1;

/// `-(-Δ)^s ψ_β / (K · decay)`, which tends to the tail constant as `r -> ∞`.
fn tail_ratio(params: &OperatorParams, beta: f64, regime: TailRegime, r: f64) -> Result<f64> {
    let n = params.dim() as f64;
    let s = params.s();
    let w = 1.0 / (1.0 + r * r);
    let f = hyp2f1_one_minus(-s, beta / 2.0 + s, n / 2.0, w)?;
    Ok(match regime {
        TailRegime::Algebraic => -f,
        TailRegime::Logarithmic => -f / (-w.ln()),
        TailRegime::Saturated => -f * w.powf((beta - n) / 2.0),
    })
}

/// Last radius on `[1, 1e15]` where `violates` holds, refined by bisection
/// to `1e-3` relative; `1` if it never holds.
fn last_violation(violates: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    const PER_DECADE: usize = 100;
    const DECADES: usize = 15;
    let grid: Vec<f64> = (0..=PER_DECADE * DECADES)
        .map(|k| 10f64.powf(k as f64 / PER_DECADE as f64))
        .collect();
    let mut last = None;
    for (k, &r) in grid.iter().enumerate() {
        if violates(r)? {
            last = Some(k);
        }
    }
    let k = match last {
        None => return Ok(1.0),
        Some(k) if k + 1 == grid.len() => {
            return Err(MixlapError::NonConvergence {
                what: "R_eps search",
                limit: grid.len(),
            })
        }
        Some(k) => k,
    };
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    while hi - lo > 1e-3 * lo {
        let mid = 0.5 * (lo + hi);
        if violates(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Default certificate grid: 400 log-spaced radii on `[1e-2, max(100, 10 R)]`
/// and 50 uniform radii on `[0, 1]`, sorted.
pub fn default_grid(r_eps: f64) -> Vec<f64> {
    let top = (10.0 * r_eps).max(100.0);
    let (a, b) = (1e-2f64.ln(), top.ln());
    let mut grid: Vec<f64> = (0..400)
        .map(|k| (a + (b - a) * k as f64 / 399.0).exp())
        .collect();
    grid.extend((0..50).map(|k| k as f64 / 49.0));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Minimal `p c0` (equivalently `λ`) for which `ψ_β` is certified in `regime`.
///
/// `epsilon = None` uses `0.1` times the tail constant.
pub fn threshold_pc0(
    regime: WeightRegime,
    closed: &WeightFractionalLaplacian,
    coeff: &CoefficientModel,
    epsilon: Option<f64>,
) -> Result<Threshold> {
    let params = closed.params;
    let beta = closed.weight.beta;
    let n = params.dim() as f64;
    let s = params.s();
    let alpha = coeff.alpha;
    let c_lower = coeff.density_constant;
    let prefactor = closed.prefactor();

    if regime == WeightRegime::Subcritical {
        let value = if beta < n - 2.0 {
            0.0
        } else {
            beta * (beta - n + 2.0) / c_lower
        };
        return Ok(Threshold {
            value,
            epsilon: 0.0,
            r_eps: 0.0,
            m_eps_beta: 0.0,
            tail_constant: None,
            far_field_bound: None,
            compact_bound: None,
            prefactor,
        });
    }

    let constant = far_field_constant(&params, beta)?;
    let expected = match regime {
        WeightRegime::Intermediate => TailRegime::Algebraic,
        WeightRegime::Critical => TailRegime::Logarithmic,
        _ => TailRegime::Saturated,
    };
    if constant.regime != expected {
        return Err(MixlapError::RegimePrecondition(format!(
            "beta = {beta} does not belong to regime {}",
            regime.tag()
        )));
    }
    let k = constant.value;
    let eps = epsilon.unwrap_or(DEFAULT_EPSILON_FRACTION * k);
    if !(eps > 0.0) {
        return Err(MixlapError::Domain(format!(
            "epsilon = {eps} must be positive"
        )));
    }
    let mut r_eps =
        last_violation(|r| Ok((tail_ratio(&params, beta, constant.regime, r)? - k).abs() > eps))?;
    if regime == WeightRegime::Critical {
        // the logarithm must also be absorbed by (1+r²)^(s-α/2)
        let log_absorbed = last_violation(|r| {
            let q = 1.0 + r * r;
            Ok(q.ln() * q.powf(alpha / 2.0 - s) > 1.0)
        })?;
        r_eps = r_eps.max(log_absorbed);
    }

    // maximum of |(-Δ)^s ψ| on the closed ball of radius R_eps
    let samples = 2000;
    let mut m_eps_beta: f64 = 0.0;
    for j in 0..=samples {
        let r = r_eps * j as f64 / samples as f64;
        m_eps_beta = m_eps_beta.max(closed.eval(r)?.abs());
    }

    let bb = beta * (beta + 2.0);
    let far = 2.0 / c_lower * (prefactor * (k + eps)).max(bb);
    let q = 1.0 + r_eps * r_eps;
    let compact = 2.0 / c_lower * (m_eps_beta + bb / q) * q.powf((beta + alpha) / 2.0);
    Ok(Threshold {
        value: far.max(compact),
        epsilon: eps,
        r_eps,
        m_eps_beta,
        tail_constant: Some(k),
        far_field_bound: Some(far),
        compact_bound: Some(compact),
        prefactor,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Elliptic,
    ParabolicLambda,
}

/// A verified (or refuted) supersolution inequality on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub regime: WeightRegime,
    #[serde(rename = "N")]
    pub dim: usize,
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `p` for elliptic certificates, `λ` for parabolic ones.
    pub p: f64,
    pub c0: f64,
    #[serde(rename = "C0")]
    pub density_constant: f64,
    pub threshold: f64,
    pub epsilon: f64,
    #[serde(rename = "R_eps")]
    pub r_eps: f64,
    #[serde(rename = "M_eps_beta")]
    pub m_eps_beta: f64,
    pub prefactor: f64,
    pub grid: Vec<f64>,
    pub margins: Vec<f64>,
    pub margin_floors: Vec<f64>,
    pub first_violation: Option<f64>,
    /// `ψ + |ψ'| <= (1 + β) ψ` on the grid.
    pub growth_bound_holds: bool,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn max_margin(&self) -> f64 {
        self.margins
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Options shared by the certificate builders.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    /// Radii to test; `None` uses [`default_grid`].
    pub grid: Option<Vec<f64>>,
    /// Required relative excess of `p c0` over the threshold before a warning.
    pub safety: f64,
    pub epsilon: Option<f64>,
    pub quadrature: QuadratureConfig,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            grid: None,
            safety: 0.1,
            epsilon: None,
            quadrature: QuadratureConfig::default(),
        }
    }
}

struct Evaluated {
    threshold: Threshold,
    grid: Vec<f64>,
    /// `(Δψ, (-Δ)^s ψ, ψ, |ψ'|)` per radius
    terms: Vec<(f64, f64, f64, f64)>,
    warnings: Vec<String>,
}

fn evaluate(
    regime: WeightRegime,
    params: &OperatorParams,
    beta: f64,
    coeff: &CoefficientModel,
    options: &CertifyOptions,
) -> Result<(Evaluated, WeightFractionalLaplacian)> {
    let weight = WeightSpec::new(beta)?;
    let mut warnings = regime.precondition_violations(params, beta, coeff.alpha);
    if coeff.mode != BoundMode::LowerBound {
        warnings.push("coefficient model is not in lower-bound mode".into());
    }
    let closed = WeightFractionalLaplacian::calibrate(params, weight, &options.quadrature)?;
    let threshold = match threshold_pc0(regime, &closed, coeff, options.epsilon) {
        Ok(t) => t,
        Err(e) => {
            warnings.push(format!("threshold unavailable: {e}"));
            Threshold {
                value: f64::NAN,
                epsilon: f64::NAN,
                r_eps: 1.0,
                m_eps_beta: f64::NAN,
                tail_constant: None,
                far_field_bound: None,
                compact_bound: None,
                prefactor: closed.prefactor(),
            }
        }
    };
    let grid = options
        .grid
        .clone()
        .unwrap_or_else(|| default_grid(threshold.r_eps.max(1.0)));
    if let Err(e) = coeff.validate(&grid) {
        warnings.push(format!("coefficient model: {e}"));
    }
    let terms = grid
        .par_iter()
        .map(|&r| -> Result<(f64, f64, f64, f64)> {
            Ok((
                weight.laplacian(params.dim(), r),
                closed.eval(r)?,
                weight.value(r),
                weight.derivative(r).abs(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Evaluated {
            threshold,
            grid,
            terms,
            warnings,
        },
        closed,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kind: CertificateKind,
    regime: WeightRegime,
    params: &OperatorParams,
    beta: f64,
    multiplier: f64,
    coeff: &CoefficientModel,
    ev: Evaluated,
    absorption: impl Fn(f64) -> f64,
) -> Certificate {
    let mut margins = Vec::with_capacity(ev.grid.len());
    let mut floors = Vec::with_capacity(ev.grid.len());
    let mut growth_ok = true;
    for (&r, &(lap, frac, psi, dpsi)) in ev.grid.iter().zip(&ev.terms) {
        let sink = multiplier * absorption(r) * psi;
        margins.push(lap - frac - sink);
        floors.push(1e-12 * (lap.abs() + frac.abs() + sink.abs()));
        growth_ok &= psi + dpsi <= (1.0 + beta) * psi * (1.0 + 1e-14);
    }
    let first_violation = ev
        .grid
        .iter()
        .zip(margins.iter().zip(&floors))
        .find(|(_, (m, f))| **m > -**f)
        .map(|(r, _)| *r);
    let verdict = if first_violation.is_none() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Certificate {
        kind,
        regime,
        dim: params.dim(),
        s: params.s(),
        alpha: coeff.alpha,
        beta,
        p: multiplier,
        c0: coeff.potential_floor,
        density_constant: coeff.density_constant,
        threshold: ev.threshold.value,
        epsilon: ev.threshold.epsilon,
        r_eps: ev.threshold.r_eps,
        m_eps_beta: ev.threshold.m_eps_beta,
        prefactor: ev.threshold.prefactor,
        grid: ev.grid,
        margins,
        margin_floors: floors,
        first_violation,
        growth_bound_holds: growth_ok,
        warnings: ev.warnings,
        verdict,
    }
}

/// Check `𝓛ψ_β - p ρ c ψ_β < 0` on the grid.
///
/// Violated hypotheses and an insufficient `p c0` are recorded as warnings;
/// the margins are computed regardless.
pub fn certify_elliptic(
    regime: WeightRegime,
    params: &OperatorParams,
    beta: f64,
    p: f64,
    coeff: &CoefficientModel,
    options: &CertifyOptions,
) -> Result<Certificate> {
    if !(p >= 1.0) {
        return Err(MixlapError::Domain(format!(
            "exponent p = {p} must be >= 1"
        )));
    }
    let (mut ev, _) = evaluate(regime, params, beta, coeff, options)?;
    let pc0 = p * coeff.potential_floor;
    if pc0 < (1.0 + options.safety) * ev.threshold.value {
        ev.warnings.push(format!(
            "p*c0 = {pc0} is below (1 + {}) * threshold = {}",
            options.safety,
            (1.0 + options.safety) * ev.threshold.value
        ));
    }
    Ok(finish(
        CertificateKind::Elliptic,
        regime,
        params,
        beta,
        p,
        coeff,
        ev,
        |r| coeff.absorption(r),
    ))
}

/// Check `𝓛ψ_β <= λ ρ ψ_β` strictly on the grid, i.e. that
/// `e^(-λt) ψ_β` is a supersolution of `ρ u_t = 𝓛u`.
pub fn certify_parabolic_lambda(
    regime: WeightRegime,
    params: &OperatorParams,
    beta: f64,
    coeff: &CoefficientModel,
    lambda: f64,
    options: &CertifyOptions,
) -> Result<Certificate> {
    let (mut ev, _) = evaluate(regime, params, beta, coeff, options)?;
    if lambda < (1.0 + options.safety) * ev.threshold.value {
        ev.warnings.push(format!(
            "lambda = {lambda} is below (1 + safety) * threshold"
        ));
    }
    Ok(finish(
        CertificateKind::ParabolicLambda,
        regime,
        params,
        beta,
        lambda,
        coeff,
        ev,
        |r| coeff.density.value(r),
    ))
}

/// Smallest `p c0` for which the margins are negative on `grid`
/// (`sup (𝓛ψ) / (ρ c/c0 ψ)`), for comparison with the proof's threshold.
pub fn empirical_requirement(
    params: &OperatorParams,
    beta: f64,
    coeff: &CoefficientModel,
    grid: &[f64],
    quad: &QuadratureConfig,
) -> Result<f64> {
    let weight = WeightSpec::new(beta)?;
    let closed = WeightFractionalLaplacian::calibrate(params, weight, quad)?;
    let unit = coeff.potential_floor.max(f64::MIN_POSITIVE);
    let mut sup = f64::NEG_INFINITY;
    for &r in grid {
        let sink = coeff.absorption(r) / unit * weight.value(r);
        sup = sup.max(closed.mixed(r)? / sink);
    }
    Ok(sup)
}

/// The power-law barrier and its verification.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub beta: f64,
    /// Final multiplier `C` of `V = C r^(-β)`.
    pub scale: f64,
    /// `r^(β+2s) (-Δ)^s r^(-β)`, averaged over the sample radii.
    pub theta: f64,
    pub theta_radii: Vec<f64>,
    pub theta_samples: Vec<f64>,
    pub theta_spread: f64,
    pub grid: Vec<f64>,
    /// `𝓛V <= -ϑ C r^(-β-2s)` at the quadrature radii.
    pub decay_bound_holds: bool,
    /// `𝓛V <= -1.1 ρ` on the grid.
    pub absorbs_density: bool,
    pub nonnegative: bool,
    pub bounded_below_on_ball: bool,
    pub vanishes_at_infinity: bool,
    pub doublings: u32,
}

impl BarrierReport {
    pub fn passed(&self) -> bool {
        self.decay_bound_holds
            && self.absorbs_density
            && self.nonnegative
            && self.bounded_below_on_ball
            && self.vanishes_at_infinity
    }

    /// `V(r) = C r^(-β)`.
    pub fn value(&self, r: f64) -> f64 {
        self.scale * r.powf(-self.beta)
    }

    pub fn profile(&self) -> RadialFunction {
        RadialFunction::linear_combination(&[(self.scale, RadialFunction::power(self.beta))])
    }
}

pub const THETA_RADII: [f64; 3] = [2.0, 4.0, 8.0];
const MAX_DOUBLINGS: u32 = 40;

/// Build `V = C r^(-β)` with `β = min(N-2, α-2s)/2` and enlarge `C` until
/// `𝓛V <= -ρ` holds with a 10% margin beyond `max(1, r0)`, where
/// `ρ = density_bound (1+r²)^(-α/2)`.
pub fn decay_barrier(
    params: &OperatorParams,
    alpha: f64,
    density_bound: f64,
    r0: f64,
    initial_scale: f64,
    quad: &QuadratureConfig,
) -> Result<BarrierReport> {
    let n = params.dim() as f64;
    let s = params.s();
    if params.dim() <= 2 || alpha <= 2.0 * s {
        return Err(MixlapError::RegimePrecondition(format!(
            "barrier needs N > 2 and alpha > 2s (N = {}, alpha = {alpha}, 2s = {})",
            params.dim(),
            2.0 * s
        )));
    }
    if !(initial_scale > 0.0 && density_bound > 0.0 && r0 > 0.0) {
        return Err(MixlapError::Domain(
            "barrier scale, density bound and r0 must be positive".into(),
        ));
    }
    let beta = 0.5 * (n - 2.0).min(alpha - 2.0 * s);
    let unit = RadialFunction::power(beta);
    let theta_samples = THETA_RADII
        .iter()
        .map(|&r| Ok(fraclap_quadrature(params, &unit, r, quad)? * r.powf(beta + 2.0 * s)))
        .collect::<Result<Vec<f64>>>()?;
    let theta = theta_samples.iter().sum::<f64>() / theta_samples.len() as f64;
    let spread = theta_samples
        .iter()
        .fold(0.0f64, |m, t| m.max((t - theta).abs()))
        / theta.abs();

    let start = r0.max(1.0);
    let grid: Vec<f64> = (0..200)
        .map(|k| start * 1e4f64.powf(k as f64 / 199.0))
        .collect();
    let local = |r: f64| beta * (beta + 2.0 - n) * r.powf(-beta - 2.0);

    // decay bound, with the fractional part by quadrature
    let mut decay_ok = true;
    for &r in THETA_RADII.iter().chain([16.0, 32.0].iter()) {
        let frac = fraclap_quadrature(params, &unit, r, quad)?;
        let lv = local(r) - frac;
        decay_ok &= lv <= -theta * r.powf(-beta - 2.0 * s) * (1.0 - 1e-6);
    }

    let density = |r: f64| density_bound * (1.0 + r * r).powf(-alpha / 2.0);
    let mut scale = initial_scale;
    let mut doublings = 0;
    let absorbs = |c: f64| {
        grid.iter()
            .all(|&r| c * (local(r) - theta * r.powf(-beta - 2.0 * s)) <= -1.1 * density(r))
    };
    while !absorbs(scale) {
        if doublings >= MAX_DOUBLINGS {
            break;
        }
        scale *= 2.0;
        doublings += 1;
    }
    let absorbs_density = absorbs(scale);
    let v = |r: f64| scale * r.powf(-beta);
    Ok(BarrierReport {
        beta,
        scale,
        theta,
        theta_radii: THETA_RADII.to_vec(),
        theta_samples,
        theta_spread: spread,
        grid: grid.clone(),
        decay_bound_holds: decay_ok,
        absorbs_density,
        nonnegative: grid.iter().all(|&r| v(r) >= 0.0),
        bounded_below_on_ball: v(start) > 0.0,
        vanishes_at_infinity: beta > 0.0 && grid.windows(2).all(|w| v(w[1]) < v(w[0])),
        doublings,
    })
}

/// Scalar parameters shared by report headers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertificateSetup {
    pub regime: WeightRegime,
    pub beta: f64,
    pub coefficients: CoefficientSummary,
}

//! Fractional Laplacian `(-Δ)^s` and the mixed operator `Δ - (-Δ)^s` on
//! radial functions.
//!
//! Two independent evaluators are provided: a direct quadrature of the
//! singular integral (spherical means in any dimension, or a closed 1-D
//! kernel in three dimensions), and a hypergeometric closed form for the
//! weights `ψ_β(r) = (1+r²)^(-β/2)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MixlapError, Result};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::special::{gamma, hyp2f1_neg_square};

/// `C_{N,s} = 2^{2s} s Γ(N/2 + s) / (π^{N/2} Γ(1 - s))`.
pub fn normalization_constant(dim: usize, s: f64) -> Result<f64> {
    let n = dim as f64;
    Ok(4f64.powf(s) * s * gamma(n / 2.0 + s)? / (PI.powf(n / 2.0) * gamma(1.0 - s)?))
}

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(n / 2.0) / gamma(n / 2.0).unwrap_or(f64::NAN)
}

/// Dimension, fractional order and the matching normalization constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct OperatorParams {
    dim: usize,
    s: f64,
    normalization: f64,
}

#[derive(Deserialize)]
struct RawParams {
    dim: usize,
    s: f64,
}

impl TryFrom<RawParams> for OperatorParams {
    type Error = MixlapError;
    fn try_from(raw: RawParams) -> Result<Self> {
        OperatorParams::new(raw.dim, raw.s)
    }
}

impl OperatorParams {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        if dim == 0 {
            return Err(MixlapError::Domain("dimension must be positive".into()));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(MixlapError::Domain(format!(
                "fractional order s = {s} outside (0, 1)"
            )));
        }
        Ok(Self {
            dim,
            s,
            normalization: normalization_constant(dim, s)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }
}

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A radial profile `r ↦ f(r)`, optionally with analytic derivatives.
///
/// `tail_exponent` is a growth bound `θ` with `|f(r)| <= K (1+r²)^(θ/2)`;
/// the fractional Laplacian is defined when `θ < 2s`.
#[derive(Clone)]
pub struct RadialFunction {
    label: String,
    value: Profile,
    first: Option<Profile>,
    second: Option<Profile>,
    tail_exponent: f64,
    singular_at_origin: bool,
}

impl fmt::Debug for RadialFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialFunction")
            .field("label", &self.label)
            .field("tail_exponent", &self.tail_exponent)
            .field(
                "analytic_derivatives",
                &(self.first.is_some(), self.second.is_some()),
            )
            .finish()
    }
}

impl RadialFunction {
    pub fn new(
        label: impl Into<String>,
        tail_exponent: f64,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            first: None,
            second: None,
            tail_exponent,
            singular_at_origin: false,
        }
    }

    /// Marks the profile as singular at `r = 0`, which keeps the near-field
    /// panel of the quadrature inside the ball of radius `r`.
    pub fn with_origin_singularity(mut self) -> Self {
        self.singular_at_origin = true;
        self
    }

    pub fn singular_at_origin(&self) -> bool {
        self.singular_at_origin
    }

    pub fn with_derivatives(
        mut self,
        first: impl Fn(f64) -> f64 + Send + Sync + 'static,
        second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.first = Some(Arc::new(first));
        self.second = Some(Arc::new(second));
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), 0.0, move |_| c).with_derivatives(|_| 0.0, |_| 0.0)
    }

    /// `ψ_β(r) = (1+r²)^(-β/2)`.
    pub fn weight(beta: f64) -> Self {
        WeightSpec { beta }.profile()
    }

    /// `r^(-β)`, singular at the origin.
    pub fn power(beta: f64) -> Self {
        Self::new(format!("r^-{beta}"), -beta, move |r: f64| r.powf(-beta))
            .with_derivatives(
                move |r: f64| -beta * r.powf(-beta - 1.0),
                move |r: f64| beta * (beta + 1.0) * r.powf(-beta - 2.0),
            )
            .with_origin_singularity()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn in_weighted_space(&self, s: f64) -> bool {
        self.tail_exponent < 2.0 * s
    }

    fn require_weighted_space(&self, s: f64) -> Result<()> {
        if self.in_weighted_space(s) {
            Ok(())
        } else {
            Err(MixlapError::NotInWeightedSpace {
                tail_exponent: self.tail_exponent,
                two_s: 2.0 * s,
            })
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        (self.value)(r)
    }

    /// Even extension `f(|r|)`, used by the finite-difference fallbacks.
    fn even(&self, r: f64) -> f64 {
        (self.value)(r.abs())
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match &self.first {
            Some(d) => d(r),
            None => {
                let h = 1e-5 * (1.0 + r);
                (self.even(r + h) - self.even(r - h)) / (2.0 * h)
            }
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match &self.second {
            Some(d) => d(r),
            None => {
                let h = 1e-4 * (1.0 + r);
                (self.even(r + h) - 2.0 * self.even(r) + self.even(r - h)) / (h * h)
            }
        }
    }

    /// Radial Laplacian `f'' + (N-1)/r f'`, with the limit `N f''(0)` at the origin.
    pub fn laplacian(&self, dim: usize, r: f64) -> f64 {
        let n = dim as f64;
        if r == 0.0 {
            n * self.second_derivative(0.0)
        } else {
            self.second_derivative(r) + (n - 1.0) / r * self.derivative(r)
        }
    }

    pub fn product(&self, other: &RadialFunction) -> RadialFunction {
        let (f, g) = (self.value.clone(), other.value.clone());
        let mut out = RadialFunction::new(
            format!("({})*({})", self.label, other.label),
            self.tail_exponent + other.tail_exponent,
            move |r| f(r) * g(r),
        );
        if let (Some(f1), Some(f2), Some(g1), Some(g2)) = (
            self.first.clone(),
            self.second.clone(),
            other.first.clone(),
            other.second.clone(),
        ) {
            let (f, g) = (self.value.clone(), other.value.clone());
            let (fa, ga, f1a, g1a) = (f.clone(), g.clone(), f1.clone(), g1.clone());
            out = out.with_derivatives(
                move |r| f1a(r) * ga(r) + fa(r) * g1a(r),
                move |r| f2(r) * g(r) + 2.0 * f1(r) * g1(r) + f(r) * g2(r),
            );
        }
        out.singular_at_origin = self.singular_at_origin || other.singular_at_origin;
        out
    }

    /// `Σ coef_k f_k`.
    pub fn linear_combination(terms: &[(f64, RadialFunction)]) -> RadialFunction {
        let tail = terms
            .iter()
            .map(|(_, f)| f.tail_exponent)
            .fold(f64::NEG_INFINITY, f64::max);
        let label = terms
            .iter()
            .map(|(c, f)| format!("{c}*{}", f.label))
            .collect::<Vec<_>>()
            .join(" + ");
        let parts: Vec<(f64, RadialFunction)> = terms.to_vec();
        let values = parts.clone();
        let out = RadialFunction::new(label, tail, move |r| {
            values.iter().map(|(c, f)| c * f.value(r)).sum()
        });
        let singular = parts.iter().any(|(_, f)| f.singular_at_origin);
        let firsts = parts.clone();
        let mut out = out.with_derivatives(
            move |r| firsts.iter().map(|(c, f)| c * f.derivative(r)).sum(),
            move |r| parts.iter().map(|(c, f)| c * f.second_derivative(r)).sum(),
        );
        out.singular_at_origin = singular;
        out
    }
}

/// The weight `ψ_β(r) = (1+r²)^(-β/2)` with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub beta: f64,
}

impl WeightSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self { beta })
        } else {
            Err(MixlapError::Domain(format!(
                "weight exponent beta = {beta} must be positive"
            )))
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        (1.0 + r * r).powf(-self.beta / 2.0)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        -self.beta * r * (1.0 + r * r).powf(-self.beta / 2.0 - 1.0)
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let b = self.beta;
        b * (1.0 + r * r).powf(-b / 2.0 - 2.0) * ((b + 1.0) * r * r - 1.0)
    }

    pub fn laplacian(&self, dim: usize, r: f64) -> f64 {
        let b = self.beta;
        let n = dim as f64;
        b * (1.0 + r * r).powf(-b / 2.0 - 2.0) * ((b - n + 2.0) * r * r - n)
    }

    /// `ψ'' + (N - 2s + 1)/r ψ'`, whose sign drives the supersolution test.
    pub fn shifted_laplacian(&self, params: &OperatorParams, r: f64) -> f64 {
        let b = self.beta;
        let m = params.dim() as f64 - 2.0 * params.s();
        b * (1.0 + r * r).powf(-b / 2.0 - 2.0) * ((b - m) * r * r - (m + 2.0))
    }

    pub fn profile(&self) -> RadialFunction {
        let w = *self;
        RadialFunction::new(format!("psi_{}", w.beta), -w.beta, move |r| w.value(r))
            .with_derivatives(move |r| w.derivative(r), move |r| w.second_derivative(r))
    }
}

/// Which reduction of the angular integral to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelPath {
    /// Spherical means in every dimension.
    #[default]
    Auto,
    SphericalMean,
    ClosedKernel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Outer radial integral, absolute part scaled by `|f(r)| L^{-2s}` with
    /// `L` the length over which the profile varies.
    pub outer: Tolerance,
    /// Angular averages, absolute part scaled by `|f(r)|`.
    pub angular: Tolerance,
    /// Relative size of the near-field panel of the spherical-mean path,
    /// which carries a fitted fourth-order term.
    pub near_field_fraction: f64,
    /// Relative size of the second-order near-field panel of the paired
    /// three-dimensional kernel.
    pub paired_near_field_fraction: f64,
    /// Far-field analytic tail starts at `factor * (1 + r)`.
    pub far_field_factor: f64,
    pub path: KernelPath,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            outer: Tolerance::new(1e-14, 1e-12),
            angular: Tolerance::new(1e-16, 1e-13),
            near_field_fraction: 3e-3,
            paired_near_field_fraction: 1e-4,
            far_field_factor: 1e5,
            path: KernelPath::Auto,
        }
    }
}

impl QuadratureConfig {
    pub fn with_path(mut self, path: KernelPath) -> Self {
        self.path = path;
        self
    }

    /// Length over which a profile varies near `r`: `1 + r` for smooth
    /// profiles, `r` for profiles singular at the origin.
    fn variation_length(r: f64, singular: bool) -> f64 {
        if singular && r > 0.0 {
            r
        } else {
            1.0 + r
        }
    }
}

/// `∫_0^π sin^{N-2}θ dθ`.
fn angular_mass(dim: usize) -> f64 {
    let n = dim as f64;
    PI.sqrt() * gamma((n - 1.0) / 2.0).unwrap_or(f64::NAN) / gamma(n / 2.0).unwrap_or(f64::NAN)
}

/// Mean of `h(|x + tω|)` over unit vectors `ω`, for `|x| = r`.
fn spherical_mean(
    dim: usize,
    r: f64,
    t: f64,
    h: &dyn Fn(f64) -> f64,
    tol: Tolerance,
) -> Result<f64> {
    if r == 0.0 {
        return Ok(h(t));
    }
    if dim == 1 {
        return Ok(0.5 * (h(r + t) + h((r - t).abs())));
    }
    let power = (dim - 2) as i32;
    let d = r - t;
    let cross = 4.0 * r * t;
    let integrand = |theta: f64| {
        let c = (0.5 * theta).cos();
        h((d * d + cross * c * c).sqrt()) * theta.sin().powi(power)
    };
    // Near θ = π the sphere passes within |r-t| of the origin; a profile
    // singular there peaks over an angular width of about |r-t| / sqrt(rt).
    let width = d.abs() / (r * t).sqrt();
    let mut breaks = vec![0.0];
    let mut gap = PI;
    while gap > width.max(1e-12) {
        gap *= 0.125;
    }
    let mut cuts = Vec::new();
    while gap < 0.5 * PI {
        cuts.push(PI - gap);
        gap *= 8.0;
    }
    breaks.extend(cuts.iter().rev());
    breaks.push(PI);
    Ok(integrate_with_breaks(integrand, &breaks, tol)?.value / angular_mass(dim))
}

/// Widest initial panel, in log-radius, handed to the adaptive integrator.
/// Wider panels let the Gauss/Kronrod error estimate agree by accident.
const MAX_LOG_PANEL: f64 = 1.0;

/// Splits sorted breakpoints so that no gap exceeds `width`.
fn refine_breaks(breaks: &[f64], width: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(breaks.len());
    for w in breaks.windows(2) {
        let pieces = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        out.extend((0..pieces).map(|k| w[0] + (w[1] - w[0]) * k as f64 / pieces as f64));
    }
    out.extend(breaks.last());
    out
}

/// Integrand of `∫_0^∞ mean_t(h) t^{-1-2s} dt`, with the data needed for the
/// near-field Taylor panel and the analytic far tail.
struct KernelIntegrand<'a> {
    h: &'a dyn Fn(f64) -> f64,
    /// `mean_t(h) ≈ near_coeff * t²` as `t -> 0`.
    near_coeff: f64,
    /// `h(ρ) = tail_constant + Σ coef * g(ρ)` exactly.
    tail_constant: f64,
    tail_pieces: Vec<(f64, &'a RadialFunction)>,
    scale: f64,
}

fn kernel_integral(
    params: &OperatorParams,
    r: f64,
    ig: &KernelIntegrand<'_>,
    quad: &QuadratureConfig,
    singular: bool,
) -> Result<f64> {
    let s = params.s();
    let t0 = quad.near_field_fraction * QuadratureConfig::variation_length(r, singular);
    let t_far = quad.far_field_factor * (1.0 + r);

    let angular = Tolerance {
        abs: quad.angular.abs * ig.scale,
        ..quad.angular
    };
    let length = QuadratureConfig::variation_length(r, singular);
    let outer = Tolerance {
        abs: quad.outer.abs * ig.scale * length.powf(-2.0 * s),
        ..quad.outer
    };
    // mean_t(h) = c2 t² + c4 t⁴ + O(t⁶); c4 is read off the mean at t0.
    let c2 = ig.near_coeff;
    let c4 = (spherical_mean(params.dim(), r, t0, ig.h, angular)? - c2 * t0 * t0) / t0.powi(4);
    let near = c2 * t0.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        + c4 * t0.powf(4.0 - 2.0 * s) / (4.0 - 2.0 * s);

    let delta = (0.01 * (1.0 + r)).min(0.1);
    let mut breaks = vec![t0.ln(), t_far.ln()];
    for cut in [delta, r, 2.0 * r] {
        if cut > t0 && cut < t_far {
            breaks.push(cut.ln());
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let breaks = refine_breaks(&breaks, MAX_LOG_PANEL);

    let failure = RefCell::new(None);
    let mid = integrate_with_breaks(
        |u: f64| {
            let t = u.exp();
            match spherical_mean(params.dim(), r, t, ig.h, angular) {
                Ok(m) => m * (-2.0 * s * u).exp(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        outer,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let decay = t_far.powf(-2.0 * s);
    let mut tail = ig.tail_constant * decay / (2.0 * s);
    for (coef, g) in &ig.tail_pieces {
        g.require_weighted_space(s)?;
        tail += coef * g.value(t_far) * decay / (2.0 * s - g.tail_exponent());
    }
    Ok(near + mid.value + tail)
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(MixlapError::Domain(format!(
            "radius {r} must be finite and nonnegative"
        )))
    }
}

/// `(-Δ)^s f` at radius `r` by direct quadrature of the singular integral.
pub fn fraclap_quadrature(
    params: &OperatorParams,
    f: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_radius(r)?;
    f.require_weighted_space(params.s())?;
    let fr = f.value(r);
    if !fr.is_finite() {
        return Err(MixlapError::Domain(format!(
            "profile {} is not finite at r = {r}",
            f.label()
        )));
    }
    let use_closed = match quad.path {
        KernelPath::Auto | KernelPath::SphericalMean => false,
        KernelPath::ClosedKernel => {
            if params.dim() != 3 || r == 0.0 {
                return Err(MixlapError::Domain(
                    "the closed radial kernel needs N = 3 and r > 0".into(),
                ));
            }
            true
        }
    };
    if use_closed {
        return closed_kernel_three_dim(params, f, r, quad);
    }
    let h = |rho: f64| fr - f.value(rho);
    let ig = KernelIntegrand {
        h: &h,
        near_coeff: -f.laplacian(params.dim(), r) / (2.0 * params.dim() as f64),
        tail_constant: fr,
        tail_pieces: vec![(-1.0, f)],
        scale: fr.abs().max(f64::MIN_POSITIVE),
    };
    Ok(params.normalization()
        * params.sphere_area()
        * kernel_integral(params, r, &ig, quad, f.singular_at_origin)?)
}

/// `(ρ₁^q - ρ₂^q) / q`, continuous through `q = 0`.
fn power_difference(rho1: f64, rho2: f64, q: f64) -> f64 {
    let log_ratio = (rho1 / rho2).ln();
    if q.abs() < 1e-12 {
        log_ratio
    } else {
        rho2.powf(q) * (q * log_ratio).exp_m1() / q
    }
}

/// `∫_R^∞ ρ [(ρ-r)^{-1-2s} - (ρ+r)^{-1-2s}] dρ` for `R > r`.
pub(crate) fn exterior_moment_three_dim(s: f64, r: f64, big_r: f64) -> f64 {
    let q = 1.0 - 2.0 * s;
    power_difference(big_r + r, big_r - r, q)
        + r * ((big_r - r).powf(-2.0 * s) + (big_r + r).powf(-2.0 * s)) / (2.0 * s)
}

/// Three-dimensional evaluation through the closed kernel
/// `2π (|r-ρ|^{-1-2s} - (r+ρ)^{-1-2s}) / (r ρ (1+2s))`, pairing `ρ = r ± τ`.
fn closed_kernel_three_dim(
    params: &OperatorParams,
    f: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let s = params.s();
    let p = 1.0 + 2.0 * s;
    let fr = f.value(r);
    let length = QuadratureConfig::variation_length(r, f.singular_at_origin);
    let scale = fr.abs().max(f64::MIN_POSITIVE) * r.max(1.0) * length.powf(-2.0 * s);
    let outer = Tolerance {
        abs: quad.outer.abs * scale,
        ..quad.outer
    };

    let tau0 = (quad.paired_near_field_fraction * length).min(0.5 * r);
    let near = -r * f.laplacian(3, r) * tau0.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);

    let paired = |u: f64| {
        let tau = u.exp();
        let up = r + tau;
        let down = r - tau;
        let sing = tau.powf(-p);
        tau * ((fr - f.value(up)) * up * (sing - (2.0 * r + tau).powf(-p))
            + (fr - f.value(down)) * down * (sing - (2.0 * r - tau).powf(-p)))
    };
    let mut breaks = vec![tau0.ln(), r.ln()];
    for cut in [0.5 * r, r - 1.0, 0.1 * r] {
        if cut > tau0 && cut < r {
            breaks.push(cut.ln());
        }
    }
    breaks.sort_by(f64::total_cmp);
    let pair = integrate_with_breaks(paired, &refine_breaks(&breaks, MAX_LOG_PANEL), outer)?.value;

    let t_far = quad.far_field_factor * (1.0 + r);
    let outer_part = |u: f64| {
        let rho = u.exp();
        rho * (fr - f.value(rho)) * rho * ((rho - r).powf(-p) - (rho + r).powf(-p))
    };
    let mut breaks = vec![(2.0 * r).ln(), t_far.ln()];
    for cut in [1.0, 3.0 * r, 10.0 * r] {
        if cut > 2.0 * r && cut < t_far {
            breaks.push(cut.ln());
        }
    }
    breaks.sort_by(f64::total_cmp);
    let far =
        integrate_with_breaks(outer_part, &refine_breaks(&breaks, MAX_LOG_PANEL), outer)?.value;

    let tail = fr * exterior_moment_three_dim(s, r, t_far)
        - f.value(t_far) * 2.0 * p * r * t_far.powf(-2.0 * s) / (2.0 * s - f.tail_exponent());

    let total = near + pair + far + tail;
    Ok(params.normalization() * 2.0 * PI / (r * p) * total)
}

/// `(-Δ)^s f` at every radius of `radii`, evaluated in parallel.
pub fn fraclap_on_grid(
    params: &OperatorParams,
    f: &RadialFunction,
    radii: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    radii
        .par_iter()
        .map(|&r| fraclap_quadrature(params, f, r, quad))
        .collect()
}

/// `𝓛 f = Δf - (-Δ)^s f` at radius `r`.
pub fn mixed_operator(
    params: &OperatorParams,
    f: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(f.laplacian(params.dim(), r) - fraclap_quadrature(params, f, r, quad)?)
}

/// Pointwise bilinear form
/// `C ∫ (f(x)-f(y))(g(x)-g(y)) |x-y|^{-N-2s} dy` at `|x| = r`.
pub fn bilinear_form(
    params: &OperatorParams,
    f: &RadialFunction,
    g: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_radius(r)?;
    let fr = f.value(r);
    let gr = g.value(r);
    let fg = f.product(g);
    let h = |rho: f64| (fr - f.value(rho)) * (gr - g.value(rho));
    let ig = KernelIntegrand {
        h: &h,
        near_coeff: f.derivative(r) * g.derivative(r) / params.dim() as f64,
        tail_constant: fr * gr,
        tail_pieces: vec![(-fr, g), (-gr, f), (1.0, &fg)],
        scale: (fr * gr)
            .abs()
            .max(fr.abs())
            .max(gr.abs())
            .max(f64::MIN_POSITIVE),
    };
    Ok(params.normalization()
        * params.sphere_area()
        * kernel_integral(params, r, &ig, quad, fg.singular_at_origin)?)
}

/// Terms of the fractional product rule at one radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProductRuleReport {
    pub r: f64,
    pub of_product: f64,
    pub f_times_of_g: f64,
    pub g_times_of_f: f64,
    pub bilinear: f64,
    pub residual: f64,
    pub scale: f64,
}

/// `|(-Δ)^s(fg) - f(-Δ)^s g - g(-Δ)^s f + 𝓑(f,g)|` with all terms by quadrature.
pub fn product_rule_check(
    params: &OperatorParams,
    f: &RadialFunction,
    g: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<ProductRuleReport> {
    let fg = f.product(g);
    let of_product = fraclap_quadrature(params, &fg, r, quad)?;
    let f_times_of_g = f.value(r) * fraclap_quadrature(params, g, r, quad)?;
    let g_times_of_f = g.value(r) * fraclap_quadrature(params, f, r, quad)?;
    let bilinear = bilinear_form(params, f, g, r, quad)?;
    let residual = (of_product - f_times_of_g - g_times_of_f + bilinear).abs();
    let scale = of_product.abs() + f_times_of_g.abs() + g_times_of_f.abs() + bilinear.abs();
    Ok(ProductRuleReport {
        r,
        of_product,
        f_times_of_g,
        g_times_of_f,
        bilinear,
        residual,
        scale,
    })
}

/// `G'(f)(-Δ)^s f - (-Δ)^s G(f)` for `G(t) = t²`; nonnegative by convexity.
pub fn convexity_check(
    params: &OperatorParams,
    f: &RadialFunction,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let square = f.product(f);
    Ok(2.0 * f.value(r) * fraclap_quadrature(params, f, r, quad)?
        - fraclap_quadrature(params, &square, r, quad)?)
}

/// One grid radius of [`supersolution_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupersolutionPoint {
    pub r: f64,
    /// `f'' + (N-2s+1)/r f'`.
    pub ode_value: f64,
    pub ode_holds: bool,
    pub fraclap: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupersolutionReport {
    pub points: Vec<SupersolutionPoint>,
    /// Smallest and largest grid radius where the differential inequality fails.
    pub ode_failure_region: Option<(f64, f64)>,
    pub violations: Vec<f64>,
    pub passed: bool,
}

/// Where `f'' + (N-2s+1)/r f' <= 0` holds on the grid, checks that
/// `(-Δ)^s f >= -tol`.
pub fn supersolution_check(
    params: &OperatorParams,
    f: &RadialFunction,
    grid: &[f64],
    quad: &QuadratureConfig,
) -> Result<SupersolutionReport> {
    let m = params.dim() as f64 - 2.0 * params.s();
    let points: Vec<SupersolutionPoint> = grid
        .par_iter()
        .map(|&r| -> Result<SupersolutionPoint> {
            let ode_value = if r == 0.0 {
                (m + 2.0) * f.second_derivative(0.0)
            } else {
                f.second_derivative(r) + (m + 1.0) / r * f.derivative(r)
            };
            let scale = f.value(r).abs() + ode_value.abs();
            let ode_holds = ode_value <= 1e-12 * scale;
            let fraclap = fraclap_quadrature(params, f, r, quad)?;
            let violated = ode_holds && fraclap < -1e-9 * scale.max(1e-300);
            Ok(SupersolutionPoint {
                r,
                ode_value,
                ode_holds,
                fraclap,
                violated,
            })
        })
        .collect::<Result<_>>()?;
    let failing: Vec<f64> = points
        .iter()
        .filter(|p| !p.ode_holds)
        .map(|p| p.r)
        .collect();
    let ode_failure_region = match (failing.first(), failing.last()) {
        (Some(&a), Some(&b)) => Some((a, b)),
        _ => None,
    };
    let violations: Vec<f64> = points.iter().filter(|p| p.violated).map(|p| p.r).collect();
    let passed = violations.is_empty();
    Ok(SupersolutionReport {
        points,
        ode_failure_region,
        violations,
        passed,
    })
}

/// How the prefactor of the closed form was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefactorSource {
    Calibrated { anchor: f64, check_errors: [f64; 2] },
    Literature,
}

/// Closed form `(-Δ)^s ψ_β(r) = K · ₂F₁(N/2+s, β/2+s; N/2; -r²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightFractionalLaplacian {
    pub params: OperatorParams,
    pub weight: WeightSpec,
    prefactor: f64,
    pub source: PrefactorSource,
}

pub const CALIBRATION_ANCHOR: f64 = 2.0;
/// Used in order when the shape factor (nearly) vanishes at the anchor.
pub const FALLBACK_ANCHORS: [f64; 4] = [1.5, 3.0, 1.0, 0.0];
pub const CALIBRATION_CHECKS: [f64; 2] = [0.5, 8.0];
const CALIBRATION_TOL: f64 = 1e-4;

/// `4^s Γ(β/2+s) Γ(N/2+s) / (Γ(β/2) Γ(N/2))`, the value `(-Δ)^s ψ_β(0)`.
pub fn literature_prefactor(params: &OperatorParams, beta: f64) -> Result<f64> {
    let (n, s) = (params.dim() as f64, params.s());
    Ok(4f64.powf(s) * gamma(beta / 2.0 + s)? * gamma(n / 2.0 + s)?
        / (gamma(beta / 2.0)? * gamma(n / 2.0)?))
}

impl WeightFractionalLaplacian {
    /// Hypergeometric shape factor `₂F₁(N/2+s, β/2+s; N/2; -r²)`.
    pub fn shape(params: &OperatorParams, beta: f64, r: f64) -> Result<f64> {
        let (n, s) = (params.dim() as f64, params.s());
        hyp2f1_neg_square(n / 2.0 + s, beta / 2.0 + s, n / 2.0, r)
    }

    /// Fit the prefactor to quadrature at the anchor radius and validate it
    /// at two further radii.
    pub fn calibrate(
        params: &OperatorParams,
        weight: WeightSpec,
        quad: &QuadratureConfig,
    ) -> Result<Self> {
        let f = weight.profile();
        // the shape factor equals 1 at r = 0, so the last fallback always works
        let mut anchor = CALIBRATION_ANCHOR;
        let mut at_anchor = Self::shape(params, weight.beta, anchor)?;
        for &r in &FALLBACK_ANCHORS {
            if at_anchor.abs() >= 1e-3 {
                break;
            }
            anchor = r;
            at_anchor = Self::shape(params, weight.beta, r)?;
        }
        let measured = fraclap_quadrature(params, &f, anchor, quad)
            .map_err(|e| MixlapError::Calibration(format!("anchor quadrature: {e}")))?;
        let prefactor = measured / at_anchor;
        let mut check_errors = [0.0; 2];
        for (slot, &r) in check_errors.iter_mut().zip(CALIBRATION_CHECKS.iter()) {
            let q = fraclap_quadrature(params, &f, r, quad)
                .map_err(|e| MixlapError::Calibration(format!("check quadrature: {e}")))?;
            let c = prefactor * Self::shape(params, weight.beta, r)?;
            *slot = (c - q).abs() / q.abs().max(1e-8 * prefactor.abs());
            if *slot > CALIBRATION_TOL {
                return Err(MixlapError::Calibration(format!(
                    "closed form and quadrature disagree at r = {r}: {c} vs {q}"
                )));
            }
        }
        Ok(Self {
            params: *params,
            weight,
            prefactor,
            source: PrefactorSource::Calibrated {
                anchor,
                check_errors,
            },
        })
    }

    pub fn literature(params: &OperatorParams, weight: WeightSpec) -> Result<Self> {
        Ok(Self {
            params: *params,
            weight,
            prefactor: literature_prefactor(params, weight.beta)?,
            source: PrefactorSource::Literature,
        })
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.prefactor * Self::shape(&self.params, self.weight.beta, r)?)
    }

    /// `𝓛ψ_β(r)` from the closed form.
    pub fn mixed(&self, r: f64) -> Result<f64> {
        Ok(self.weight.laplacian(self.params.dim(), r) - self.eval(r)?)
    }
}

/// `(-Δ)^s ψ_β(r)` from the calibrated closed form.
pub fn fraclap_psi_closed(
    params: &OperatorParams,
    weight: WeightSpec,
    r: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    WeightFractionalLaplacian::calibrate(params, weight, quad)?.eval(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn normalization_in_three_dims() {
        // C_{3,1/2} = 1/π²
        let p = OperatorParams::new(3, 0.5).unwrap();
        assert!(rel(p.normalization(), 1.0 / (PI * PI)) < 1e-13);
        assert!(OperatorParams::new(3, 1.0).is_err());
        assert!(OperatorParams::new(0, 0.5).is_err());
    }

    #[test]
    fn weight_derivatives_match_differences() {
        let w = WeightSpec::new(1.7).unwrap();
        let fd = RadialFunction::new("fd", -1.7, move |r| w.value(r));
        for &r in &[0.0, 0.3, 1.0, 4.0] {
            assert!((w.derivative(r) - fd.derivative(r)).abs() < 1e-9);
            assert!((w.second_derivative(r) - fd.second_derivative(r)).abs() < 1e-6);
        }
        assert!((w.laplacian(5, 0.0) + 1.7 * 5.0).abs() < 1e-14);
        let f = w.profile();
        for &r in &[0.0, 0.7, 3.0] {
            assert!((f.laplacian(4, r) - w.laplacian(4, r)).abs() < 1e-13);
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let p = OperatorParams::new(2, 0.4).unwrap();
        let q = QuadratureConfig::default();
        for &r in &[0.0, 1.5] {
            let v = fraclap_quadrature(&p, &RadialFunction::constant(3.0), r, &q).unwrap();
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn tail_too_heavy_is_rejected() {
        let p = OperatorParams::new(3, 0.25).unwrap();
        let f = RadialFunction::new("linear", 1.0, |r| r);
        let err = fraclap_quadrature(&p, &f, 1.0, &QuadratureConfig::default()).unwrap_err();
        assert!(matches!(err, MixlapError::NotInWeightedSpace { .. }));
    }

    #[test]
    fn literature_prefactor_matches_origin_quadrature() {
        let q = QuadratureConfig::default();
        for &(n, s, b) in &[(3, 0.25, 1.0), (2, 0.75, 2.0), (4, 0.5, 3.2)] {
            let p = OperatorParams::new(n, s).unwrap();
            let f = RadialFunction::weight(b);
            let at0 = fraclap_quadrature(&p, &f, 0.0, &q).unwrap();
            assert!(
                rel(at0, literature_prefactor(&p, b).unwrap()) < 1e-8,
                "{n} {s} {b}"
            );
        }
    }

    #[test]
    fn closed_kernel_agrees_with_spherical_means() {
        let p = OperatorParams::new(3, 0.6).unwrap();
        let f = RadialFunction::weight(2.2);
        let q = QuadratureConfig::default();
        for &r in &[0.05, 1.0, 7.0] {
            let a = fraclap_quadrature(&p, &f, r, &q.with_path(KernelPath::SphericalMean)).unwrap();
            let b = fraclap_quadrature(&p, &f, r, &q.with_path(KernelPath::ClosedKernel)).unwrap();
            assert!(rel(a, b) < 1e-8, "r={r}: {a} vs {b}");
        }
    }

    #[test]
    fn exterior_moment_is_continuous_at_half() {
        let a = exterior_moment_three_dim(0.5 - 1e-13, 1.0, 5.0);
        let b = exterior_moment_three_dim(0.5, 1.0, 5.0);
        assert!(rel(a, b) < 1e-10);
        // high-precision quadrature of the defining integral
        let direct = 2.060_685_183_708_425;
        assert!(rel(exterior_moment_three_dim(0.3, 1.0, 5.0), direct) < 1e-13);
    }
}

//! Density `ρ` and potential `c` of the problems `-𝓛u + ρ c u = f`.

use serde::{Deserialize, Serialize};

use crate::error::{MixlapError, Result};
use crate::radial::RadialFunction;

/// How the density constant bounds `ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundMode {
    /// `ρ(r) >= C (1+r²)^(-α/2)` everywhere.
    LowerBound,
    /// `0 < ρ(r) <= C (1+r²)^(-α/2)` for `r > r0`.
    UpperBound { r0: f64 },
}

/// Coefficients together with the constants of the bound they satisfy.
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    pub alpha: f64,
    /// The constant `C` in the density bound of [`BoundMode`].
    pub density_constant: f64,
    /// Lower bound `c0 >= 0` of the potential.
    pub potential_floor: f64,
    pub mode: BoundMode,
    pub density: RadialFunction,
    pub potential: RadialFunction,
}

/// Scalar description of a [`CoefficientModel`], used in reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub alpha: f64,
    pub density_constant: f64,
    pub potential_floor: f64,
    #[serde(flatten)]
    pub mode: BoundMode,
}

fn power_density(alpha: f64, constant: f64) -> RadialFunction {
    RadialFunction::new(
        format!("{constant}*(1+r^2)^(-{alpha}/2)"),
        -alpha,
        move |r| constant * (1.0 + r * r).powf(-alpha / 2.0),
    )
}

impl CoefficientModel {
    fn check_scalars(alpha: f64, constant: f64, floor: f64) -> Result<()> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(MixlapError::Domain(format!(
                "alpha = {alpha} must be nonnegative"
            )));
        }
        if !(constant > 0.0) {
            return Err(MixlapError::Domain(format!(
                "density constant {constant} must be positive"
            )));
        }
        if !(floor >= 0.0) {
            return Err(MixlapError::Domain(format!(
                "potential floor {floor} must be nonnegative"
            )));
        }
        Ok(())
    }

    /// `ρ = C (1+r²)^(-α/2)` and constant potential `c ≡ c0`, in lower-bound mode.
    pub fn lower_bound(alpha: f64, density_constant: f64, potential: f64) -> Result<Self> {
        Self::check_scalars(alpha, density_constant, potential)?;
        Ok(Self {
            alpha,
            density_constant,
            potential_floor: potential,
            mode: BoundMode::LowerBound,
            density: power_density(alpha, density_constant),
            potential: RadialFunction::constant(potential),
        })
    }

    /// `ρ = C (1+r²)^(-α/2)` and constant potential `c ≡ c0`, in upper-bound mode.
    pub fn upper_bound(alpha: f64, density_constant: f64, potential: f64, r0: f64) -> Result<Self> {
        Self::check_scalars(alpha, density_constant, potential)?;
        if !(r0 > 0.0) {
            return Err(MixlapError::Domain(format!("r0 = {r0} must be positive")));
        }
        Ok(Self {
            alpha,
            density_constant,
            potential_floor: potential,
            mode: BoundMode::UpperBound { r0 },
            density: power_density(alpha, density_constant),
            potential: RadialFunction::constant(potential),
        })
    }

    /// Replace the profiles; the bounds are re-checked by [`Self::validate`].
    pub fn with_profiles(mut self, density: RadialFunction, potential: RadialFunction) -> Self {
        self.density = density;
        self.potential = potential;
        self
    }

    pub fn summary(&self) -> CoefficientSummary {
        CoefficientSummary {
            alpha: self.alpha,
            density_constant: self.density_constant,
            potential_floor: self.potential_floor,
            mode: self.mode,
        }
    }

    pub fn envelope(&self, r: f64) -> f64 {
        self.density_constant * (1.0 + r * r).powf(-self.alpha / 2.0)
    }

    /// `ρ(r) c(r)`.
    pub fn absorption(&self, r: f64) -> f64 {
        self.density.value(r) * self.potential.value(r)
    }

    /// Check the bound and the potential floor at the sampled radii.
    pub fn validate(&self, radii: &[f64]) -> Result<()> {
        for &r in radii {
            let rho = self.density.value(r);
            let bound = self.envelope(r) * (1.0 - 1e-12);
            let ok = match self.mode {
                BoundMode::LowerBound => rho >= bound,
                BoundMode::UpperBound { r0 } => {
                    rho > 0.0 && (r <= r0 || rho <= self.envelope(r) * (1.0 + 1e-12))
                }
            };
            if !ok {
                return Err(MixlapError::Domain(format!(
                    "density {rho} violates its bound at r = {r}"
                )));
            }
            let c = self.potential.value(r);
            if c < self.potential_floor * (1.0 - 1e-12) {
                return Err(MixlapError::Domain(format!(
                    "potential {c} below its floor {} at r = {r}",
                    self.potential_floor
                )));
            }
        }
        Ok(())
    }
}

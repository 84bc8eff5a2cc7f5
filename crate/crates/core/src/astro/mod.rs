//! Orbital environment for a near-circular low Earth orbit: altitude and
//! radius, atmospheric density, drag decay of the semimajor axis, impulsive
//! raise costs and repeat-ground-track resonances.
//!
//! Lengths are metres and times seconds unless a name says otherwise
//! (`_km`, `_days`).

mod decay;
mod density;
mod resonance;

use serde::Deserialize;
use thiserror::Error;

pub use decay::{decay_rate, propagate_altitude, propagate_altitude_with_substep, FluxProfile, Propagated, SUBSTEP_SECONDS};
pub use density::{Atmosphere, DensityLayer, DensityModel, EnvironmentData, Vacuum};
pub use resonance::{repeat_residual, resonance_altitudes, ResonanceEntry, ResonanceTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AstroError {
    #[error("radius {radius_m} m is below the body surface (deorbited)")]
    BelowSurface { radius_m: f64 },
    #[error("altitude {altitude_km} km outside density coverage [{lo_km}, {hi_km}] km")]
    OutOfCoverage { altitude_km: f64, lo_km: f64, hi_km: f64 },
    #[error("solar flux {flux} sfu outside supported range [{lo}, {hi}]")]
    FluxOutOfRange { flux: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("environment data: {0}")]
    Data(String),
}

/// Central body constants.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Body {
    /// Gravitational parameter, m^3/s^2.
    pub mu: f64,
    /// Mean equatorial radius, m.
    pub radius: f64,
    /// Sidereal rotation rate, rad/s.
    pub rotation_rate: f64,
    pub j2: f64,
}

impl Body {
    pub const EARTH: Body = Body { mu: 3.986_004_418e14, radius: 6_378_136.3, rotation_rate: 7.292_115_146_7e-5, j2: 1.082_626_68e-3 };

    /// `j2 = 0` is accepted so that Keplerian limits can be checked.
    pub fn validate(&self) -> Result<(), AstroError> {
        if !(self.mu > 0.0 && self.radius > 0.0 && self.rotation_rate > 0.0) {
            return Err(AstroError::InvalidParameter(format!("body constants must be positive: {self:?}")));
        }
        if !(0.0..0.01).contains(&self.j2) {
            return Err(AstroError::InvalidParameter(format!("j2 = {} outside [0, 0.01)", self.j2)));
        }
        Ok(())
    }

    pub fn without_j2(self) -> Body {
        Body { j2: 0.0, ..self }
    }

    /// Keplerian mean motion at semimajor axis `a`.
    pub fn mean_motion(&self, a: f64) -> f64 {
        (self.mu / (a * a * a)).sqrt()
    }

    pub fn circular_speed(&self, a: f64) -> f64 {
        (self.mu / a).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacecraftParams {
    pub mass_kg: f64,
    pub drag_area_m2: f64,
    pub drag_coeff: f64,
    pub isp_s: f64,
    #[serde(default = "standard_gravity")]
    pub g0: f64,
}

fn standard_gravity() -> f64 {
    9.806_65
}

impl SpacecraftParams {
    pub fn validate(&self) -> Result<(), AstroError> {
        let bad = |m: String| Err(AstroError::InvalidParameter(m));
        if !(self.mass_kg > 0.0) {
            return bad(format!("mass must be positive, got {}", self.mass_kg));
        }
        if !(self.drag_area_m2 > 0.0) {
            return bad(format!("drag area must be positive, got {}", self.drag_area_m2));
        }
        if !(1.5..=4.0).contains(&self.drag_coeff) {
            return bad(format!("drag coefficient {} outside [1.5, 4.0]", self.drag_coeff));
        }
        if !(self.isp_s > 0.0 && self.g0 > 0.0) {
            return bad("specific impulse and g0 must be positive".into());
        }
        Ok(())
    }

    /// `C_D * A / m`, m^2/kg.
    pub fn ballistic_coefficient(&self) -> f64 {
        self.drag_coeff * self.drag_area_m2 / self.mass_kg
    }

    pub fn exhaust_velocity(&self) -> f64 {
        self.g0 * self.isp_s
    }
}

/// Altitude above a spherical body.
pub fn altitude_from_radius(r: f64, body: &Body) -> Result<f64, AstroError> {
    if r < body.radius || !r.is_finite() {
        return Err(AstroError::BelowSurface { radius_m: r });
    }
    Ok(r - body.radius)
}

pub fn radius_from_altitude(alt: f64, body: &Body) -> f64 {
    alt + body.radius
}

/// Total two-impulse Hohmann cost of raising a circular orbit from `a` to `a + da`.
pub fn delta_v_for_raise(a: f64, da: f64, body: &Body) -> Result<f64, AstroError> {
    if !(da > 0.0) {
        return Err(AstroError::InvalidParameter(format!("raise must be positive, got {da} m")));
    }
    if da / a >= 0.05 {
        return Err(AstroError::InvalidParameter(format!("raise {da} m too large for orbit radius {a} m")));
    }
    let a2 = a + da;
    let dv1 = body.circular_speed(a) * ((2.0 * a2 / (a + a2)).sqrt() - 1.0);
    let dv2 = body.circular_speed(a2) * (1.0 - (2.0 * a / (a + a2)).sqrt());
    Ok(dv1 + dv2)
}

/// Propellant mass for `dv` by the rocket equation. `dv` must be non-negative.
pub fn fuel_mass_for_delta_v(dv: f64, sc: &SpacecraftParams) -> f64 {
    debug_assert!(dv >= 0.0, "negative delta-v {dv}");
    -sc.mass_kg * (-dv / sc.exhaust_velocity()).exp_m1()
}

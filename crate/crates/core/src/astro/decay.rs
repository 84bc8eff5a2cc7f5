use super::{Atmosphere, AstroError, Body, SpacecraftParams};

/// Fixed integration substep of `propagate_altitude`.
pub const SUBSTEP_SECONDS: f64 = 86_400.0;

/// Solar flux seen by the propagator.
#[derive(Debug, Clone, PartialEq)]
pub enum FluxProfile {
    Constant(f64),
    /// One value per substep, in order. The final partial substep uses its own entry.
    PerSubstep(Vec<f64>),
}

impl FluxProfile {
    fn at(&self, i: usize) -> Result<f64, AstroError> {
        match self {
            FluxProfile::Constant(f) => Ok(*f),
            FluxProfile::PerSubstep(v) => v
                .get(i)
                .copied()
                .ok_or_else(|| AstroError::InvalidParameter(format!("flux series has {} entries, substep {i} requested", v.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagated {
    pub altitude_m: f64,
    /// The orbit fell below the density coverage floor; `altitude_m` is clamped to it.
    pub deorbited: bool,
}

/// Mean circular-orbit decay `da/dt = -sqrt(mu a) rho C_D A / m`.
pub fn decay_rate<A: Atmosphere + ?Sized>(
    a: f64,
    flux: f64,
    sc: &SpacecraftParams,
    body: &Body,
    atm: &A,
) -> Result<f64, AstroError> {
    let alt = super::altitude_from_radius(a, body)?;
    let rho = atm.density(alt, flux)?;
    Ok(-(body.mu * a).sqrt() * rho * sc.ballistic_coefficient())
}

/// Integrates the decay over `dt` seconds with one-day RK4 substeps.
pub fn propagate_altitude<A: Atmosphere + ?Sized>(
    alt0: f64,
    dt: f64,
    flux: &FluxProfile,
    sc: &SpacecraftParams,
    body: &Body,
    atm: &A,
) -> Result<Propagated, AstroError> {
    propagate_altitude_with_substep(alt0, dt, SUBSTEP_SECONDS, flux, sc, body, atm)
}

pub fn propagate_altitude_with_substep<A: Atmosphere + ?Sized>(
    alt0: f64,
    dt: f64,
    substep: f64,
    flux: &FluxProfile,
    sc: &SpacecraftParams,
    body: &Body,
    atm: &A,
) -> Result<Propagated, AstroError> {
    let (floor, ceiling) = atm.coverage();
    if !(floor..=ceiling).contains(&alt0) {
        return Err(AstroError::OutOfCoverage { altitude_km: alt0 / 1000.0, lo_km: floor / 1000.0, hi_km: ceiling / 1000.0 });
    }
    if !(dt >= 0.0 && substep > 0.0) {
        return Err(AstroError::InvalidParameter(format!("need dt >= 0 and substep > 0, got {dt}, {substep}")));
    }
    let deorbit = Propagated { altitude_m: floor, deorbited: true };
    let bc = sc.ballistic_coefficient();
    // rate in terms of altitude; None once below the floor
    let rate = |alt: f64, mult: f64| -> Result<Option<f64>, AstroError> {
        if alt < floor {
            return Ok(None);
        }
        let a = alt + body.radius;
        Ok(Some(-(body.mu * a).sqrt() * atm.base_density(alt)? * mult * bc))
    };

    let mut alt = alt0;
    let mut t = 0.0;
    let mut i = 0;
    while t < dt {
        let tau = substep.min(dt - t);
        let f = atm.flux_multiplier(flux.at(i)?)?;
        let Some(k1) = rate(alt, f)? else { return Ok(deorbit) };
        let Some(k2) = rate(alt + 0.5 * tau * k1, f)? else { return Ok(deorbit) };
        let Some(k3) = rate(alt + 0.5 * tau * k2, f)? else { return Ok(deorbit) };
        let Some(k4) = rate(alt + tau * k3, f)? else { return Ok(deorbit) };
        alt += tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if alt < floor {
            return Ok(deorbit);
        }
        t += tau;
        i += 1;
    }
    Ok(Propagated { altitude_m: alt, deorbited: false })
}

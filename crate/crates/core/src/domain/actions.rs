use serde::Deserialize;

use super::{BinGrid, DomainError};
use crate::astro::{delta_v_for_raise, fuel_mass_for_delta_v, radius_from_altitude, Body, SpacecraftParams};

/// Action 0 is no burn; action `k >= 1` raises the altitude by `raises[k - 1]` bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverActionSet {
    raises: Vec<usize>,
}

impl ManeuverActionSet {
    /// Raises of `ceil(gamma_hat^(k-1))` bands for `k = 1..=n_raises`.
    pub fn geometric(gamma_hat: f64, n_raises: usize) -> Result<Self, DomainError> {
        if !(gamma_hat > 1.0 && gamma_hat.is_finite()) {
            return Err(DomainError::Config(format!("gamma_hat must exceed 1, got {gamma_hat}")));
        }
        let raises = (0..n_raises).map(|k| gamma_hat.powi(k as i32).ceil() as usize).collect();
        Self::from_raises(raises)
    }

    pub fn from_raises(raises: Vec<usize>) -> Result<Self, DomainError> {
        if raises.is_empty() || raises.len() > 255 {
            return Err(DomainError::Config(format!("between 1 and 255 raise actions required, got {}", raises.len())));
        }
        if raises[0] == 0 || raises.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DomainError::Config(format!("raises must be positive and strictly increasing: {raises:?}")));
        }
        Ok(ManeuverActionSet { raises })
    }

    pub fn num_actions(&self) -> usize {
        self.raises.len() + 1
    }

    pub fn raise_bins(&self, a: usize) -> usize {
        if a == 0 {
            0
        } else {
            self.raises[a - 1]
        }
    }

    pub fn raise_km(&self, a: usize, grid: &BinGrid) -> f64 {
        self.raise_bins(a) as f64 * grid.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuelMode {
    /// Budget is cumulative commanded raise; the fuel grid is in km.
    AltitudeBudget,
    /// Budget is propellant mass; the fuel grid is in kg.
    DeltaV,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelCost {
    /// km of raise or kg of propellant, depending on the mode.
    pub amount: f64,
    /// `amount` in fuel bands, rounded up.
    pub bins: usize,
}

/// Cost of action `a` from the center of altitude band `alt`.
pub fn fuel_cost(
    alt: usize,
    a: usize,
    mode: FuelMode,
    actions: &ManeuverActionSet,
    altitude: &BinGrid,
    fuel: &BinGrid,
    sc: &SpacecraftParams,
    body: &Body,
) -> Result<FuelCost, DomainError> {
    if a == 0 {
        return Ok(FuelCost { amount: 0.0, bins: 0 });
    }
    let raise_km = actions.raise_km(a, altitude);
    let amount = match mode {
        FuelMode::AltitudeBudget => raise_km,
        FuelMode::DeltaV => {
            let r = radius_from_altitude(altitude.center(alt) * 1000.0, body);
            fuel_mass_for_delta_v(delta_v_for_raise(r, raise_km * 1000.0, body)?, sc)
        }
    };
    // tolerance keeps exact multiples of the band width from rounding up
    let bins = (amount / fuel.width() - 1e-9).ceil().max(1.0) as usize;
    Ok(FuelCost { amount, bins })
}

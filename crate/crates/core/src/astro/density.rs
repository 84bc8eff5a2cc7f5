use std::path::Path;

use serde::Deserialize;

use super::{AstroError, Body};

/// Neutral density as a function of altitude (m) and F10.7 flux (sfu).
///
/// Density factorises as `base_density(altitude) * flux_multiplier(flux)`.
pub trait Atmosphere: Sync {
    /// Density at the reference flux, kg/m^3.
    fn base_density(&self, altitude_m: f64) -> Result<f64, AstroError>;

    fn flux_multiplier(&self, flux: f64) -> Result<f64, AstroError>;

    /// Altitude range (m) over which the density is defined.
    fn coverage(&self) -> (f64, f64);

    fn density(&self, altitude_m: f64, flux: f64) -> Result<f64, AstroError> {
        let m = self.flux_multiplier(flux)?;
        Ok(self.base_density(altitude_m)? * m)
    }
}

/// Zero-density stub; defined at every altitude.
#[derive(Debug, Clone, Copy, Default)]
pub struct Vacuum;

impl Atmosphere for Vacuum {
    fn base_density(&self, _altitude_m: f64) -> Result<f64, AstroError> {
        Ok(0.0)
    }

    fn flux_multiplier(&self, _flux: f64) -> Result<f64, AstroError> {
        Ok(1.0)
    }

    fn coverage(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityLayer {
    /// Base altitude of the layer.
    pub altitude_km: f64,
    /// Density at the base altitude and reference flux, kg/m^3.
    pub density: f64,
    pub scale_height_km: f64,
}

/// Piecewise-exponential density table with an exponential flux multiplier
/// `exp(kappa * (F - F_ref) / F_ref)`.
///
/// Layer `i` covers `[altitude_i, altitude_{i+1})`; the last node closes the
/// table and only its own altitude is evaluated from it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityModel {
    pub reference_flux: f64,
    pub kappa: f64,
    pub flux_range: [f64; 2],
    pub layers: Vec<DensityLayer>,
}

impl DensityModel {
    pub fn validate(&self) -> Result<(), AstroError> {
        let bad = |m: String| Err(AstroError::Data(m));
        if self.layers.len() < 2 {
            return bad("density table needs at least two layers".into());
        }
        for l in &self.layers {
            if !(l.density > 0.0 && l.density.is_finite() && l.scale_height_km > 0.0) {
                return bad(format!("layer at {} km must have positive density and scale height", l.altitude_km));
            }
        }
        for w in self.layers.windows(2) {
            if !(w[1].altitude_km > w[0].altitude_km) {
                return bad(format!("layer altitudes not increasing at {} km", w[1].altitude_km));
            }
            if !(w[1].density < w[0].density) {
                return bad(format!("densities not decreasing at {} km", w[1].altitude_km));
            }
        }
        let [lo, hi] = self.flux_range;
        if !(lo > 0.0 && lo < hi && (lo..=hi).contains(&self.reference_flux)) {
            return bad(format!("flux range [{lo}, {hi}] must be positive and contain the reference flux"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        Ok(())
    }
}

impl Atmosphere for DensityModel {
    fn flux_multiplier(&self, flux: f64) -> Result<f64, AstroError> {
        let [lo, hi] = self.flux_range;
        if !(lo..=hi).contains(&flux) {
            return Err(AstroError::FluxOutOfRange { flux, lo, hi });
        }
        Ok((self.kappa * (flux - self.reference_flux) / self.reference_flux).exp())
    }

    fn base_density(&self, altitude_m: f64) -> Result<f64, AstroError> {
        let km = altitude_m / 1000.0;
        let lo = self.layers[0].altitude_km;
        let hi = self.layers[self.layers.len() - 1].altitude_km;
        if !(lo..=hi).contains(&km) {
            return Err(AstroError::OutOfCoverage { altitude_km: km, lo_km: lo, hi_km: hi });
        }
        let i = self.layers.partition_point(|l| l.altitude_km <= km) - 1;
        let l = &self.layers[i];
        Ok(l.density * (-(km - l.altitude_km) / l.scale_height_km).exp())
    }

    fn coverage(&self) -> (f64, f64) {
        (self.layers[0].altitude_km * 1000.0, self.layers[self.layers.len() - 1].altitude_km * 1000.0)
    }
}

/// Contents of a versioned environment file: body constants and the density table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentData {
    pub version: u32,
    pub body: Body,
    pub density: DensityModel,
}

impl EnvironmentData {
    pub const VERSION: u32 = 1;

    pub fn from_toml(text: &str) -> Result<Self, AstroError> {
        let env: EnvironmentData = toml::from_str(text).map_err(|e| AstroError::Data(e.to_string()))?;
        if env.version != Self::VERSION {
            return Err(AstroError::Data(format!("unsupported environment version {}", env.version)));
        }
        env.body.validate()?;
        env.density.validate()?;
        Ok(env)
    }

    pub fn load(path: &Path) -> Result<Self, AstroError> {
        let text = std::fs::read_to_string(path).map_err(|e| AstroError::Data(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| AstroError::Data(format!("{}: {e}", path.display())))
    }
}

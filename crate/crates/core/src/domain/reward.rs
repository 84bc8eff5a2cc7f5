use serde::Deserialize;

use super::DomainError;
use crate::astro::ResonanceTable;

/// Which resonances penalise a state's reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResonanceWindow {
    /// Resonances crossed while decaying from the band center to the next altitude.
    #[default]
    Crossed,
    /// Resonances inside the state's own band.
    Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "unit")]
    pub res_max: f64,
    pub max_n: u32,
    pub inclination_deg: f64,
    #[serde(default)]
    pub window: ResonanceWindow,
}

fn unit() -> f64 {
    1.0
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta <= 1.0) {
            return Err(DomainError::Config(format!("need alpha, beta >= 0 and alpha + beta <= 1, got {}, {}", self.alpha, self.beta)));
        }
        if !(self.res_max > 0.0 && self.res_max.is_finite()) {
            return Err(DomainError::Config(format!("res_max must be positive, got {}", self.res_max)));
        }
        if !(1..=60).contains(&self.max_n) {
            return Err(DomainError::Config(format!("max_n = {} outside [1, 60]", self.max_n)));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(DomainError::Config(format!("inclination {} deg outside [0, 180]", self.inclination_deg)));
        }
        Ok(())
    }

    /// Geometric mean of `alpha * res_i / res_max + beta` over resonances in
    /// `[lo_km, hi_km]`; 1 when there are none.
    pub fn penalty(&self, table: &ResonanceTable, lo_km: f64, hi_km: f64) -> f64 {
        let hits = table.within(lo_km, hi_km);
        if hits.is_empty() {
            return 1.0;
        }
        let product: f64 = hits.iter().map(|e| self.alpha * (e.res / self.res_max).min(1.0) + self.beta).product();
        product.powf(1.0 / hits.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::ResonanceEntry;

    fn params() -> RewardParams {
        RewardParams { alpha: 0.5, beta: 0.25, res_max: 1.0, max_n: 5, inclination_deg: 89.0, window: ResonanceWindow::Crossed }
    }

    fn entry(altitude_km: f64, n: u32) -> ResonanceEntry {
        ResonanceEntry { altitude_km, revolutions: 15 * n + 1, nodal_days: n, res: 1.0 / n as f64 }
    }

    #[test]
    fn penalty_factor_cases() {
        let p = params();
        let t = ResonanceTable::new(vec![entry(410.0, 1), entry(420.0, 2)]);
        assert_eq!(p.penalty(&t, 300.0, 400.0), 1.0);
        assert_eq!(p.penalty(&t, 405.0, 415.0), 0.75);
        let two = p.penalty(&t, 400.0, 430.0);
        assert!((two - (0.75f64 * 0.5).sqrt()).abs() < 1e-15);
        assert!((two - 0.612_372_435_695_794_5).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        assert!(RewardParams { alpha: 0.8, ..params() }.validate().is_err());
        assert!(RewardParams { beta: -0.1, ..params() }.validate().is_err());
        assert!(RewardParams { max_n: 0, ..params() }.validate().is_err());
    }
}

use rayon::prelude::*;

use super::{AltitudeRow, Bin, Domain, DomainError};
use crate::astro::Atmosphere;

/// Interpolated outcomes closer than this to a band edge (km) are recomputed
/// by direct propagation.
pub const EDGE_MARGIN_KM: f64 = 1e-3;

/// Extra nodes kept below the first and above the last band center.
const PAD: usize = 2;

/// One-step decay outcomes of a single decision step, tabulated from every
/// band center (plus a few nodes outside the grid) for each flux branch.
///
/// Outcomes from other start altitudes are cubic interpolants of the table;
/// any interpolant near a band edge, or one that needs a node which decayed
/// out of the density coverage, falls back to `Domain::step_outcome`.
#[derive(Debug, Clone)]
pub struct StepOutcomes {
    pub step: usize,
    pub branches: Vec<(f64, f64)>,
    /// Number of nodes below band center 0.
    below: usize,
    starts: Vec<f64>,
    /// `km[q][i]`: raw end altitude from `starts[i]` under branch `q`, NaN on deorbit.
    km: Vec<Vec<f64>>,
}

impl StepOutcomes {
    /// Raw end altitude from the center of band `alt`, NaN on deorbit.
    pub fn from_center(&self, q: usize, alt: usize) -> f64 {
        self.km[q][alt + self.below]
    }

    /// No-burn outcome in the form used by `Domain::reward_from_outcomes`.
    pub fn no_burn_outcomes(&self, lo: f64, alt: usize) -> Vec<(Option<f64>, f64)> {
        self.branches
            .iter()
            .enumerate()
            .map(|(q, &(_, p))| {
                let km = self.from_center(q, alt);
                ((km >= lo).then_some(km), p)
            })
            .collect()
    }

    /// Cubic interpolant at `x` from the stencil around it, or `None` when
    /// the stencil is incomplete or disagrees with its shifted neighbour.
    fn interpolate(&self, q: usize, x: f64) -> Option<f64> {
        let n = self.starts.len();
        let w = self.starts[1] - self.starts[0];
        let u = (x - self.starts[0]) / w;
        if !(u >= 1.0 && u < (n - 2) as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(n - 3);
        let y = self.cubic(q, i - 1, x)?;
        let other = if i + 3 < n { self.cubic(q, i, x) } else { self.cubic(q, i - 2, x) };
        (other.is_some_and(|z| (z - y).abs() < 0.25 * EDGE_MARGIN_KM)).then_some(y)
    }

    fn cubic(&self, q: usize, first: usize, x: f64) -> Option<f64> {
        let (xs, ys) = (self.starts.get(first..first + 4)?, &self.km[q][first..first + 4]);
        if ys.iter().any(|y| y.is_nan()) {
            return None;
        }
        let mut y = 0.0;
        for j in 0..4 {
            let mut l = 1.0;
            for k in 0..4 {
                if k != j {
                    l *= (x - xs[k]) / (xs[j] - xs[k]);
                }
            }
            y += l * ys[j];
        }
        Some(y)
    }
}

impl<A: Atmosphere> Domain<A> {
    /// Tabulates the one-step outcomes of step `h`.
    pub fn step_outcomes(&self, h: usize) -> Result<StepOutcomes, DomainError> {
        let g = &self.altitude;
        let max_eta = self.thrust.points().map(|(e, _)| e).fold(1.0, f64::max);
        let max_raise = (1..self.actions.num_actions()).map(|a| self.actions.raise_bins(a)).max().unwrap_or(0);
        let above = ((max_eta - 1.0) * max_raise as f64).ceil() as usize + PAD;
        let w = g.width();
        let starts: Vec<f64> = (0..PAD + g.bins + above)
            .map(|i| match i.checked_sub(PAD) {
                Some(j) if j < g.bins => g.center(j),
                _ => g.lo + (i as f64 - PAD as f64 + 0.5) * w,
            })
            .collect();
        let (floor, ceiling) = self.atmosphere.coverage();
        let branches = self.scenario.branches(h);
        let km = branches
            .iter()
            .map(|&(flux, _)| {
                starts
                    .par_iter()
                    .map(|&x| {
                        if !(floor..=ceiling).contains(&(x * 1000.0)) {
                            return Ok(f64::NAN);
                        }
                        let p = self.propagate_step(x, flux)?;
                        Ok(if p.deorbited { f64::NAN } else { p.altitude_m / 1000.0 })
                    })
                    .collect::<Result<Vec<f64>, DomainError>>()
            })
            .collect::<Result<_, _>>()?;
        Ok(StepOutcomes { step: h, branches, below: PAD, starts, km })
    }

    /// Target band (or `n_alt` for deorbit) of a decay step from `start_km`
    /// under branch `q`, interpolated from `table` when it is safe to do so.
    fn target_band(&self, table: &StepOutcomes, q: usize, start_km: f64) -> Result<u32, DomainError> {
        let g = &self.altitude;
        let deorbit = g.bins as u32;
        if let Some(y) = table.interpolate(q, start_km) {
            if y < g.lo - EDGE_MARGIN_KM {
                return Ok(deorbit);
            }
            if let Bin::Index(j) = g.bin(y) {
                if y - g.edge(j) >= EDGE_MARGIN_KM && g.edge(j + 1) - y >= EDGE_MARGIN_KM {
                    return Ok(j as u32);
                }
            }
        }
        Ok(self.band_of(self.step_outcome(start_km, table.branches[q].0)?))
    }

    pub(crate) fn band_of(&self, outcome: Option<f64>) -> u32 {
        match outcome.map(|km| self.altitude.bin(km)) {
            Some(Bin::Index(j)) => j as u32,
            _ => self.altitude.bins as u32,
        }
    }

    /// `altitude_row` evaluated through a tabulated step.
    pub fn altitude_row_from(&self, table: &StepOutcomes, alt: usize, a: usize) -> Result<AltitudeRow, DomainError> {
        let lo = self.altitude.lo;
        self.collect_row(alt, a, table.step, &table.branches, |q, eta, raise| {
            if a == 0 {
                let km = table.from_center(q, alt);
                return Ok(self.band_of((km >= lo).then_some(km)));
            }
            self.target_band(table, q, self.altitude.center(alt) + eta * raise)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::{DensityLayer, DensityModel};
    use crate::domain::testing::{atmosphere, grace, toy_domain};
    use crate::domain::{SolarScenario, ThrustModel};

    /// Layers with scale heights chosen so the density is continuous.
    fn continuous() -> DensityModel {
        let nodes = [(200.0, 2.5e-10), (400.0, 3.7e-12), (700.0, 3.6e-14)];
        let mut m = atmosphere();
        m.layers = nodes
            .iter()
            .enumerate()
            .map(|(i, &(alt, rho))| {
                let next = nodes.get(i + 1).copied().unwrap_or((alt + 100.0, rho / 2.0));
                DensityLayer { altitude_km: alt, density: rho, scale_height_km: (next.0 - alt) / (rho / next.1).ln() }
            })
            .collect();
        m
    }

    #[test]
    fn tabulated_rows_match_direct_propagation() {
        let mut d = toy_domain(atmosphere(), 200, 20, 3, 4);
        d.spacecraft = grace();
        d.thrust = ThrustModel::three_point();
        d.scenario = SolarScenario::from_percentiles(
            vec![0.3, 0.7],
            &[vec![[80.0, 95.0, 110.0, 130.0, 150.0]; 4], vec![[120.0, 140.0, 160.0, 190.0, 230.0]; 4]],
            crate::domain::PERCENTILE_WEIGHTS,
        )
        .unwrap();
        for h in 0..4 {
            let table = d.step_outcomes(h).unwrap();
            for alt in 0..d.altitude.bins {
                assert_eq!(table.no_burn_outcomes(d.altitude.lo, alt), d.no_burn_outcomes(alt, h).unwrap());
                for a in 0..d.actions.num_actions() {
                    if d.cost_at(alt, a).unwrap().is_none() {
                        continue;
                    }
                    assert_eq!(d.altitude_row_from(&table, alt, a).unwrap(), d.altitude_row(alt, a, h).unwrap(), "alt {alt} a {a} h {h}");
                }
            }
        }
    }

    #[test]
    fn interpolation_error_is_far_below_the_margin() {
        let mut d = toy_domain(continuous(), 300, 10, 3, 2);
        d.spacecraft = grace();
        let table = d.step_outcomes(0).unwrap();
        let w = d.altitude.width();
        let (mut worst, mut used): (f64, usize) = (0.0, 0);
        for alt in 0..d.altitude.bins - 3 {
            for frac in [0.13, 0.5, 0.77, 1.31] {
                let x = d.altitude.center(alt) + frac * w;
                let flux = table.branches[0].0;
                if let (Some(y), Some(exact)) = (table.interpolate(0, x), d.step_outcome(x, flux).unwrap()) {
                    worst = worst.max((y - exact).abs());
                    used += 1;
                }
            }
        }
        assert!(used > 1000, "only {used} interpolants accepted");
        assert!(worst < 0.05 * EDGE_MARGIN_KM, "worst interpolation error {worst} km");
    }
}

//! Orbit-maintenance planning model: altitude, fuel and maneuver-cooldown
//! grids, raise actions with fuel costs, a resonance-penalised altitude
//! reward and a transition kernel mixing solar intensity, within-cycle flux
//! and thrust realisation.

mod actions;
mod grid;
mod model;
mod outcomes;
mod reward;
mod scenario;
mod state;

use thiserror::Error;

use crate::astro::{propagate_altitude, AstroError, Atmosphere, Body, FluxProfile, Propagated, ResonanceTable, SpacecraftParams};
use crate::mdp::{ModelError, TimeGrid, ROW_SUM_TOLERANCE};

pub use actions::{fuel_cost, FuelCost, FuelMode, ManeuverActionSet};
pub use grid::{AltitudeGrid, Bin, BinGrid, FuelGrid};
pub use model::{assemble_model, ModelStats, OrbitModel, OrbitSuccessors};
pub use outcomes::{StepOutcomes, EDGE_MARGIN_KM};
pub use reward::{ResonanceWindow, RewardParams};
pub use scenario::{FluxPoints, SolarScenario, ThrustModel, INTENSITY_NAMES, PERCENTILE_WEIGHTS};
pub use state::{DomainState, StateLayout};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Astro(#[from] AstroError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("action {action} inadmissible in {state:?} at step {step}")]
    Inadmissible { state: DomainState, action: usize, step: usize },
    #[error("row (alt band {alt}, action {action}, step {step}): {msg}")]
    Row { alt: usize, action: usize, step: usize, msg: String },
}

/// Everything needed to build the planning model.
#[derive(Debug, Clone)]
pub struct Domain<A: Atmosphere> {
    pub altitude: AltitudeGrid,
    pub fuel: FuelGrid,
    /// Cooldown saturation `K`; raises need cooldown `>= K` when spacing is enforced.
    pub cooldown_max: usize,
    pub enforce_spacing: bool,
    pub actions: ManeuverActionSet,
    pub fuel_mode: FuelMode,
    pub spacecraft: SpacecraftParams,
    pub body: Body,
    pub atmosphere: A,
    pub scenario: SolarScenario,
    pub thrust: ThrustModel,
    pub reward: RewardParams,
    pub resonances: ResonanceTable,
    pub time: TimeGrid,
    pub initial: DomainState,
}

/// Sorted successor distribution over altitude bands; band `n_alt` stands for deorbit.
pub type AltitudeRow = Vec<(u32, f64)>;

impl<A: Atmosphere> Domain<A> {
    pub fn layout(&self) -> StateLayout {
        StateLayout { n_alt: self.altitude.bins, n_fuel: self.fuel.bins, cooldown_max: self.cooldown_max }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.altitude.validate()?;
        self.fuel.validate()?;
        self.spacecraft.validate()?;
        self.body.validate()?;
        self.reward.validate()?;
        if self.scenario.horizon() < self.time.horizon() {
            return Err(DomainError::Config(format!(
                "flux scenario covers {} steps, horizon needs {}",
                self.scenario.horizon(),
                self.time.horizon()
            )));
        }
        if let DomainState::Orbit { alt, fuel, cooldown } = self.initial {
            if alt >= self.altitude.bins || fuel >= self.fuel.bins || cooldown > self.cooldown_max {
                return Err(DomainError::Config(format!("initial state {:?} outside the grids", self.initial)));
            }
        }
        let (floor, ceiling) = self.atmosphere.coverage();
        if self.altitude.lo * 1000.0 < floor || self.altitude.hi * 1000.0 > ceiling {
            return Err(DomainError::Config(format!(
                "altitude grid [{}, {}] km exceeds density coverage [{}, {}] km",
                self.altitude.lo,
                self.altitude.hi,
                floor / 1000.0,
                ceiling / 1000.0
            )));
        }
        Ok(())
    }

    /// Bins continuous values into a state.
    pub fn state_at(&self, altitude_km: f64, fuel: f64, cooldown: usize) -> Result<DomainState, DomainError> {
        if cooldown > self.cooldown_max {
            return Err(DomainError::Config(format!("cooldown {cooldown} exceeds {}", self.cooldown_max)));
        }
        let Bin::Index(alt) = self.altitude.bin(altitude_km) else { return Ok(DomainState::Deorbited) };
        match self.fuel.bin(fuel) {
            Bin::Index(f) => Ok(DomainState::Orbit { alt, fuel: f, cooldown }),
            Bin::Below => Err(DomainError::Config(format!("fuel {fuel} below the fuel grid"))),
        }
    }

    /// Altitude (km) after one step of decay from `start_km` at constant
    /// `flux`, or `None` if the orbit leaves the altitude grid from below.
    pub fn step_outcome(&self, start_km: f64, flux: f64) -> Result<Option<f64>, DomainError> {
        let p = self.propagate_step(start_km, flux)?;
        let km = p.altitude_m / 1000.0;
        Ok(if p.deorbited || km < self.altitude.lo { None } else { Some(km) })
    }

    fn propagate_step(&self, start_km: f64, flux: f64) -> Result<Propagated, DomainError> {
        Ok(propagate_altitude(
            start_km * 1000.0,
            self.time.step_seconds(),
            &FluxProfile::Constant(flux),
            &self.spacecraft,
            &self.body,
            &self.atmosphere,
        )?)
    }

    /// Fuel cost of `a` from altitude band `alt`, or `None` when the commanded
    /// raise would leave the grid ceiling.
    pub fn cost_at(&self, alt: usize, a: usize) -> Result<Option<FuelCost>, DomainError> {
        if alt + self.actions.raise_bins(a) >= self.altitude.bins {
            return Ok(None);
        }
        fuel_cost(alt, a, self.fuel_mode, &self.actions, &self.altitude, &self.fuel, &self.spacecraft, &self.body).map(Some)
    }

    pub fn fuel_cost(&self, s: DomainState, a: usize) -> Result<Option<FuelCost>, DomainError> {
        match s {
            DomainState::Deorbited => Ok((a == 0).then_some(FuelCost { amount: 0.0, bins: 0 })),
            DomainState::Orbit { alt, .. } => self.cost_at(alt, a),
        }
    }

    /// Admissible actions. No burn is always allowed; a raise needs the
    /// cooldown to have saturated (when spacing is enforced), enough fuel and
    /// a commanded target inside the grid.
    pub fn action_mask(&self, s: DomainState, _h: usize) -> Result<Vec<bool>, DomainError> {
        let mut mask = vec![false; self.actions.num_actions()];
        mask[0] = true;
        if let DomainState::Orbit { alt, fuel, cooldown } = s {
            if self.enforce_spacing && cooldown < self.cooldown_max {
                return Ok(mask);
            }
            for (a, m) in mask.iter_mut().enumerate().skip(1) {
                *m = matches!(self.cost_at(alt, a)?, Some(c) if c.bins <= fuel);
            }
        }
        Ok(mask)
    }

    /// Successor distribution over altitude bands for action `a` from band
    /// `alt` at step `h`, marginal over intensity, flux and thrust.
    pub fn altitude_row(&self, alt: usize, a: usize, h: usize) -> Result<AltitudeRow, DomainError> {
        let center = self.altitude.center(alt);
        let branches = self.scenario.branches(h);
        self.collect_row(alt, a, h, &branches, |q, eta, raise| Ok(self.band_of(self.step_outcome(center + eta * raise, branches[q].0)?)))
    }

    /// Mixes per-(flux branch, thrust factor) target bands into a sorted row.
    fn collect_row(
        &self,
        alt: usize,
        a: usize,
        h: usize,
        branches: &[(f64, f64)],
        mut target: impl FnMut(usize, f64, f64) -> Result<u32, DomainError>,
    ) -> Result<AltitudeRow, DomainError> {
        let raise = self.actions.raise_km(a, &self.altitude);
        let thrust: Vec<(f64, f64)> = if a == 0 { vec![(1.0, 1.0)] } else { self.thrust.points().collect() };
        let mut row: AltitudeRow = Vec::new();
        for (q, &(_, pf)) in branches.iter().enumerate() {
            for &(eta, pe) in &thrust {
                let t = target(q, eta, raise)?;
                match row.iter_mut().find(|(b, _)| *b == t) {
                    Some(e) => e.1 += pf * pe,
                    None => row.push((t, pf * pe)),
                }
            }
        }
        row.sort_unstable_by_key(|e| e.0);
        let sum: f64 = row.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(DomainError::Row { alt, action: a, step: h, msg: format!("row sums to {sum}") });
        }
        Ok(row)
    }

    /// Full successor distribution of `(s, a)` at step `h`, sorted by state index.
    pub fn transition_row(&self, s: DomainState, a: usize, h: usize) -> Result<Vec<(usize, f64)>, DomainError> {
        let layout = self.layout();
        let mask = self.action_mask(s, h)?;
        if !mask.get(a).copied().unwrap_or(false) {
            return Err(DomainError::Inadmissible { state: s, action: a, step: h });
        }
        let DomainState::Orbit { alt, fuel, cooldown } = s else {
            return Ok(vec![(layout.deorbited_index(), 1.0)]);
        };
        let (fuel_next, cooldown_next) = if a == 0 {
            (fuel, (cooldown + 1).min(self.cooldown_max))
        } else {
            let cost = self.cost_at(alt, a)?.expect("admissible raise has a cost");
            (fuel - cost.bins, 0)
        };
        let base = layout.base(cooldown_next, fuel_next);
        let deorbit = self.altitude.bins as u32;
        Ok(self
            .altitude_row(alt, a, h)?
            .into_iter()
            .map(|(t, p)| (if t == deorbit { layout.deorbited_index() } else { base + t as usize }, p))
            .collect())
    }

    /// Reward of altitude band `alt` at step `h` from its no-burn outcomes
    /// `(next altitude km or deorbit, probability)`.
    pub fn reward_from_outcomes(&self, alt: usize, outcomes: &[(Option<f64>, f64)]) -> f64 {
        let center = self.altitude.center(alt);
        let half = 0.5 * self.altitude.width();
        let band = self.reward.penalty(&self.resonances, center - half, center + half);
        outcomes
            .iter()
            .map(|&(next, p)| match next {
                None => 0.0,
                Some(km) => {
                    let factor = match self.reward.window {
                        ResonanceWindow::Band => band,
                        ResonanceWindow::Crossed if km < center => self.reward.penalty(&self.resonances, km, center),
                        ResonanceWindow::Crossed => band,
                    };
                    p * km * factor
                }
            })
            .sum()
    }

    pub fn no_burn_outcomes(&self, alt: usize, h: usize) -> Result<Vec<(Option<f64>, f64)>, DomainError> {
        let center = self.altitude.center(alt);
        self.scenario.branches(h).into_iter().map(|(f, p)| Ok((self.step_outcome(center, f)?, p))).collect()
    }

    /// Reward table indexed `[h * n_alt + alt]`; deorbited states earn 0.
    pub fn build_reward(&self) -> Result<Vec<f64>, DomainError> {
        let n = self.altitude.bins;
        let mut out = Vec::with_capacity(self.time.horizon() * n);
        for h in 0..self.time.horizon() {
            for alt in 0..n {
                out.push(self.reward_from_outcomes(alt, &self.no_burn_outcomes(alt, h)?));
            }
        }
        Ok(out)
    }
}

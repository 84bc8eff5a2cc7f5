use rayon::prelude::*;

use super::{AltitudeRow, BinGrid, Domain, DomainError, DomainState, StateLayout};
use crate::astro::Atmosphere;
use crate::mdp::{Mdp, TimeGrid};

const NO_COST: u32 = u32::MAX;

/// Size of an assembled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    pub states: usize,
    pub actions: usize,
    pub steps: usize,
    /// Stored altitude-factor entries.
    pub factor_nonzeros: usize,
    /// Entries a fully tabulated kernel over all admissible triples would hold.
    pub nonzeros: u64,
    /// Heap bytes held by the model.
    pub memory_bytes: usize,
}

/// Assembled orbit-maintenance MDP.
///
/// The kernel factorises: the altitude successor distribution depends only on
/// `(h, altitude band, action)`, while fuel and cooldown update
/// deterministically. Only the altitude factor is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitModel {
    layout: StateLayout,
    altitude: BinGrid,
    fuel: BinGrid,
    time: TimeGrid,
    num_actions: usize,
    enforce_spacing: bool,
    initial: Vec<(usize, f64)>,
    /// `[h * n_alt + alt]`
    reward: Vec<f64>,
    /// Fuel bands consumed, `[alt * A + a]`; `NO_COST` where the raise leaves the grid.
    cost: Vec<u32>,
    /// Row `(h * n_alt + alt) * A + a` occupies `offsets[row]..offsets[row + 1]`.
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    absorbing: ([u32; 1], [f64; 1]),
}

impl OrbitModel {
    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn altitude_grid(&self) -> &BinGrid {
        &self.altitude
    }

    pub fn fuel_grid(&self) -> &BinGrid {
        &self.fuel
    }

    pub fn enforces_spacing(&self) -> bool {
        self.enforce_spacing
    }

    pub fn decode(&self, s: usize) -> DomainState {
        self.layout.decode(s)
    }

    /// Fuel bands used by raise `a` from band `alt`, `None` if not available there.
    pub fn cost_bins(&self, alt: usize, a: usize) -> Option<usize> {
        let c = self.cost[alt * self.num_actions + a];
        (c != NO_COST).then_some(c as usize)
    }

    pub fn altitude_row(&self, alt: usize, a: usize, h: usize) -> (&[u32], &[f64]) {
        let row = (h * self.layout.n_alt + alt) * self.num_actions + a;
        let (lo, hi) = (self.offsets[row], self.offsets[row + 1]);
        (&self.targets[lo..hi], &self.probs[lo..hi])
    }

    pub fn altitude_reward(&self, alt: usize, h: usize) -> f64 {
        self.reward[h * self.layout.n_alt + alt]
    }

    pub fn stats(&self) -> ModelStats {
        let l = self.layout;
        let mut nonzeros = 0u64;
        for h in 0..self.time.horizon() {
            nonzeros += 1;
            for alt in 0..l.n_alt {
                for a in 0..self.num_actions {
                    let len = self.altitude_row(alt, a, h).0.len() as u64;
                    let count = if a == 0 {
                        (l.n_fuel * (l.cooldown_max + 1)) as u64
                    } else {
                        match self.cost_bins(alt, a) {
                            Some(c) if c < l.n_fuel => {
                                let cooldowns = if self.enforce_spacing { 1 } else { l.cooldown_max + 1 };
                                ((l.n_fuel - c) * cooldowns) as u64
                            }
                            _ => 0,
                        }
                    };
                    nonzeros += len * count;
                }
            }
        }
        let memory_bytes = self.reward.len() * 8
            + self.cost.len() * 4
            + self.offsets.len() * std::mem::size_of::<usize>()
            + self.targets.len() * 4
            + self.probs.len() * 8
            + self.initial.len() * 16;
        ModelStats {
            states: l.num_states(),
            actions: self.num_actions,
            steps: self.time.horizon(),
            factor_nonzeros: self.targets.len(),
            nonzeros,
            memory_bytes,
        }
    }
}

/// Builds the reward table, cost table and altitude kernel for every step,
/// in parallel over altitude bands.
pub fn assemble_model<A: Atmosphere>(domain: &Domain<A>) -> Result<OrbitModel, DomainError> {
    domain.validate()?;
    let layout = domain.layout();
    let n_alt = layout.n_alt;
    let na = domain.actions.num_actions();

    let mut cost = vec![NO_COST; n_alt * na];
    for alt in 0..n_alt {
        for a in 0..na {
            if let Some(c) = domain.cost_at(alt, a)? {
                cost[alt * na + a] = c.bins.min(NO_COST as usize - 1) as u32;
            }
        }
    }

    let horizon = domain.time.horizon();
    let mut reward = Vec::with_capacity(horizon * n_alt);
    let mut offsets = Vec::with_capacity(horizon * n_alt * na + 1);
    let mut targets = Vec::new();
    let mut probs = Vec::new();
    offsets.push(0);
    for h in 0..horizon {
        let table = domain.step_outcomes(h)?;
        let cells: Vec<(f64, Vec<AltitudeRow>)> = (0..n_alt)
            .into_par_iter()
            .map(|alt| -> Result<_, DomainError> {
                let r = domain.reward_from_outcomes(alt, &table.no_burn_outcomes(domain.altitude.lo, alt));
                let rows = (0..na)
                    .map(|a| if cost[alt * na + a] == NO_COST { Ok(Vec::new()) } else { domain.altitude_row_from(&table, alt, a) })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((r, rows))
            })
            .collect::<Result<_, _>>()?;
        for (r, rows) in cells {
            reward.push(r);
            for row in rows {
                for (t, p) in row {
                    targets.push(t);
                    probs.push(p);
                }
                offsets.push(targets.len());
            }
        }
    }
    targets.shrink_to_fit();
    probs.shrink_to_fit();

    let initial = vec![(layout.encode(domain.initial), 1.0)];
    Ok(OrbitModel {
        layout,
        altitude: domain.altitude,
        fuel: domain.fuel,
        time: domain.time.clone(),
        num_actions: na,
        enforce_spacing: domain.enforce_spacing,
        initial,
        reward,
        cost,
        offsets,
        targets,
        probs,
        absorbing: ([n_alt as u32], [1.0]),
    })
}

pub struct OrbitSuccessors<'a> {
    targets: &'a [u32],
    probs: &'a [f64],
    i: usize,
    base: usize,
    n_alt: u32,
    deorbited: usize,
}

impl Iterator for OrbitSuccessors<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<(usize, f64)> {
        let t = *self.targets.get(self.i)?;
        let p = self.probs[self.i];
        self.i += 1;
        Some((if t == self.n_alt { self.deorbited } else { self.base + t as usize }, p))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.targets.len() - self.i;
        (n, Some(n))
    }
}

impl Mdp for OrbitModel {
    type Successors<'a> = OrbitSuccessors<'a>;

    fn num_states(&self) -> usize {
        self.layout.num_states()
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn time(&self) -> &TimeGrid {
        &self.time
    }

    fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    #[inline]
    fn is_admissible(&self, s: usize, a: usize, _h: usize) -> bool {
        if a >= self.num_actions {
            return false;
        }
        if a == 0 {
            return true;
        }
        match self.layout.decode(s) {
            DomainState::Deorbited => false,
            DomainState::Orbit { alt, fuel, cooldown } => {
                if self.enforce_spacing && cooldown < self.layout.cooldown_max {
                    return false;
                }
                matches!(self.cost_bins(alt, a), Some(c) if c <= fuel)
            }
        }
    }

    #[inline]
    fn reward(&self, s: usize, _a: usize, h: usize) -> f64 {
        match self.layout.decode(s) {
            DomainState::Deorbited => 0.0,
            DomainState::Orbit { alt, .. } => self.altitude_reward(alt, h),
        }
    }

    #[inline]
    fn successors(&self, s: usize, a: usize, h: usize) -> OrbitSuccessors<'_> {
        let deorbited = self.layout.deorbited_index();
        let n_alt = self.layout.n_alt as u32;
        match self.layout.decode(s) {
            DomainState::Deorbited => OrbitSuccessors {
                targets: &self.absorbing.0,
                probs: &self.absorbing.1,
                i: 0,
                base: 0,
                n_alt,
                deorbited,
            },
            DomainState::Orbit { alt, fuel, cooldown } => {
                let (fuel_next, cooldown_next) = if a == 0 {
                    (fuel, (cooldown + 1).min(self.layout.cooldown_max))
                } else {
                    (fuel.saturating_sub(self.cost_bins(alt, a).unwrap_or(0)), 0)
                };
                let (targets, probs) = self.altitude_row(alt, a, h);
                OrbitSuccessors { targets, probs, i: 0, base: self.layout.base(cooldown_next, fuel_next), n_alt, deorbited }
            }
        }
    }
}

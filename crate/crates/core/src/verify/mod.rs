//! Reach-avoid verification of a synthesized maneuver policy: the safety
//! specification compiled to an unsafe set, safety values by backward
//! recursion, the chance-constraint check and forward reports.

mod report;
mod safety;

use thiserror::Error;

use crate::domain::{DomainState, OrbitModel, StateLayout};
use crate::mdp::ModelError;

pub use report::{
    forward_report, replan_from_state, verify_policy, AltitudeDistribution, EnvelopeRow, ForwardReport, ReplanReport, VerificationResult,
};
pub use safety::{
    check_constraint, path_enumeration, safety_value, safety_value_with, violation_trace, FeasibilityReport, PathProbabilities,
    SafetyMode, SafetyTable, TraceStep, PATH_ENUMERATION_LIMIT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("safety specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Mission safety requirement: stay above the floor, keep maneuvers at least
/// `spacing_steps` steps apart, and do both with probability at least `1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetySpec {
    pub altitude_floor_km: f64,
    pub spacing_steps: usize,
    pub delta: f64,
}

impl Default for SafetySpec {
    fn default() -> Self {
        SafetySpec { altitude_floor_km: 300.0, spacing_steps: 3, delta: 0.05 }
    }
}

impl SafetySpec {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(VerifyError::Spec(format!("delta = {} outside [0, 1)", self.delta)));
        }
        if !self.altitude_floor_km.is_finite() {
            return Err(VerifyError::Spec("altitude floor must be finite".into()));
        }
        Ok(())
    }
}

/// Set of flat state indices, stored as a bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsafeSet {
    len: usize,
    words: Vec<u64>,
}

impl UnsafeSet {
    pub fn empty(num_states: usize) -> Self {
        UnsafeSet { len: num_states, words: vec![0; num_states.div_ceil(64)] }
    }

    pub fn from_states(num_states: usize, states: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(num_states);
        for s in states {
            set.insert(s);
        }
        set
    }

    pub fn insert(&mut self, s: usize) {
        assert!(s < self.len, "state {s} outside a space of {}", self.len);
        self.words[s / 64] |= 1 << (s % 64);
    }

    #[inline]
    pub fn contains(&self, s: usize) -> bool {
        self.words[s / 64] >> (s % 64) & 1 == 1
    }

    pub fn num_states(&self) -> usize {
        self.len
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_subset(&self, other: &UnsafeSet) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&s| self.contains(s))
    }

    pub(crate) fn from_words(len: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        UnsafeSet { len, words }
    }
}

/// How a clause of the specification is guaranteed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseStatus {
    /// Holds on every trajectory of the model by construction.
    Structural,
    /// Checked by the safety recursion.
    Probabilistic,
}

impl ClauseStatus {
    pub fn name(self) -> &'static str {
        match self {
            ClauseStatus::Structural => "structural",
            ClauseStatus::Probabilistic => "probabilistic",
        }
    }
}

/// Specification compiled against a model's state space.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSpec {
    pub spec: SafetySpec,
    pub unsafe_set: UnsafeSet,
    pub altitude_clause: ClauseStatus,
    pub spacing_clause: ClauseStatus,
    layout: StateLayout,
}

impl CompiledSpec {
    /// True when taking raise `a` in `s` breaks the spacing clause.
    ///
    /// A raise at cooldown `c < K` comes `c + 1` steps after the previous one.
    #[inline]
    pub fn violates(&self, s: usize, a: usize) -> bool {
        if a == 0 || self.spacing_clause == ClauseStatus::Structural {
            return false;
        }
        match self.layout.decode(s) {
            DomainState::Orbit { cooldown, .. } => cooldown + 1 < self.spec.spacing_steps,
            DomainState::Deorbited => false,
        }
    }

    pub fn safety_value(&self, model: &OrbitModel, mode: SafetyMode<'_>, retain: &crate::mdp::Retain) -> Result<SafetyTable, VerifyError> {
        safety_value_with(model, &self.unsafe_set, |s, a| self.violates(s, a), mode, retain)
    }
}

/// Compiles `spec` for `model`: the altitude clause becomes the unsafe set
/// (deorbited plus every band whose upper edge is at or below the floor) and
/// the spacing clause is either guaranteed by the action mask or turned into
/// per-transition violation flags.
pub fn compile_spec(spec: &SafetySpec, model: &OrbitModel) -> Result<CompiledSpec, VerifyError> {
    spec.validate()?;
    let grid = model.altitude_grid();
    if spec.altitude_floor_km < grid.lo || spec.altitude_floor_km > grid.hi {
        return Err(VerifyError::Spec(format!(
            "altitude floor {} km outside the grid [{}, {}] km",
            spec.altitude_floor_km, grid.lo, grid.hi
        )));
    }
    let layout = model.layout();
    if layout.cooldown_max < spec.spacing_steps {
        return Err(VerifyError::Spec(format!(
            "cooldown saturates at {} steps, too short to track a spacing of {}",
            layout.cooldown_max, spec.spacing_steps
        )));
    }

    let below = (0..grid.bins).take_while(|&j| grid.edge(j + 1) <= spec.altitude_floor_km).count();
    let mut unsafe_set = UnsafeSet::empty(layout.num_states());
    unsafe_set.insert(layout.deorbited_index());
    for c in 0..=layout.cooldown_max {
        for f in 0..layout.n_fuel {
            let base = layout.base(c, f);
            for alt in 0..below {
                unsafe_set.insert(base + alt);
            }
        }
    }

    let spacing_clause = if model.enforces_spacing() { ClauseStatus::Structural } else { ClauseStatus::Probabilistic };
    Ok(CompiledSpec { spec: *spec, unsafe_set, altitude_clause: ClauseStatus::Probabilistic, spacing_clause, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::Vacuum;
    use crate::domain::assemble_model;
    use crate::domain::testing::toy_domain;

    #[test]
    fn bitset_basics() {
        let mut b = UnsafeSet::empty(130);
        b.insert(0);
        b.insert(64);
        b.insert(129);
        assert_eq!(b.count(), 3);
        assert!(b.contains(64) && !b.contains(63));
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        let c = UnsafeSet::from_states(130, [0, 64, 129, 7]);
        assert!(b.is_subset(&c) && !c.is_subset(&b));
    }

    #[test]
    fn floor_at_grid_bottom_leaves_only_deorbit() {
        let m = assemble_model(&toy_domain(Vacuum, 40, 10, 3, 4)).unwrap();
        let lo = m.altitude_grid().lo;
        let c = compile_spec(&SafetySpec { altitude_floor_km: lo, ..Default::default() }, &m).unwrap();
        assert_eq!(c.unsafe_set.iter().collect::<Vec<_>>(), vec![m.layout().deorbited_index()]);
        assert_eq!(c.spacing_clause, ClauseStatus::Structural);
        assert_eq!(c.altitude_clause, ClauseStatus::Probabilistic);
    }

    #[test]
    fn floor_inside_grid_marks_bands_below() {
        let m = assemble_model(&toy_domain(Vacuum, 40, 10, 3, 4)).unwrap();
        let g = *m.altitude_grid();
        // floor exactly on the upper edge of band 4, inside band 5
        let on_edge = compile_spec(&SafetySpec { altitude_floor_km: g.edge(5), ..Default::default() }, &m).unwrap();
        let inside = compile_spec(&SafetySpec { altitude_floor_km: g.edge(5) + 0.5 * g.width(), ..Default::default() }, &m).unwrap();
        let per_band = m.layout().n_fuel * (m.layout().cooldown_max + 1);
        assert_eq!(on_edge.unsafe_set.count(), 5 * per_band + 1);
        assert_eq!(inside.unsafe_set, on_edge.unsafe_set);
        for s in on_edge.unsafe_set.iter() {
            match m.decode(s) {
                DomainState::Orbit { alt, .. } => assert!(alt < 5),
                DomainState::Deorbited => {}
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let m = assemble_model(&toy_domain(Vacuum, 40, 10, 3, 4)).unwrap();
        let g = *m.altitude_grid();
        assert!(compile_spec(&SafetySpec { altitude_floor_km: g.lo - 1.0, ..Default::default() }, &m).is_err());
        assert!(compile_spec(&SafetySpec { altitude_floor_km: g.hi + 1.0, ..Default::default() }, &m).is_err());
        assert!(compile_spec(&SafetySpec { delta: 1.0, ..Default::default() }, &m).is_err());
        assert!(compile_spec(&SafetySpec { spacing_steps: 4, ..Default::default() }, &m).is_err());
    }

    #[test]
    fn unenforced_spacing_compiles_to_flags() {
        let mut d = toy_domain(Vacuum, 40, 10, 3, 4);
        d.enforce_spacing = false;
        let m = assemble_model(&d).unwrap();
        let c = compile_spec(&SafetySpec { altitude_floor_km: m.altitude_grid().lo, ..Default::default() }, &m).unwrap();
        assert_eq!(c.spacing_clause, ClauseStatus::Probabilistic);
        let l = m.layout();
        let at = |cooldown| l.encode(DomainState::Orbit { alt: 10, fuel: 5, cooldown });
        assert!(c.violates(at(0), 1));
        assert!(c.violates(at(1), 1));
        assert!(!c.violates(at(2), 1));
        assert!(!c.violates(at(0), 0));
    }
}

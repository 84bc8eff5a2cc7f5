use rayon::prelude::*;

use super::{UnsafeSet, VerifyError};
use crate::mdp::{Mdp, ModelError, Policy, Retain, ValueFunction, ROW_SUM_TOLERANCE};

const CHUNK: usize = 4096;

/// Path-tree nodes [`path_enumeration`] will expand before giving up.
pub const PATH_ENUMERATION_LIMIT: usize = 10_000_000;

/// Which actions the safety recursion follows.
#[derive(Debug, Clone, Copy)]
pub enum SafetyMode<'p> {
    /// Expectation under a fixed policy.
    UnderPolicy(&'p Policy),
    /// Best admissible action at each state.
    MaxOverActions,
}

impl SafetyMode<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SafetyMode::UnderPolicy(_) => "under-policy",
            SafetyMode::MaxOverActions => "max-over-actions",
        }
    }
}

/// Safety values `V(s, h)` with, per step, the states from which the unsafe
/// set (or a forbidden transition) can still be reached.
#[derive(Debug, Clone)]
pub struct SafetyTable {
    pub mode: &'static str,
    pub values: ValueFunction,
    reach: Vec<UnsafeSet>,
}

impl SafetyTable {
    pub fn value_at(&self, s: usize, h: usize) -> f64 {
        self.values.at(s, h)
    }

    /// Whether a violation has positive probability from `s` at step `h`.
    pub fn can_reach(&self, s: usize, h: usize) -> bool {
        self.reach[h].contains(s)
    }

    pub fn reachable_set(&self, h: usize) -> &UnsafeSet {
        &self.reach[h]
    }
}

/// Probability of never entering `unsafe_set` over the horizon.
pub fn safety_value<M: Mdp>(model: &M, unsafe_set: &UnsafeSet, mode: SafetyMode<'_>, retain: &Retain) -> Result<SafetyTable, VerifyError> {
    safety_value_with(model, unsafe_set, |_, _| false, mode, retain)
}

/// As [`safety_value`], with `forbidden(s, a)` marking transitions that
/// violate the specification by themselves. Under a policy they score 0; the
/// maximising mode never takes them.
pub fn safety_value_with<M, F>(
    model: &M,
    unsafe_set: &UnsafeSet,
    forbidden: F,
    mode: SafetyMode<'_>,
    retain: &Retain,
) -> Result<SafetyTable, VerifyError>
where
    M: Mdp,
    F: Fn(usize, usize) -> bool + Sync,
{
    let ns = model.num_states();
    let horizon = model.horizon();
    if unsafe_set.num_states() != ns {
        return Err(VerifyError::Spec(format!("unsafe set covers {} states, model has {ns}", unsafe_set.num_states())));
    }
    if let SafetyMode::UnderPolicy(p) = mode {
        p.check_shape(model)?;
    }

    let mut reach = vec![unsafe_set.clone(); horizon + 1];
    let mut values = ValueFunction::new(ns, horizon);
    let mut next: Vec<f64> = (0..ns).map(|s| if unsafe_set.contains(s) { 0.0 } else { 1.0 }).collect();
    let mut cur = vec![0.0; ns];

    for h in (0..horizon).rev() {
        let words = {
            let ahead = &reach[h + 1];
            let forbidden = &forbidden;
            (0..ns.div_ceil(64))
                .into_par_iter()
                .with_min_len(64)
                .map(|w| -> Result<u64, ModelError> {
                    let mut bits = 0u64;
                    for s in w * 64..((w + 1) * 64).min(ns) {
                        if unsafe_set.contains(s) || reaches(model, s, h, ahead, forbidden, mode)? {
                            bits |= 1 << (s - w * 64);
                        }
                    }
                    Ok(bits)
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        reach[h] = UnsafeSet::from_words(ns, words);

        let here = &reach[h];
        let next_ref = &next;
        let forbidden = &forbidden;
        cur.par_chunks_mut(CHUNK).enumerate().try_for_each(|(chunk, vals)| -> Result<(), ModelError> {
            let base = chunk * CHUNK;
            for (i, v) in vals.iter_mut().enumerate() {
                let s = base + i;
                *v = if unsafe_set.contains(s) {
                    0.0
                } else if !here.contains(s) {
                    1.0
                } else {
                    backup(model, s, h, next_ref, forbidden, mode)?
                };
            }
            Ok(())
        })?;
        if retain.keeps(h + 1, horizon) {
            values.put(h + 1, next.clone());
        }
        std::mem::swap(&mut cur, &mut next);
    }
    values.put(0, next);
    Ok(SafetyTable { mode: mode.name(), values, reach })
}

#[inline]
fn reaches<M: Mdp, F: Fn(usize, usize) -> bool>(
    model: &M,
    s: usize,
    h: usize,
    ahead: &UnsafeSet,
    forbidden: &F,
    mode: SafetyMode<'_>,
) -> Result<bool, ModelError> {
    let hits = |a: usize| model.successors(s, a, h).any(|(t, p)| p > 0.0 && ahead.contains(t));
    match mode {
        SafetyMode::UnderPolicy(pi) => {
            let a = pi.action_at(s, h);
            if !model.is_admissible(s, a, h) {
                return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
            }
            Ok(forbidden(s, a) || hits(a))
        }
        SafetyMode::MaxOverActions => {
            let mut allowed = (0..model.num_actions()).filter(|&a| model.is_admissible(s, a, h) && !forbidden(s, a)).peekable();
            if allowed.peek().is_none() {
                return Ok(true);
            }
            Ok(allowed.any(hits))
        }
    }
}

#[inline]
fn backup<M: Mdp, F: Fn(usize, usize) -> bool>(
    model: &M,
    s: usize,
    h: usize,
    next: &[f64],
    forbidden: &F,
    mode: SafetyMode<'_>,
) -> Result<f64, ModelError> {
    let v = match mode {
        SafetyMode::UnderPolicy(pi) => {
            let a = pi.action_at(s, h);
            if forbidden(s, a) {
                0.0
            } else {
                expectation(model, s, a, h, next)?
            }
        }
        SafetyMode::MaxOverActions => {
            let mut best = 0.0f64;
            for a in 0..model.num_actions() {
                if model.is_admissible(s, a, h) && !forbidden(s, a) {
                    best = best.max(expectation(model, s, a, h, next)?);
                }
            }
            best
        }
    };
    Ok(v.clamp(0.0, 1.0))
}

#[inline]
fn expectation<M: Mdp>(model: &M, s: usize, a: usize, h: usize, next: &[f64]) -> Result<f64, ModelError> {
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (t, p) in model.successors(s, a, h) {
        acc += p * next[t];
        mass += p;
    }
    if (mass - 1.0).abs() > ROW_SUM_TOLERANCE {
        if mass == 0.0 {
            return Err(ModelError::MissingRow { state: s, action: a, step: h });
        }
        return Err(ModelError::RowSum { state: s, action: a, step: h, sum: mass });
    }
    Ok(acc)
}

/// Outcome of the chance-constraint check.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub mode: &'static str,
    /// Safety probability from the initial distribution.
    pub probability: f64,
    pub delta: f64,
    pub feasible: bool,
    /// `probability - (1 - delta)`.
    pub margin: f64,
}

pub fn check_constraint(table: &SafetyTable, initial: &[(usize, f64)], delta: f64) -> FeasibilityReport {
    let probability = table.values.expected_at(initial, 0);
    let margin = probability - (1.0 - delta);
    FeasibilityReport { mode: table.mode, probability, delta, feasible: margin >= 0.0, margin }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub state: usize,
    /// `None` once the trace has entered the unsafe set or reached the horizon.
    pub action: Option<usize>,
    pub safety: f64,
}

/// Follows `policy` from `start`, always moving to the successor with the
/// lowest safety value (most probable on ties), until the unsafe set or the
/// horizon. Needs every value slice; returns `None` otherwise.
pub fn violation_trace<M: Mdp>(
    model: &M,
    policy: &Policy,
    table: &SafetyTable,
    unsafe_set: &UnsafeSet,
    start: usize,
) -> Option<Vec<TraceStep>> {
    if !table.values.is_complete() {
        return None;
    }
    let horizon = model.horizon();
    let mut s = start;
    let mut out = Vec::new();
    for h in 0..horizon {
        let safety = table.value_at(s, h);
        if unsafe_set.contains(s) {
            out.push(TraceStep { step: h, state: s, action: None, safety });
            return Some(out);
        }
        let a = policy.action_at(s, h);
        out.push(TraceStep { step: h, state: s, action: Some(a), safety });
        let mut best: Option<(usize, f64, f64)> = None;
        for (t, p) in model.successors(s, a, h) {
            let v = table.value_at(t, h + 1);
            if best.is_none_or(|(_, bv, bp)| v < bv || (v == bv && p > bp)) {
                best = Some((t, v, p));
            }
        }
        s = best?.0;
    }
    out.push(TraceStep { step: horizon, state: s, action: None, safety: table.value_at(s, horizon) });
    Some(out)
}

/// Path-summed probabilities from the model's initial distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProbabilities {
    /// Mass of complete paths that never visit the set.
    pub avoid: f64,
    /// Mass of path prefixes that end at their first visit to the set.
    pub reach: f64,
}

/// Exhaustive enumeration of every path under `policy`, for checking the
/// safety recursion on small instances.
pub fn path_enumeration<M: Mdp>(model: &M, policy: &Policy, unsafe_set: &UnsafeSet) -> Result<PathProbabilities, VerifyError> {
    policy.check_shape(model)?;
    let mut budget = PATH_ENUMERATION_LIMIT;
    let mut out = PathProbabilities { avoid: 0.0, reach: 0.0 };
    for &(s, p) in model.initial() {
        walk(model, policy, unsafe_set, s, 0, p, &mut out, &mut budget)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk<M: Mdp>(
    model: &M,
    policy: &Policy,
    unsafe_set: &UnsafeSet,
    s: usize,
    h: usize,
    prob: f64,
    out: &mut PathProbabilities,
    budget: &mut usize,
) -> Result<(), VerifyError> {
    if *budget == 0 {
        return Err(VerifyError::Spec(format!("path tree exceeds {PATH_ENUMERATION_LIMIT} nodes")));
    }
    *budget -= 1;
    if unsafe_set.contains(s) {
        out.reach += prob;
        return Ok(());
    }
    if h == model.horizon() {
        out.avoid += prob;
        return Ok(());
    }
    let a = policy.action_at(s, h);
    for (t, p) in model.successors(s, a, h) {
        walk(model, policy, unsafe_set, t, h + 1, prob * p, out, budget)?;
    }
    Ok(())
}

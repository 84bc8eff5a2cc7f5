use rayon::prelude::*;

use super::{Mdp, ModelError, Policy, Retain, Terminal, ValueFunction, ROW_SUM_TOLERANCE};

/// States per parallel work item in a backward sweep.
pub(crate) const CHUNK: usize = 4096;

/// Optimal values and a maximising policy by backward induction.
///
/// Ties go to the lowest action index. Rows are checked for normalisation as
/// they are read, so an inconsistent model is reported with the offending
/// `(s, a, h)`.
pub fn solve_backward<M: Mdp>(model: &M, terminal: &Terminal) -> Result<(ValueFunction, Policy), ModelError> {
    solve_backward_retaining(model, terminal, &Retain::All)
}

pub fn solve_backward_retaining<M: Mdp>(
    model: &M,
    terminal: &Terminal,
    retain: &Retain,
) -> Result<(ValueFunction, Policy), ModelError> {
    let ns = model.num_states();
    let horizon = model.horizon();
    terminal.check(ns)?;

    let mut values = ValueFunction::new(ns, horizon);
    let mut actions = vec![0u8; ns * horizon];
    let mut next: Vec<f64> = (0..ns).map(|s| terminal.value(s)).collect();
    let mut cur = vec![0.0; ns];

    for h in (0..horizon).rev() {
        let pol = &mut actions[h * ns..(h + 1) * ns];
        let next_ref = &next;
        cur.par_chunks_mut(CHUNK).zip(pol.par_chunks_mut(CHUNK)).enumerate().try_for_each(
            |(chunk, (vals, acts))| -> Result<(), ModelError> {
                let base = chunk * CHUNK;
                for (i, (v, act)) in vals.iter_mut().zip(acts.iter_mut()).enumerate() {
                    let s = base + i;
                    let (best, best_a) = bellman_max(model, s, h, next_ref)?;
                    *v = best;
                    *act = best_a as u8;
                }
                Ok(())
            },
        )?;
        if retain.keeps(h + 1, horizon) {
            values.put(h + 1, next.clone());
        }
        std::mem::swap(&mut cur, &mut next);
    }
    values.put(0, next);
    Ok((values, Policy::from_raw(ns, horizon, actions)))
}

#[inline]
fn bellman_max<M: Mdp>(model: &M, s: usize, h: usize, next: &[f64]) -> Result<(f64, usize), ModelError> {
    let mut best = f64::NEG_INFINITY;
    let mut best_a = usize::MAX;
    for a in 0..model.num_actions() {
        if !model.is_admissible(s, a, h) {
            continue;
        }
        let q = model.reward(s, a, h) + expectation(model, s, a, h, next)?;
        if q > best {
            best = q;
            best_a = a;
        }
    }
    if best_a == usize::MAX {
        return Err(ModelError::NoAdmissibleAction { state: s, step: h });
    }
    if !best.is_finite() {
        return Err(ModelError::NonFinite { state: s, step: h });
    }
    Ok((best, best_a))
}

/// `sum_{s'} T(s'|s,a,h) * next[s']`, validating the row on the way.
#[inline]
pub(crate) fn expectation<M: Mdp>(model: &M, s: usize, a: usize, h: usize, next: &[f64]) -> Result<f64, ModelError> {
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

/// Value of a fixed policy.
pub fn evaluate_policy<M: Mdp>(model: &M, policy: &Policy, terminal: &Terminal) -> Result<ValueFunction, ModelError> {
    evaluate_policy_retaining(model, policy, terminal, &Retain::All)
}

pub fn evaluate_policy_retaining<M: Mdp>(
    model: &M,
    policy: &Policy,
    terminal: &Terminal,
    retain: &Retain,
) -> Result<ValueFunction, ModelError> {
    let ns = model.num_states();
    let horizon = model.horizon();
    terminal.check(ns)?;
    policy.check_shape(model)?;

    let mut values = ValueFunction::new(ns, horizon);
    let mut next: Vec<f64> = (0..ns).map(|s| terminal.value(s)).collect();
    let mut cur = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let acts = policy.step_slice(h);
        let next_ref = &next;
        cur.par_chunks_mut(CHUNK).enumerate().try_for_each(|(chunk, vals)| -> Result<(), ModelError> {
            let base = chunk * CHUNK;
            for (i, v) in vals.iter_mut().enumerate() {
                let s = base + i;
                let a = acts[s] as usize;
                if a >= model.num_actions() || !model.is_admissible(s, a, h) {
                    return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
                }
                *v = model.reward(s, a, h) + expectation(model, s, a, h, next_ref)?;
            }
            Ok(())
        })?;
        if retain.keeps(h + 1, horizon) {
            values.put(h + 1, next.clone());
        }
        std::mem::swap(&mut cur, &mut next);
    }
    values.put(0, next);
    Ok(values)
}

//! Exhaustive policy enumeration, used as an independent check on the
//! backward solver for tiny models.

use super::{Mdp, ModelError, Terminal};

/// Upper bound on the number of deterministic Markov policies enumerated.
pub const ORACLE_POLICY_LIMIT: f64 = 1e8;

/// Maximum expected cumulative reward from the initial distribution over all
/// deterministic Markov policies, found by enumerating them.
///
/// Decisions at `(s, h)` pairs that no policy can reach do not change the
/// value, so the enumeration (and the guard) only counts choices at pairs
/// reachable under some action sequence. Within one prefix of decisions only
/// states carrying probability are branched on.
pub fn oracle_enumerate<M: Mdp>(model: &M, terminal: &Terminal) -> Result<f64, ModelError> {
    terminal.check(model.num_states())?;
    let ns = model.num_states();
    let horizon = model.horizon();

    let mut reach = vec![false; ns];
    for &(s, _) in model.initial() {
        reach[s] = true;
    }
    let mut log_count = 0.0f64;
    for h in 0..horizon {
        let mut next = vec![false; ns];
        for s in (0..ns).filter(|&s| reach[s]) {
            let mut choices = 0usize;
            for a in 0..model.num_actions() {
                if model.is_admissible(s, a, h) {
                    choices += 1;
                    for (t, _) in model.successors(s, a, h) {
                        next[t] = true;
                    }
                }
            }
            if choices == 0 {
                return Err(ModelError::NoAdmissibleAction { state: s, step: h });
            }
            log_count += (choices as f64).ln();
        }
        reach = next;
    }
    let count = log_count.exp();
    if count > ORACLE_POLICY_LIMIT * (1.0 + 1e-9) {
        return Err(ModelError::OracleGuard { count, limit: ORACLE_POLICY_LIMIT });
    }

    let mut dist = vec![0.0; ns];
    for &(s, p) in model.initial() {
        dist[s] += p;
    }
    Ok(best_from(model, terminal, 0, &dist))
}

fn best_from<M: Mdp>(model: &M, terminal: &Terminal, h: usize, dist: &[f64]) -> f64 {
    let ns = model.num_states();
    if h == model.horizon() {
        return (0..ns).map(|s| dist[s] * terminal.value(s)).sum();
    }
    let live: Vec<usize> = (0..ns).filter(|&s| dist[s] > 0.0).collect();
    let options: Vec<Vec<usize>> = live
        .iter()
        .map(|&s| (0..model.num_actions()).filter(|&a| model.is_admissible(s, a, h)).collect())
        .collect();

    // odometer over one decision rule on the live states
    let mut pick = vec![0usize; live.len()];
    let mut best = f64::NEG_INFINITY;
    let mut next = vec![0.0; ns];
    loop {
        let mut reward = 0.0;
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &s) in live.iter().enumerate() {
            let a = options[i][pick[i]];
            reward += dist[s] * model.reward(s, a, h);
            for (t, p) in model.successors(s, a, h) {
                next[t] += dist[s] * p;
            }
        }
        let total = reward + best_from(model, terminal, h + 1, &next);
        if total > best {
            best = total;
        }
        let mut i = 0;
        loop {
            if i == pick.len() {
                return best;
            }
            pick[i] += 1;
            if pick[i] < options[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

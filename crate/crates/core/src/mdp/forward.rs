use super::{normalize_initial, Mdp, ModelError, Policy};

/// Dense probability vector over states, with its support tracked so that
/// concentrated distributions on large state spaces propagate cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    probs: Vec<f64>,
    support: Vec<usize>,
}

impl StateDistribution {
    pub fn from_sparse(num_states: usize, entries: &[(usize, f64)]) -> Self {
        let mut probs = vec![0.0; num_states];
        let mut support = Vec::with_capacity(entries.len());
        for &(s, p) in entries {
            if probs[s] == 0.0 {
                support.push(s);
            }
            probs[s] += p;
        }
        support.sort_unstable();
        Self { probs, support }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// States with nonzero mass, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().map(|&s| (s, self.probs[s]))
    }

    pub fn total(&self) -> f64 {
        self.iter().map(|(_, p)| p).sum()
    }

    pub fn into_dense(self) -> Vec<f64> {
        self.probs
    }
}

/// Pushes a start distribution at step `h0` forward under `policy`, calling
/// `visit(h, p_h)` for every `h` in `h0..=H`.
pub fn propagate_forward<M, F>(
    model: &M,
    policy: &Policy,
    start: &[(usize, f64)],
    h0: usize,
    mut visit: F,
) -> Result<(), ModelError>
where
    M: Mdp,
    F: FnMut(usize, &StateDistribution),
{
    let ns = model.num_states();
    let horizon = model.horizon();
    policy.check_shape(model)?;
    if h0 > horizon {
        return Err(ModelError::Dimension(format!("start step {h0} beyond horizon {horizon}")));
    }
    let start = normalize_initial(start.to_vec(), ns)?;
    let mut cur = StateDistribution::from_sparse(ns, &start);
    let mut next = StateDistribution { probs: vec![0.0; ns], support: Vec::new() };
    visit(h0, &cur);
    for h in h0..horizon {
        for &s in &cur.support {
            let p = cur.probs[s];
            let a = policy.action_at(s, h);
            if !model.is_admissible(s, a, h) {
                return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
            }
            for (t, q) in model.successors(s, a, h) {
                if next.probs[t] == 0.0 {
                    next.support.push(t);
                }
                next.probs[t] += p * q;
            }
        }
        next.support.sort_unstable();
        // an entry can be pushed twice if a product underflowed to exactly zero
        next.support.dedup();
        for &s in &cur.support {
            cur.probs[s] = 0.0;
        }
        cur.support.clear();
        std::mem::swap(&mut cur, &mut next);
        visit(h + 1, &cur);
    }
    Ok(())
}

/// Per-step state distributions `p_0..p_H` from the model's initial distribution.
pub fn forward_distribution<M: Mdp>(model: &M, policy: &Policy) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut out = Vec::with_capacity(model.horizon() + 1);
    propagate_forward(model, policy, model.initial(), 0, |_, d| out.push(d.probs().to_vec()))?;
    Ok(out)
}

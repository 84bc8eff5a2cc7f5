use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{normalize_initial, Mdp, ModelError, Policy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: u32,
    pub action: u16,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Step index of `steps[0]`.
    pub start_step: usize,
    pub steps: Vec<Step>,
    /// State reached at the horizon.
    pub final_state: usize,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// State at absolute step `h`, including the final one.
    pub fn state_at(&self, h: usize) -> usize {
        let i = h - self.start_step;
        if i == self.steps.len() {
            self.final_state
        } else {
            self.steps[i].state as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

/// Seeded rollouts from the model's initial distribution.
///
/// Trajectory `i` draws from a ChaCha8 stream selected by `i`, so results do
/// not depend on how the batch is split across threads.
pub fn simulate<M: Mdp>(model: &M, policy: &Policy, seed: u64, n: usize) -> Result<RolloutBatch, ModelError> {
    simulate_from(model, policy, seed, n, model.initial(), 0)
}

pub fn simulate_from<M: Mdp>(
    model: &M,
    policy: &Policy,
    seed: u64,
    n: usize,
    start: &[(usize, f64)],
    h0: usize,
) -> Result<RolloutBatch, ModelError> {
    if n == 0 {
        return Err(ModelError::Dimension("rollout count must be at least 1".into()));
    }
    policy.check_shape(model)?;
    if h0 > model.horizon() {
        return Err(ModelError::Dimension(format!("start step {h0} beyond horizon {}", model.horizon())));
    }
    let start = normalize_initial(start.to_vec(), model.num_states())?;
    let trajectories = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rollout(model, policy, &start, h0, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RolloutBatch { seed, trajectories })
}

fn rollout<M: Mdp>(
    model: &M,
    policy: &Policy,
    start: &[(usize, f64)],
    h0: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, ModelError> {
    let horizon = model.horizon();
    let mut s = draw(start.iter().copied(), rng.random::<f64>());
    let mut steps = Vec::with_capacity(horizon - h0);
    for h in h0..horizon {
        let a = policy.action_at(s, h);
        if !model.is_admissible(s, a, h) {
            return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
        }
        steps.push(Step { state: s as u32, action: a as u16, reward: model.reward(s, a, h) });
        s = draw(model.successors(s, a, h), rng.random::<f64>());
    }
    Ok(Trajectory { start_step: h0, steps, final_state: s })
}

/// Inverse-CDF draw over entries in stored order; rounding slack falls on the last entry.
fn draw(entries: impl Iterator<Item = (usize, f64)>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = usize::MAX;
    for (t, p) in entries {
        acc += p;
        last = t;
        if u < acc {
            return t;
        }
    }
    debug_assert!(last != usize::MAX, "empty successor list");
    last
}

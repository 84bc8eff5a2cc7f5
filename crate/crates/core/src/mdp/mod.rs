//! Generic finite-horizon Markov decision processes.
//!
//! A model has states `0..S`, actions `0..A` and decision steps `0..H`.
//! Values are defined on steps `0..=H`; step `H` carries a pure terminal
//! value and no decision. Kernels are sparse: each admissible
//! `(state, action, step)` triple maps to a list of `(successor, probability)`
//! pairs sorted by successor index.
//!
//! The solvers are written against the [`Mdp`] trait so that structured
//! models (such as the orbit-maintenance model, whose kernel factorises over
//! altitude) can be solved without materialising every row. [`MissionModel`]
//! is the explicit, fully tabulated implementation used for interchange and
//! small instances.

mod forward;
mod interchange;
mod oracle;
mod simulate;
mod solve;

use std::fmt;

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

pub use forward::{forward_distribution, propagate_forward, StateDistribution};
pub use interchange::{read_model, write_model};
pub use oracle::{oracle_enumerate, ORACLE_POLICY_LIMIT};
pub use simulate::{simulate, simulate_from, RolloutBatch, Step, Trajectory};
pub use solve::{evaluate_policy, evaluate_policy_retaining, solve_backward, solve_backward_retaining};

/// Tolerance for a kernel row or initial distribution to count as normalised.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Successor probabilities below this are dropped when a row is stored.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("state {state} or successor out of range at (a={action}, h={step})")]
    IndexOutOfRange { state: usize, action: usize, step: usize },
    #[error("negative probability {prob} in row (s={state}, a={action}, h={step})")]
    NegativeProbability { state: usize, action: usize, step: usize, prob: f64 },
    #[error("row (s={state}, a={action}, h={step}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, step: usize, sum: f64 },
    #[error("admissible row (s={state}, a={action}, h={step}) has no successors")]
    MissingRow { state: usize, action: usize, step: usize },
    #[error("no admissible action at (s={state}, h={step})")]
    NoAdmissibleAction { state: usize, step: usize },
    #[error("policy selects inadmissible action {action} at (s={state}, h={step})")]
    InadmissibleAction { state: usize, step: usize, action: usize },
    #[error("initial distribution sums to {0}, expected 1")]
    InitialDistribution(f64),
    #[error("non-finite value at (s={state}, h={step})")]
    NonFinite { state: usize, step: usize },
    #[error("exhaustive enumeration needs {count:.3e} policies, limit is {limit:.0e}")]
    OracleGuard { count: f64, limit: f64 },
    #[error("policy shape {got:?} does not match model shape {expected:?}")]
    PolicyShape { got: (usize, usize), expected: (usize, usize) },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// Decision epochs of a finite-horizon model.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon_steps: usize,
    step_seconds: f64,
    epoch: DateTime<Utc>,
}

impl TimeGrid {
    pub fn new(horizon_steps: usize, step_seconds: f64, epoch: DateTime<Utc>) -> Result<Self, ModelError> {
        if horizon_steps == 0 {
            return Err(ModelError::Dimension("horizon_steps must be at least 1".into()));
        }
        if !(step_seconds > 0.0 && step_seconds.is_finite()) {
            return Err(ModelError::Dimension(format!("step_seconds must be positive, got {step_seconds}")));
        }
        Ok(Self { horizon_steps, step_seconds, epoch })
    }

    /// A grid with unit steps starting at the Unix epoch; handy for abstract models.
    pub fn unit(horizon_steps: usize) -> Result<Self, ModelError> {
        Self::new(horizon_steps, 1.0, DateTime::<Utc>::UNIX_EPOCH)
    }

    pub fn horizon(&self) -> usize {
        self.horizon_steps
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn epoch(&self) -> DateTime<Utc> {
        self.epoch
    }

    /// Calendar date of step `h`, using whole-second offsets from the epoch.
    pub fn date_at(&self, h: usize) -> DateTime<Utc> {
        let offset = (h as f64 * self.step_seconds).round() as i64;
        self.epoch + Duration::seconds(offset)
    }

    /// Step whose date is nearest to `date`, if it lies within `0..=H`.
    pub fn step_nearest(&self, date: DateTime<Utc>) -> Option<usize> {
        let dt = (date - self.epoch).num_seconds() as f64;
        let h = (dt / self.step_seconds).round();
        if h < 0.0 || h > self.horizon_steps as f64 {
            None
        } else {
            Some(h as usize)
        }
    }
}

/// Read access to a finite-horizon MDP.
///
/// Implementations must return successors sorted by state index. Rows of
/// inadmissible triples are never queried.
pub trait Mdp: Sync {
    type Successors<'a>: Iterator<Item = (usize, f64)>
    where
        Self: 'a;

    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn time(&self) -> &TimeGrid;
    /// Sparse initial distribution, sorted by state.
    fn initial(&self) -> &[(usize, f64)];
    fn is_admissible(&self, s: usize, a: usize, h: usize) -> bool;
    fn reward(&self, s: usize, a: usize, h: usize) -> f64;
    fn successors(&self, s: usize, a: usize, h: usize) -> Self::Successors<'_>;

    fn horizon(&self) -> usize {
        self.time().horizon()
    }
}

/// Value assigned to every state at step `H`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Terminal {
    #[default]
    Zero,
    Values(Vec<f64>),
}

impl Terminal {
    pub fn value(&self, s: usize) -> f64 {
        match self {
            Terminal::Zero => 0.0,
            Terminal::Values(v) => v[s],
        }
    }

    pub(crate) fn check(&self, num_states: usize) -> Result<(), ModelError> {
        if let Terminal::Values(v) = self {
            if v.len() != num_states {
                return Err(ModelError::Dimension(format!(
                    "terminal table has {} entries for {} states",
                    v.len(),
                    num_states
                )));
            }
            if let Some(s) = v.iter().position(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { state: s, step: usize::MAX });
            }
        }
        Ok(())
    }
}

/// Deterministic Markov policy, one action per `(state, step)` for steps `0..H`.
///
/// Actions are stored as `u8`; models are limited to 256 actions.
#[derive(Clone, PartialEq, Eq)]
pub struct Policy {
    num_states: usize,
    horizon: usize,
    actions: Vec<u8>,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy")
            .field("num_states", &self.num_states)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl Policy {
    pub fn from_fn(num_states: usize, horizon: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut actions = Vec::with_capacity(num_states * horizon);
        for h in 0..horizon {
            for s in 0..num_states {
                let a = f(s, h);
                assert!(a <= u8::MAX as usize, "action index {a} exceeds u8 range");
                actions.push(a as u8);
            }
        }
        Self { num_states, horizon, actions }
    }

    /// Always pick action `a`.
    pub fn constant(num_states: usize, horizon: usize, a: usize) -> Self {
        Self::from_fn(num_states, horizon, |_, _| a)
    }

    pub(crate) fn from_raw(num_states: usize, horizon: usize, actions: Vec<u8>) -> Self {
        debug_assert_eq!(actions.len(), num_states * horizon);
        Self { num_states, horizon, actions }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn action_at(&self, s: usize, h: usize) -> usize {
        self.actions[h * self.num_states + s] as usize
    }

    pub fn step_slice(&self, h: usize) -> &[u8] {
        &self.actions[h * self.num_states..(h + 1) * self.num_states]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.actions
    }

    pub fn from_bytes(num_states: usize, horizon: usize, actions: Vec<u8>) -> Result<Self, ModelError> {
        if actions.len() != num_states * horizon {
            return Err(ModelError::Dimension(format!(
                "policy table has {} entries, expected {}",
                actions.len(),
                num_states * horizon
            )));
        }
        Ok(Self { num_states, horizon, actions })
    }

    /// Checks shape and that every chosen action is admissible.
    pub fn check_admissible<M: Mdp>(&self, model: &M) -> Result<(), ModelError> {
        self.check_shape(model)?;
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                let a = self.action_at(s, h);
                if a >= model.num_actions() || !model.is_admissible(s, a, h) {
                    return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_shape<M: Mdp>(&self, model: &M) -> Result<(), ModelError> {
        let expected = (model.num_states(), model.horizon());
        if (self.num_states, self.horizon) != expected {
            return Err(ModelError::PolicyShape { got: (self.num_states, self.horizon), expected });
        }
        Ok(())
    }
}

/// Which value slices a backward pass keeps in memory.
///
/// Slices `0` and `H` are always kept. Large models (millions of states over
/// a hundred steps) cannot afford the full table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retain {
    All,
    Ends,
    Steps(Vec<usize>),
}

impl Retain {
    pub(crate) fn keeps(&self, h: usize, horizon: usize) -> bool {
        if h == 0 || h == horizon {
            return true;
        }
        match self {
            Retain::All => true,
            Retain::Ends => false,
            Retain::Steps(steps) => steps.contains(&h),
        }
    }
}

/// Value table `V(s, h)` for `h in 0..=H`, possibly with some slices dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    num_states: usize,
    horizon: usize,
    slices: Vec<Option<Vec<f64>>>,
}

impl ValueFunction {
    pub(crate) fn new(num_states: usize, horizon: usize) -> Self {
        Self { num_states, horizon, slices: vec![None; horizon + 1] }
    }

    pub(crate) fn put(&mut self, h: usize, values: Vec<f64>) {
        self.slices[h] = Some(values);
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slice(&self, h: usize) -> Option<&[f64]> {
        self.slices.get(h).and_then(|s| s.as_deref())
    }

    pub fn is_complete(&self) -> bool {
        self.slices.iter().all(Option::is_some)
    }

    /// `V(s, h)`. Panics if slice `h` was not retained.
    pub fn at(&self, s: usize, h: usize) -> f64 {
        self.slice(h).unwrap_or_else(|| panic!("value slice {h} not retained"))[s]
    }

    /// Expectation of `V(., h)` under a sparse distribution.
    pub fn expected_at(&self, dist: &[(usize, f64)], h: usize) -> f64 {
        let v = self.slice(h).unwrap_or_else(|| panic!("value slice {h} not retained"));
        dist.iter().map(|&(s, p)| p * v[s]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RowGroup {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

/// Fully tabulated finite-horizon MDP.
///
/// Rows are stored in one CSR group per `(h, a)`, successor lists sorted by
/// state index, with probabilities below [`PRUNE_THRESHOLD`] dropped and the
/// row renormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionModel {
    num_states: usize,
    num_actions: usize,
    time: TimeGrid,
    groups: Vec<RowGroup>,
    reward: Vec<f64>,
    mask: Vec<bool>,
    initial: Vec<(usize, f64)>,
}

impl MissionModel {
    pub fn builder(num_states: usize, num_actions: usize, time: TimeGrid) -> MissionModelBuilder {
        MissionModelBuilder::new(num_states, num_actions, time)
    }

    #[inline]
    fn cell(&self, s: usize, a: usize, h: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    fn row(&self, s: usize, a: usize, h: usize) -> (&[u32], &[f64]) {
        let g = &self.groups[h * self.num_actions + a];
        let (lo, hi) = (g.offsets[s], g.offsets[s + 1]);
        (&g.targets[lo..hi], &g.probs[lo..hi])
    }

    /// Total stored successor entries.
    pub fn nonzeros(&self) -> usize {
        self.groups.iter().map(|g| g.targets.len()).sum()
    }

    pub fn row_entries(&self, s: usize, a: usize, h: usize) -> Vec<(usize, f64)> {
        let (t, p) = self.row(s, a, h);
        t.iter().map(|&x| x as usize).zip(p.iter().copied()).collect()
    }

    /// Copies any model into explicit form.
    pub fn from_mdp<M: Mdp>(model: &M) -> Result<Self, ModelError> {
        let mut b = MissionModel::builder(model.num_states(), model.num_actions(), model.time().clone());
        for h in 0..model.horizon() {
            for s in 0..model.num_states() {
                for a in 0..model.num_actions() {
                    let adm = model.is_admissible(s, a, h);
                    b.set_admissible(s, a, h, adm);
                    if adm {
                        b.set_reward(s, a, h, model.reward(s, a, h));
                        b.set_row(s, a, h, model.successors(s, a, h).collect());
                    }
                }
            }
        }
        b.set_initial(model.initial().to_vec());
        b.build()
    }
}

pub struct MissionModelIter<'a> {
    targets: std::slice::Iter<'a, u32>,
    probs: std::slice::Iter<'a, f64>,
}

impl Iterator for MissionModelIter<'_> {
    type Item = (usize, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        Some((*self.targets.next()? as usize, *self.probs.next()?))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.targets.size_hint()
    }
}

impl Mdp for MissionModel {
    type Successors<'a> = MissionModelIter<'a>;

    fn num_states(&self) -> usize {
        self.num_states
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
    fn is_admissible(&self, s: usize, a: usize, h: usize) -> bool {
        self.mask[self.cell(s, a, h)]
    }

    #[inline]
    fn reward(&self, s: usize, a: usize, h: usize) -> f64 {
        self.reward[self.cell(s, a, h)]
    }

    fn successors(&self, s: usize, a: usize, h: usize) -> Self::Successors<'_> {
        let (t, p) = self.row(s, a, h);
        MissionModelIter { targets: t.iter(), probs: p.iter() }
    }
}

/// Incremental constructor for [`MissionModel`]; validation happens in [`build`](Self::build).
///
/// Every action starts admissible with reward 0 and an empty row.
#[derive(Debug, Clone)]
pub struct MissionModelBuilder {
    num_states: usize,
    num_actions: usize,
    time: TimeGrid,
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    mask: Vec<bool>,
    initial: Vec<(usize, f64)>,
}

impl MissionModelBuilder {
    pub fn new(num_states: usize, num_actions: usize, time: TimeGrid) -> Self {
        let cells = num_states * num_actions * time.horizon();
        Self {
            num_states,
            num_actions,
            time,
            rows: vec![Vec::new(); cells],
            reward: vec![0.0; cells],
            mask: vec![true; cells],
            initial: Vec::new(),
        }
    }

    fn cell(&self, s: usize, a: usize, h: usize) -> usize {
        assert!(s < self.num_states && a < self.num_actions && h < self.time.horizon());
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn set_row(&mut self, s: usize, a: usize, h: usize, row: Vec<(usize, f64)>) -> &mut Self {
        let c = self.cell(s, a, h);
        self.rows[c] = row;
        self
    }

    /// Same row at every step.
    pub fn set_row_all_steps(&mut self, s: usize, a: usize, row: Vec<(usize, f64)>) -> &mut Self {
        for h in 0..self.time.horizon() {
            self.set_row(s, a, h, row.clone());
        }
        self
    }

    pub fn set_reward(&mut self, s: usize, a: usize, h: usize, r: f64) -> &mut Self {
        let c = self.cell(s, a, h);
        self.reward[c] = r;
        self
    }

    pub fn set_reward_all_steps(&mut self, s: usize, a: usize, r: f64) -> &mut Self {
        for h in 0..self.time.horizon() {
            self.set_reward(s, a, h, r);
        }
        self
    }

    pub fn set_admissible(&mut self, s: usize, a: usize, h: usize, admissible: bool) -> &mut Self {
        let c = self.cell(s, a, h);
        self.mask[c] = admissible;
        self
    }

    pub fn set_initial(&mut self, initial: Vec<(usize, f64)>) -> &mut Self {
        self.initial = initial;
        self
    }

    pub fn build(self) -> Result<MissionModel, ModelError> {
        let (ns, na, horizon) = (self.num_states, self.num_actions, self.time.horizon());
        if ns == 0 || na == 0 {
            return Err(ModelError::Dimension("need at least one state and one action".into()));
        }
        if na > u8::MAX as usize + 1 {
            return Err(ModelError::Dimension(format!("{na} actions exceed the 256-action limit")));
        }
        if ns > u32::MAX as usize {
            return Err(ModelError::Dimension(format!("{ns} states exceed the u32 index range")));
        }
        let initial = normalize_initial(self.initial, ns)?;

        let mut groups = Vec::with_capacity(horizon * na);
        for h in 0..horizon {
            for s in 0..ns {
                if !(0..na).any(|a| self.mask[(h * ns + s) * na + a]) {
                    return Err(ModelError::NoAdmissibleAction { state: s, step: h });
                }
            }
            for a in 0..na {
                let mut g = RowGroup { offsets: Vec::with_capacity(ns + 1), targets: Vec::new(), probs: Vec::new() };
                g.offsets.push(0);
                for s in 0..ns {
                    let c = (h * ns + s) * na + a;
                    if self.mask[c] {
                        if !self.reward[c].is_finite() {
                            return Err(ModelError::NonFinite { state: s, step: h });
                        }
                        let row = normalize_row(&self.rows[c], ns, s, a, h)?;
                        for (t, p) in row {
                            g.targets.push(t as u32);
                            g.probs.push(p);
                        }
                    }
                    g.offsets.push(g.targets.len());
                }
                groups.push(g);
            }
        }
        let mut reward = self.reward;
        for (r, &m) in reward.iter_mut().zip(&self.mask) {
            if !m {
                *r = 0.0;
            }
        }
        Ok(MissionModel { num_states: ns, num_actions: na, time: self.time, groups, reward, mask: self.mask, initial })
    }
}

/// Sorts, merges duplicates, validates the sum, then prunes tiny entries and renormalises.
fn normalize_row(
    raw: &[(usize, f64)],
    ns: usize,
    s: usize,
    a: usize,
    h: usize,
) -> Result<Vec<(usize, f64)>, ModelError> {
    if raw.is_empty() {
        return Err(ModelError::MissingRow { state: s, action: a, step: h });
    }
    let mut row = raw.to_vec();
    for &(t, p) in &row {
        if t >= ns {
            return Err(ModelError::IndexOutOfRange { state: t, action: a, step: h });
        }
        if p < 0.0 || !p.is_finite() {
            return Err(ModelError::NegativeProbability { state: s, action: a, step: h, prob: p });
        }
    }
    row.sort_by_key(|&(t, _)| t);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (t, p) in row {
        match merged.last_mut() {
            Some(last) if last.0 == t => last.1 += p,
            _ => merged.push((t, p)),
        }
    }
    let sum: f64 = merged.iter().map(|e| e.1).sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(ModelError::RowSum { state: s, action: a, step: h, sum });
    }
    let before = merged.len();
    merged.retain(|e| e.1 >= PRUNE_THRESHOLD);
    if merged.len() != before {
        let kept: f64 = merged.iter().map(|e| e.1).sum();
        for e in &mut merged {
            e.1 /= kept;
        }
    }
    Ok(merged)
}

pub(crate) fn normalize_initial(raw: Vec<(usize, f64)>, ns: usize) -> Result<Vec<(usize, f64)>, ModelError> {
    let mut init = raw;
    init.sort_by_key(|&(s, _)| s);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(init.len());
    for (s, p) in init {
        if s >= ns {
            return Err(ModelError::IndexOutOfRange { state: s, action: 0, step: 0 });
        }
        if p < 0.0 || !p.is_finite() {
            return Err(ModelError::InitialDistribution(p));
        }
        match merged.last_mut() {
            Some(last) if last.0 == s => last.1 += p,
            _ => merged.push((s, p)),
        }
    }
    merged.retain(|e| e.1 > 0.0);
    let sum: f64 = merged.iter().map(|e| e.1).sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(ModelError::InitialDistribution(sum));
    }
    Ok(merged)
}

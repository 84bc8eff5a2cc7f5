use super::{check_constraint, violation_trace, CompiledSpec, FeasibilityReport, SafetyMode, TraceStep, VerifyError};
use crate::domain::{DomainState, OrbitModel};
use crate::mdp::{Mdp, ModelError, Policy, Retain};

const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
const CDF_SLACK: f64 = 1e-12;

/// Distribution over altitude bands plus a leading deorbited pseudo-band,
/// labelled with the grid floor.
#[derive(Debug, Clone, PartialEq)]
pub struct AltitudeDistribution {
    pub labels_km: Vec<f64>,
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl AltitudeDistribution {
    fn from_pmf(labels_km: Vec<f64>, pmf: Vec<f64>) -> Self {
        let cdf = pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        AltitudeDistribution { labels_km, pmf, cdf }
    }

    pub fn deorbit_probability(&self) -> f64 {
        self.pmf[0]
    }

    /// Mass that has deorbited or sits in a band centred below `km`.
    pub fn prob_below(&self, km: f64) -> f64 {
        self.pmf[0] + self.labels_km[1..].iter().zip(&self.pmf[1..]).filter(|(l, _)| **l < km).map(|(_, p)| p).sum::<f64>()
    }

    /// Smallest label whose cumulative mass reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let i = self.cdf.iter().position(|&c| c >= q - CDF_SLACK).unwrap_or(self.cdf.len() - 1);
        self.labels_km[i]
    }

    pub fn mean_km(&self) -> f64 {
        self.labels_km.iter().zip(&self.pmf).map(|(l, p)| l * p).sum()
    }
}

/// Per-step percentiles of altitude band centres and usable fuel.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRow {
    pub step: usize,
    /// p05, p25, p50, p75, p95; deorbited mass sits at the grid floor.
    pub altitude_km: [f64; 5],
    /// Same percentiles of usable fuel; deorbited mass counts as empty.
    pub fuel_kg: [f64; 5],
    pub deorbited: f64,
    /// Probability that the specification has been violated by this step.
    pub violated: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardReport {
    pub start_step: usize,
    pub envelopes: Vec<EnvelopeRow>,
    pub final_altitude: AltitudeDistribution,
}

impl ForwardReport {
    pub fn violation_curve(&self) -> Vec<f64> {
        self.envelopes.iter().map(|e| e.violated).collect()
    }

    pub fn minimum_altitude_km(&self) -> f64 {
        self.envelopes.iter().map(|e| e.altitude_km[0]).fold(f64::INFINITY, f64::min)
    }
}

struct Sparse {
    probs: Vec<f64>,
    support: Vec<usize>,
}

impl Sparse {
    fn new(ns: usize) -> Self {
        Sparse { probs: vec![0.0; ns], support: Vec::new() }
    }

    #[inline]
    fn add(&mut self, s: usize, p: f64) {
        if self.probs[s] == 0.0 {
            self.support.push(s);
        }
        self.probs[s] += p;
    }

    fn finish(&mut self) {
        self.support.sort_unstable();
        self.support.dedup();
    }

    fn clear(&mut self) {
        for &s in &self.support {
            self.probs[s] = 0.0;
        }
        self.support.clear();
    }
}

/// Exact forward pass from `start` at step `h0`: altitude and fuel envelopes,
/// the cumulative violation probability per step and the final altitude
/// distribution.
pub fn forward_report(
    model: &OrbitModel,
    policy: &Policy,
    spec: &CompiledSpec,
    start: &[(usize, f64)],
    h0: usize,
) -> Result<ForwardReport, VerifyError> {
    let ns = model.num_states();
    let horizon = model.horizon();
    if policy.num_states() != ns || policy.horizon() != horizon {
        return Err(ModelError::PolicyShape { got: (policy.num_states(), policy.horizon()), expected: (ns, horizon) }.into());
    }
    if h0 > horizon {
        return Err(ModelError::Dimension(format!("start step {h0} beyond horizon {horizon}")).into());
    }
    let unsafe_set = &spec.unsafe_set;

    let mut cur = Sparse::new(ns);
    let mut next = Sparse::new(ns);
    let mut live = Sparse::new(ns);
    let mut live_next = Sparse::new(ns);
    let mut violated = 0.0;
    for &(s, p) in start {
        if s >= ns || !(p >= 0.0) {
            return Err(ModelError::IndexOutOfRange { state: s, action: 0, step: h0 }.into());
        }
        cur.add(s, p);
        if unsafe_set.contains(s) {
            violated += p;
        } else {
            live.add(s, p);
        }
    }
    cur.finish();
    live.finish();

    let mut envelopes = Vec::with_capacity(horizon - h0 + 1);
    envelopes.push(envelope(model, &cur, h0, violated));
    for h in h0..horizon {
        for &s in &cur.support {
            let p = cur.probs[s];
            let a = checked_action(model, policy, s, h)?;
            for (t, q) in model.successors(s, a, h) {
                next.add(t, p * q);
            }
        }
        for &s in &live.support {
            let p = live.probs[s];
            let a = policy.action_at(s, h);
            if spec.violates(s, a) {
                violated += p;
                continue;
            }
            for (t, q) in model.successors(s, a, h) {
                if unsafe_set.contains(t) {
                    violated += p * q;
                } else {
                    live_next.add(t, p * q);
                }
            }
        }
        next.finish();
        live_next.finish();
        cur.clear();
        live.clear();
        std::mem::swap(&mut cur, &mut next);
        std::mem::swap(&mut live, &mut live_next);
        envelopes.push(envelope(model, &cur, h + 1, violated.min(1.0)));
    }
    let (labels, pmf) = altitude_marginal(model, &cur);
    Ok(ForwardReport { start_step: h0, envelopes, final_altitude: AltitudeDistribution::from_pmf(labels, pmf) })
}

fn checked_action(model: &OrbitModel, policy: &Policy, s: usize, h: usize) -> Result<usize, ModelError> {
    let a = policy.action_at(s, h);
    if !model.is_admissible(s, a, h) {
        return Err(ModelError::InadmissibleAction { state: s, step: h, action: a });
    }
    Ok(a)
}

fn altitude_marginal(model: &OrbitModel, d: &Sparse) -> (Vec<f64>, Vec<f64>) {
    let g = model.altitude_grid();
    let mut labels = Vec::with_capacity(g.bins + 1);
    labels.push(g.lo);
    labels.extend((0..g.bins).map(|j| g.center(j)));
    let mut pmf = vec![0.0; g.bins + 1];
    for &s in &d.support {
        match model.decode(s) {
            DomainState::Deorbited => pmf[0] += d.probs[s],
            DomainState::Orbit { alt, .. } => pmf[alt + 1] += d.probs[s],
        }
    }
    (labels, pmf)
}

fn envelope(model: &OrbitModel, d: &Sparse, step: usize, violated: f64) -> EnvelopeRow {
    let (labels, alt_pmf) = altitude_marginal(model, d);
    let f = model.fuel_grid();
    let mut fuel_pmf = vec![0.0; f.bins];
    for &s in &d.support {
        match model.decode(s) {
            DomainState::Deorbited => fuel_pmf[0] += d.probs[s],
            DomainState::Orbit { fuel, .. } => fuel_pmf[fuel] += d.probs[s],
        }
    }
    let fuel_labels: Vec<f64> = (0..f.bins).map(|j| f.edge(j)).collect();
    let alt = AltitudeDistribution::from_pmf(labels, alt_pmf);
    let fuel = AltitudeDistribution::from_pmf(fuel_labels, fuel_pmf);
    EnvelopeRow {
        step,
        altitude_km: QUANTILES.map(|q| alt.quantile(q)),
        fuel_kg: QUANTILES.map(|q| fuel.quantile(q)),
        deorbited: alt.deorbit_probability(),
        violated,
    }
}

/// Full verification of `policy` from the model's initial distribution.
#[derive(Debug, Clone)]
pub struct VerificationResult {
    pub feasibility: FeasibilityReport,
    pub forward: ForwardReport,
    /// Greedy violating prefix, only when infeasible and every value slice was kept.
    pub trace: Option<Vec<TraceStep>>,
}

pub fn verify_policy(
    model: &OrbitModel,
    policy: &Policy,
    spec: &CompiledSpec,
    mode: SafetyMode<'_>,
    retain: &Retain,
) -> Result<VerificationResult, VerifyError> {
    let table = spec.safety_value(model, mode, retain)?;
    let feasibility = check_constraint(&table, model.initial(), spec.spec.delta);
    let forward = forward_report(model, policy, spec, model.initial(), 0)?;
    let trace = if feasibility.feasible {
        None
    } else {
        let start = model.initial().iter().min_by(|a, b| table.value_at(a.0, 0).total_cmp(&table.value_at(b.0, 0))).map(|e| e.0);
        start.and_then(|s| violation_trace(model, policy, &table, &spec.unsafe_set, s))
    };
    Ok(VerificationResult { feasibility, forward, trace })
}

#[derive(Debug, Clone)]
pub struct ReplanReport {
    pub state: DomainState,
    pub step: usize,
    /// Safety probability under the policy from `(state, step)`.
    pub safety: f64,
    pub forward: ForwardReport,
}

/// Re-runs the forward analysis and the safety recursion from an observed
/// state at step `h0` under the existing policy.
pub fn replan_from_state(
    model: &OrbitModel,
    policy: &Policy,
    spec: &CompiledSpec,
    current: DomainState,
    h0: usize,
) -> Result<ReplanReport, VerifyError> {
    if h0 >= model.horizon() {
        return Err(VerifyError::Spec(format!("replanning step {h0} not before the horizon {}", model.horizon())));
    }
    let layout = model.layout();
    if let DomainState::Orbit { alt, fuel, cooldown } = current {
        if alt >= layout.n_alt || fuel >= layout.n_fuel || cooldown > layout.cooldown_max {
            return Err(VerifyError::Spec(format!("state {current:?} outside the model's grids")));
        }
    }
    let s = layout.encode(current);
    let table = spec.safety_value(model, SafetyMode::UnderPolicy(policy), &Retain::Steps(vec![h0]))?;
    let forward = forward_report(model, policy, spec, &[(s, 1.0)], h0)?;
    Ok(ReplanReport { state: current, step: h0, safety: table.value_at(s, h0), forward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::astro::Vacuum;
    use crate::domain::testing::{atmosphere, stochastic_scenario, toy_domain};
    use crate::domain::{assemble_model, ThrustModel};
    use crate::mdp::{simulate, solve_backward, Terminal};
    use crate::verify::{compile_spec, SafetySpec};

    fn stochastic(n_alt: usize, horizon: usize) -> OrbitModel {
        let mut d = toy_domain(atmosphere(), n_alt, 12, 2, horizon);
        d.scenario = stochastic_scenario(horizon);
        d.thrust = ThrustModel::three_point();
        assemble_model(&d).unwrap()
    }

    fn floor_spec(m: &OrbitModel, bands: usize) -> CompiledSpec {
        let g = m.altitude_grid();
        compile_spec(&SafetySpec { altitude_floor_km: g.edge(bands), spacing_steps: 2, delta: 0.05 }, m).unwrap()
    }

    #[test]
    fn vacuum_no_burn_is_a_point_mass() {
        let m = assemble_model(&toy_domain(Vacuum, 40, 10, 3, 5)).unwrap();
        let pi = Policy::constant(m.num_states(), 5, 0);
        let c = compile_spec(&SafetySpec { altitude_floor_km: m.altitude_grid().lo, ..Default::default() }, &m).unwrap();
        let r = forward_report(&m, &pi, &c, m.initial(), 0).unwrap();
        let DomainState::Orbit { alt, .. } = m.decode(m.initial()[0].0) else { panic!() };
        assert!((r.final_altitude.pmf[alt + 1] - 1.0).abs() < 1e-12);
        assert!((r.final_altitude.cdf.last().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.violation_curve(), vec![0.0; 6]);
        let center = m.altitude_grid().center(alt);
        for e in &r.envelopes {
            assert_eq!(e.altitude_km, [center; 5]);
        }
    }

    #[test]
    fn cdf_is_monotone_and_normalised() {
        let m = stochastic(60, 8);
        let (_, pi) = solve_backward(&m, &Terminal::Zero).unwrap();
        let c = floor_spec(&m, 10);
        let r = forward_report(&m, &pi, &c, m.initial(), 0).unwrap();
        let cdf = &r.final_altitude.cdf;
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!((cdf.last().unwrap() - 1.0).abs() < 1e-9);
        assert!((r.final_altitude.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let curve = r.violation_curve();
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn violation_curve_complements_safety_value() {
        let m = stochastic(60, 8);
        let (_, pi) = solve_backward(&m, &Terminal::Zero).unwrap();
        for bands in [0, 10, 25] {
            let c = floor_spec(&m, bands);
            let t = c.safety_value(&m, SafetyMode::UnderPolicy(&pi), &Retain::Ends).unwrap();
            let r = forward_report(&m, &pi, &c, m.initial(), 0).unwrap();
            let v = t.value_at(m.initial()[0].0, 0);
            assert!((1.0 - r.violation_curve()[8] - v).abs() < 1e-12, "bands {bands}");
        }
    }

    #[test]
    fn spacing_flags_match_rollouts() {
        let mut d = toy_domain(Vacuum, 40, 30, 2, 8);
        d.enforce_spacing = false;
        let m = assemble_model(&d).unwrap();
        let (_, pi) = solve_backward(&m, &Terminal::Zero).unwrap();
        let c = compile_spec(&SafetySpec { altitude_floor_km: m.altitude_grid().lo, spacing_steps: 2, delta: 0.0 }, &m).unwrap();
        let t = c.safety_value(&m, SafetyMode::UnderPolicy(&pi), &Retain::Ends).unwrap();
        let batch = simulate(&m, &pi, 1, 1).unwrap();
        let raises: Vec<usize> = batch.trajectories[0].steps.iter().enumerate().filter(|(_, s)| s.action != 0).map(|(h, _)| h).collect();
        let tight = raises.windows(2).any(|w| w[1] - w[0] < 2);
        assert_eq!(t.value_at(m.initial()[0].0, 0), if tight { 0.0 } else { 1.0 });
        let best = c.safety_value(&m, SafetyMode::MaxOverActions, &Retain::Ends).unwrap();
        assert_eq!(best.value_at(m.initial()[0].0, 0), 1.0);
    }

    #[test]
    fn monte_carlo_matches_exact_outputs() {
        let m = stochastic(60, 8);
        let (_, pi) = solve_backward(&m, &Terminal::Zero).unwrap();
        let c = floor_spec(&m, 20);
        let t = c.safety_value(&m, SafetyMode::UnderPolicy(&pi), &Retain::Ends).unwrap();
        let r = forward_report(&m, &pi, &c, m.initial(), 0).unwrap();
        let v = t.value_at(m.initial()[0].0, 0);
        let n = 200_000;
        let batch = simulate(&m, &pi, 17, n).unwrap();
        let g = m.altitude_grid();
        let mut safe = 0usize;
        let mut alts = Vec::with_capacity(n);
        for tr in &batch.trajectories {
            if tr.steps.iter().all(|s| !c.unsafe_set.contains(s.state as usize)) && !c.unsafe_set.contains(tr.final_state) {
                safe += 1;
            }
            alts.push(match m.decode(tr.final_state) {
                DomainState::Deorbited => g.lo,
                DomainState::Orbit { alt, .. } => g.center(alt),
            });
        }
        let freq = safe as f64 / n as f64;
        let se = (v * (1.0 - v) / n as f64).sqrt().max(1e-12);
        assert!((freq - v).abs() <= 3.0 * se, "safe freq {freq} vs {v}");
        let mean = alts.iter().sum::<f64>() / n as f64;
        let var = alts.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = r.final_altitude.mean_km();
        assert!((mean - exact).abs() <= 3.0 * (var / n as f64).sqrt().max(1e-12), "mean {mean} vs {exact}");
    }

    #[test]
    fn replan_from_start_reproduces_verification() {
        let m = stochastic(60, 8);
        let (_, pi) = solve_backward(&m, &Terminal::Zero).unwrap();
        let c = floor_spec(&m, 15);
        let s0 = m.initial()[0].0;
        let full = verify_policy(&m, &pi, &c, SafetyMode::UnderPolicy(&pi), &Retain::All).unwrap();
        let re = replan_from_state(&m, &pi, &c, m.decode(s0), 0).unwrap();
        assert_eq!(re.forward, full.forward);
        assert_eq!(re.safety, full.feasibility.probability);

        let later = DomainState::Orbit { alt: 30, fuel: 4, cooldown: 2 };
        let re = replan_from_state(&m, &pi, &c, later, 3).unwrap();
        let table = c.safety_value(&m, SafetyMode::UnderPolicy(&pi), &Retain::All).unwrap();
        assert_eq!(re.safety, table.value_at(m.layout().encode(later), 3));
        assert_eq!(re.forward.envelopes.len(), 6);
        assert_eq!(re.forward.envelopes[0].altitude_km, [m.altitude_grid().center(30); 5]);
        assert!(replan_from_state(&m, &pi, &c, later, 8).is_err());
    }

    #[test]
    fn infeasible_results_carry_a_trace() {
        let m = stochastic(60, 8);
        let pi = Policy::constant(m.num_states(), 8, 0);
        let c = compile_spec(&SafetySpec { altitude_floor_km: m.altitude_grid().edge(40), spacing_steps: 2, delta: 0.01 }, &m).unwrap();
        let r = verify_policy(&m, &pi, &c, SafetyMode::UnderPolicy(&pi), &Retain::All).unwrap();
        if !r.feasibility.feasible {
            let trace = r.trace.expect("full table retained");
            let last = trace.last().unwrap();
            assert!(c.unsafe_set.contains(last.state) || last.step == 8);
            assert!(trace.windows(2).all(|w| w[1].step == w[0].step + 1));
        }
        let ends = verify_policy(&m, &pi, &c, SafetyMode::UnderPolicy(&pi), &Retain::Ends).unwrap();
        assert!(ends.trace.is_none());
    }

    #[test]
    fn quantiles_and_tail_mass() {
        let d = AltitudeDistribution::from_pmf(vec![300.0, 301.0, 302.0, 303.0], vec![0.01, 0.04, 0.5, 0.45]);
        assert_eq!(d.quantile(0.05), 301.0);
        assert_eq!(d.quantile(0.01), 300.0);
        assert_eq!(d.quantile(0.5), 302.0);
        assert!((d.prob_below(302.0) - 0.05).abs() < 1e-15);
        assert!((d.prob_below(0.0) - 0.01).abs() < 1e-15);
    }
}

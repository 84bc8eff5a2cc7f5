//! Subcommand pipelines. Every command rebuilds the model from the
//! configuration, reads upstream artifacts from the output directory, writes
//! its result files and a manifest, and returns a short summary.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde_json::json;
use sha2::{Digest, Sha256};

use mission_core::astro::{resonance_altitudes, DensityModel};
use mission_core::domain::{assemble_model, Domain, DomainState, ModelStats, OrbitModel};
use mission_core::mdp::{simulate_from, solve_backward_retaining, write_model, Mdp, MissionModel, Policy, Retain, RolloutBatch, Terminal};
use mission_core::verify::{
    compile_spec, replan_from_state, verify_policy, AltitudeDistribution, CompiledSpec, EnvelopeRow, ForwardReport, SafetyMode,
    VerificationResult,
};

use crate::config::{LoadedConfig, SafetyModeName, ScenarioMode};
use crate::output::{
    file_sha256, num, peak_memory_kib, read_policy, write_json, write_policy, write_values, OutputFile, PhaseTiming, RunManifest, Table,
};
use crate::CliError;

pub const POLICY_FILE: &str = "policy.bin";

/// Command-line overrides of the configuration.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub mode: Option<ScenarioMode>,
    pub seed: Option<u64>,
    pub rollouts: Option<usize>,
    pub safety_mode: Option<SafetyModeName>,
    /// `alt_km,fuel_kg,cooldown,date`
    pub from_state: Option<String>,
}

/// One subcommand invocation.
pub struct Run {
    pub config: LoadedConfig,
    pub out: PathBuf,
    pub mode: ScenarioMode,
    pub seed: u64,
    pub rollouts: usize,
    pub safety_mode: SafetyModeName,
    pub from_state: Option<String>,
    command: String,
    timings: Vec<PhaseTiming>,
    outputs: Vec<PathBuf>,
    statistics: serde_json::Map<String, serde_json::Value>,
}

impl Run {
    pub fn new(command: &str, config_path: &Path, out: &Path, options: Options) -> Result<Self, CliError> {
        let config = LoadedConfig::load(config_path)?;
        fs::create_dir_all(out).map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?;
        let c = &config.config;
        Ok(Run {
            mode: options.mode.unwrap_or(c.scenario.mode),
            seed: options.seed.unwrap_or(c.run.seed),
            rollouts: options.rollouts.unwrap_or(c.run.rollouts),
            safety_mode: options.safety_mode.unwrap_or(c.safety.mode),
            from_state: options.from_state,
            config,
            out: out.to_path_buf(),
            command: command.to_owned(),
            timings: Vec::new(),
            outputs: Vec::new(),
            statistics: serde_json::Map::new(),
        })
    }

    /// Identifies the model and policy: configuration, data files and mode.
    pub fn model_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config.input_hash.as_bytes());
        h.update(self.mode.name().as_bytes());
        hex::encode(h.finalize())
    }

    fn options_json(&self) -> serde_json::Value {
        json!({
            "mode": self.mode.name(),
            "seed": self.seed,
            "rollouts": self.rollouts,
            "safety_mode": safety_mode_name(self.safety_mode),
            "from_state": self.from_state,
        })
    }

    fn run_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.config.input_hash.as_bytes());
        h.update(self.command.as_bytes());
        h.update(self.options_json().to_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let r = f(self)?;
        self.timings.push(PhaseTiming { phase: phase.to_owned(), seconds: t.elapsed().as_secs_f64() });
        Ok(r)
    }

    pub fn timings(&self) -> &[PhaseTiming] {
        &self.timings
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        if !self.outputs.contains(&p) {
            self.outputs.push(p.clone());
        }
        p
    }

    fn stat(&mut self, key: &str, value: serde_json::Value) {
        self.statistics.insert(key.to_owned(), value);
    }

    pub fn domain(&self) -> Result<Domain<DensityModel>, CliError> {
        self.config.domain(self.mode)
    }

    pub fn build_model(&mut self) -> Result<OrbitModel, CliError> {
        let domain = self.domain()?;
        let model = self.timed("build", |_| assemble_model(&domain).map_err(|e| CliError::Internal(e.to_string())))?;
        let stats = model.stats();
        self.stat("model", stats_json(&stats));
        Ok(model)
    }

    pub fn load_policy(&self, model: &OrbitModel) -> Result<Policy, CliError> {
        let policy = read_policy(&self.out.join(POLICY_FILE), &self.model_hash())?;
        if policy.num_states() != model.num_states() || policy.horizon() != model.horizon() {
            return Err(CliError::Config(format!("{} does not match the model's shape; rerun solve", POLICY_FILE)));
        }
        Ok(policy)
    }

    /// Writes `<command>.manifest.json` and returns its path.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let file = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            outputs.push(OutputFile { file, sha256: file_sha256(p)? });
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: self.config.path.clone(),
            inputs: self.config.inputs.clone(),
            config_hash: self.config.input_hash.clone(),
            run_hash: self.run_hash(),
            options: self.options_json(),
            timings: std::mem::take(&mut self.timings),
            peak_memory_kib: peak_memory_kib(),
            statistics: serde_json::Value::Object(std::mem::take(&mut self.statistics)),
            outputs,
        };
        let path = self.out.join(format!("{}.manifest.json", self.command));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}

fn safety_mode_name(m: SafetyModeName) -> &'static str {
    match m {
        SafetyModeName::UnderPolicy => "under-policy",
        SafetyModeName::MaxOverActions => "max-over-actions",
    }
}

fn stats_json(s: &ModelStats) -> serde_json::Value {
    json!({
        "states": s.states,
        "actions": s.actions,
        "steps": s.steps,
        "factor_nonzeros": s.factor_nonzeros,
        "nonzeros": s.nonzeros,
        "memory_bytes": s.memory_bytes,
    })
}

fn date(d: DateTime<Utc>) -> String {
    d.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub struct BuildSummary {
    pub stats: ModelStats,
    /// Interchange file, when the expanded kernel fits under the export limit.
    pub exported: Option<PathBuf>,
}

pub fn cmd_build(run: &mut Run) -> Result<BuildSummary, CliError> {
    let model = run.build_model()?;
    let stats = model.stats();
    let limit = run.config.config.run.model_export_limit;
    let exported = if stats.nonzeros <= limit {
        let path = run.path("model.mdp");
        run.timed("export", |_| {
            let explicit = MissionModel::from_mdp(&model).map_err(|e| CliError::Internal(e.to_string()))?;
            let f = fs::File::create(&path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
            write_model(&explicit, BufWriter::new(f)).map_err(|e| CliError::Internal(e.to_string()))
        })?;
        Some(path)
    } else {
        None
    };
    run.stat("exported", json!(exported.is_some()));
    run.stat("export_limit", json!(limit));
    Ok(BuildSummary { stats, exported })
}

/// Step-by-step record of the nominal (most probable) path under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalStep {
    pub step: usize,
    pub date: DateTime<Utc>,
    pub state: DomainState,
    pub altitude_km: f64,
    pub fuel_kg: f64,
    pub action: Option<usize>,
    pub raise_km: f64,
}

/// Follows the policy from the initial state, taking the most probable
/// successor at every step (the lowest index on ties).
pub fn nominal_trajectory(model: &OrbitModel, domain: &Domain<DensityModel>, policy: &Policy) -> Vec<NominalStep> {
    let time = model.time();
    let alt_grid = model.altitude_grid();
    let fuel_grid = model.fuel_grid();
    let mut s = model.initial().iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).map(|e| e.0).expect("initial state");
    let mut out = Vec::with_capacity(model.horizon() + 1);
    for h in 0..=model.horizon() {
        let state = model.decode(s);
        let (altitude_km, fuel_kg) = match state {
            DomainState::Orbit { alt, fuel, .. } => (alt_grid.center(alt), fuel_grid.edge(fuel)),
            DomainState::Deorbited => (alt_grid.lo, 0.0),
        };
        let action = (h < model.horizon()).then(|| policy.action_at(s, h));
        let raise_km = action.map_or(0.0, |a| domain.actions.raise_km(a, alt_grid));
        out.push(NominalStep { step: h, date: time.date_at(h), state, altitude_km, fuel_kg, action, raise_km });
        if let Some(a) = action {
            let mut best = (s, f64::NEG_INFINITY);
            for (t, p) in model.successors(s, a, h) {
                if p > best.1 {
                    best = (t, p);
                }
            }
            s = best.0;
        }
    }
    out
}

pub struct SolveSummary {
    pub expected_reward: f64,
    pub trajectory: Vec<NominalStep>,
}

pub fn cmd_solve(run: &mut Run) -> Result<SolveSummary, CliError> {
    let domain = run.domain()?;
    let model = run.build_model()?;
    let (values, policy) =
        run.timed("solve", |_| solve_backward_retaining(&model, &Terminal::Zero, &Retain::Ends).map_err(|e| CliError::Internal(e.to_string())))?;
    let expected_reward = values.expected_at(model.initial(), 0);
    let trajectory = nominal_trajectory(&model, &domain, &policy);
    let hash = run.model_hash();
    let policy_path = run.path(POLICY_FILE);
    let values_path = run.path("values.bin");
    let traj_path = run.path("trajectory.csv");
    run.timed("write", |_| {
        write_policy(&policy_path, &policy, &hash)?;
        write_values(&values_path, values.slice(0).expect("slice 0 is always kept"), 0)?;
        trajectory_table(&trajectory).write(&traj_path)
    })?;
    run.stat("expected_reward", json!(expected_reward));
    Ok(SolveSummary { expected_reward, trajectory })
}

fn trajectory_table(steps: &[NominalStep]) -> Table {
    let mut t = Table::new(&["step", "date", "alt_km", "fuel_kg", "cooldown", "action", "raise_km"]);
    for s in steps {
        let cooldown = match s.state {
            DomainState::Orbit { cooldown, .. } => cooldown.to_string(),
            DomainState::Deorbited => String::new(),
        };
        t.row(&[
            s.step.to_string(),
            date(s.date),
            num(s.altitude_km),
            num(s.fuel_kg),
            cooldown,
            s.action.map(|a| a.to_string()).unwrap_or_default(),
            num(s.raise_km),
        ]);
    }
    t
}

fn retain_for(run: &Run, model: &OrbitModel) -> Retain {
    let bytes = (model.num_states() as u64) * (model.horizon() as u64 + 1) * 8;
    if bytes <= run.config.config.run.value_table_limit_bytes {
        Retain::All
    } else {
        Retain::Ends
    }
}

fn compiled(run: &Run, model: &OrbitModel) -> Result<CompiledSpec, CliError> {
    compile_spec(&run.config.config.safety.spec(), model).map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_verify(run: &mut Run) -> Result<VerificationResult, CliError> {
    let model = run.build_model()?;
    let policy = run.load_policy(&model)?;
    let spec = compiled(run, &model)?;
    let retain = retain_for(run, &model);
    let mode = match run.safety_mode {
        SafetyModeName::UnderPolicy => SafetyMode::UnderPolicy(&policy),
        SafetyModeName::MaxOverActions => SafetyMode::MaxOverActions,
    };
    let result = run.timed("verify", |_| verify_policy(&model, &policy, &spec, mode, &retain).map_err(|e| CliError::Internal(e.to_string())))?;

    let time = model.time().clone();
    let report_path = run.path("verification.json");
    let curve_path = run.path("violation_curve.csv");
    let final_path = run.path("final_altitude.csv");
    let env_path = run.path("envelope.csv");
    let f = &result.feasibility;
    let trace = result.trace.as_ref().map(|t| {
        t.iter()
            .map(|s| json!({"step": s.step, "state": state_json(model.decode(s.state)), "action": s.action, "safety": s.safety}))
            .collect::<Vec<_>>()
    });
    let report = json!({
        "mode": f.mode,
        "delta": f.delta,
        "safety_probability": f.probability,
        "violation_probability": 1.0 - f.probability,
        "feasible": f.feasible,
        "margin": f.margin,
        "altitude_floor_km": spec.spec.altitude_floor_km,
        "spacing_steps": spec.spec.spacing_steps,
        "altitude_clause": spec.altitude_clause.name(),
        "spacing_clause": spec.spacing_clause.name(),
        "unsafe_states": spec.unsafe_set.count(),
        "final_altitude": {
            "mean_km": result.forward.final_altitude.mean_km(),
            "p05_km": result.forward.final_altitude.quantile(0.05),
            "deorbit_probability": result.forward.final_altitude.deorbit_probability(),
            "below_floor_probability": result.forward.final_altitude.prob_below(spec.spec.altitude_floor_km),
        },
        "trace": trace,
    });
    write_json(&report_path, &report)?;
    curve_table(&result.forward, &time).write(&curve_path)?;
    distribution_table(&result.forward.final_altitude).write(&final_path)?;
    envelope_table(&result.forward.envelopes, &time).write(&env_path)?;
    run.stat("safety_probability", json!(f.probability));
    run.stat("feasible", json!(f.feasible));
    Ok(result)
}

fn state_json(s: DomainState) -> serde_json::Value {
    match s {
        DomainState::Orbit { alt, fuel, cooldown } => json!({"alt_bin": alt, "fuel_bin": fuel, "cooldown": cooldown}),
        DomainState::Deorbited => json!("deorbited"),
    }
}

fn curve_table(r: &ForwardReport, time: &mission_core::mdp::TimeGrid) -> Table {
    let mut t = Table::new(&["step", "date", "violation_probability"]);
    for e in &r.envelopes {
        t.row(&[e.step.to_string(), date(time.date_at(e.step)), num(e.violated)]);
    }
    t
}

fn distribution_table(d: &AltitudeDistribution) -> Table {
    let mut t = Table::new(&["alt_km", "deorbited", "pmf", "cdf"]);
    for (i, ((l, p), c)) in d.labels_km.iter().zip(&d.pmf).zip(&d.cdf).enumerate() {
        t.row(&[num(*l), u8::from(i == 0).to_string(), num(*p), num(*c)]);
    }
    t
}

const ENVELOPE_COLUMNS: [&str; 13] = [
    "step", "date", "alt_p05_km", "alt_p25_km", "alt_p50_km", "alt_p75_km", "alt_p95_km", "fuel_p05_kg", "fuel_p25_kg", "fuel_p50_kg",
    "fuel_p75_kg", "fuel_p95_kg", "deorbited",
];

fn envelope_table(rows: &[EnvelopeRow], time: &mission_core::mdp::TimeGrid) -> Table {
    let mut t = Table::new(&ENVELOPE_COLUMNS);
    for e in rows {
        let mut cells = vec![e.step.to_string(), date(time.date_at(e.step))];
        cells.extend(e.altitude_km.iter().map(|x| num(*x)));
        cells.extend(e.fuel_kg.iter().map(|x| num(*x)));
        cells.push(num(e.deorbited));
        t.row(&cells);
    }
    t
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Rollout summary used by `simulate` and `replan`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary {
    pub envelopes: Vec<EnvelopeRow>,
    pub safe_fraction: f64,
    pub mean_final_altitude_km: f64,
    pub final_altitude_km: Vec<f64>,
}

pub fn summarize_rollouts(model: &OrbitModel, spec: &CompiledSpec, batch: &RolloutBatch) -> RolloutSummary {
    let ag = model.altitude_grid();
    let fg = model.fuel_grid();
    let trajs = &batch.trajectories;
    let start = trajs[0].start_step;
    let horizon = model.horizon();
    let readout = |s: usize| match model.decode(s) {
        DomainState::Orbit { alt, fuel, .. } => (ag.center(alt), fg.edge(fuel), false),
        DomainState::Deorbited => (ag.lo, 0.0, true),
    };
    let mut envelopes = Vec::with_capacity(horizon - start + 1);
    let mut alts = vec![0.0; trajs.len()];
    let mut fuels = vec![0.0; trajs.len()];
    let mut violated = vec![false; trajs.len()];
    for h in start..=horizon {
        let mut deorbited = 0usize;
        for (i, t) in trajs.iter().enumerate() {
            let s = t.state_at(h);
            let (a, f, d) = readout(s);
            alts[i] = a;
            fuels[i] = f;
            deorbited += usize::from(d);
            let raise_violation = h > start && spec.violates(t.state_at(h - 1), t.steps[h - 1 - start].action as usize);
            violated[i] |= spec.unsafe_set.contains(s) || raise_violation;
        }
        let n = trajs.len() as f64;
        let mut sa = alts.clone();
        let mut sf = fuels.clone();
        sa.sort_by(f64::total_cmp);
        sf.sort_by(f64::total_cmp);
        let q = [0.05, 0.25, 0.5, 0.75, 0.95];
        envelopes.push(EnvelopeRow {
            step: h,
            altitude_km: q.map(|x| percentile(&sa, x)),
            fuel_kg: q.map(|x| percentile(&sf, x)),
            deorbited: deorbited as f64 / n,
            violated: violated.iter().filter(|v| **v).count() as f64 / n,
        });
    }
    let n = trajs.len() as f64;
    RolloutSummary {
        safe_fraction: violated.iter().filter(|v| !**v).count() as f64 / n,
        mean_final_altitude_km: alts.iter().sum::<f64>() / n,
        final_altitude_km: alts,
        envelopes,
    }
}

pub fn cmd_simulate(run: &mut Run) -> Result<RolloutSummary, CliError> {
    let model = run.build_model()?;
    let policy = run.load_policy(&model)?;
    let spec = compiled(run, &model)?;
    let (seed, n) = (run.seed, run.rollouts);
    let batch = run.timed("simulate", |_| simulate_from(&model, &policy, seed, n, model.initial(), 0).map_err(|e| CliError::Internal(e.to_string())))?;
    let summary = summarize_rollouts(&model, &spec, &batch);
    let time = model.time().clone();
    let env_path = run.path("simulation_envelope.csv");
    let sum_path = run.path("simulation.json");
    envelope_table(&summary.envelopes, &time).write(&env_path)?;
    write_json(
        &sum_path,
        &json!({
            "rollouts": n,
            "seed": seed,
            "safe_fraction": summary.safe_fraction,
            "mean_final_altitude_km": summary.mean_final_altitude_km,
            "min_p05_altitude_km": summary.envelopes.iter().map(|e| e.altitude_km[0]).fold(f64::INFINITY, f64::min),
        }),
    )?;
    run.stat("safe_fraction", json!(summary.safe_fraction));
    Ok(summary)
}

/// Parses `alt_km,fuel_kg,cooldown,date` with an RFC 3339 or `YYYY-MM-DD` date.
pub fn parse_from_state(text: &str) -> Result<(f64, f64, usize, DateTime<Utc>), CliError> {
    let bad = |m: &str| CliError::Config(format!("--from-state {text:?}: {m}"));
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(bad("expected alt_km,fuel_kg,cooldown,date"));
    }
    let alt: f64 = parts[0].parse().map_err(|_| bad("altitude is not a number"))?;
    let fuel: f64 = parts[1].parse().map_err(|_| bad("fuel is not a number"))?;
    let cooldown: usize = parts[2].parse().map_err(|_| bad("cooldown is not a non-negative integer"))?;
    let when = DateTime::parse_from_rfc3339(parts[3])
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| chrono::NaiveDate::parse_from_str(parts[3], "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc()))
        .map_err(|_| bad("date is neither RFC 3339 nor YYYY-MM-DD"))?;
    Ok((alt, fuel, cooldown, when))
}

pub struct ReplanSummary {
    pub state: DomainState,
    pub step: usize,
    pub safety: f64,
    pub forward: ForwardReport,
    pub rollouts: RolloutSummary,
}

pub fn cmd_replan(run: &mut Run) -> Result<ReplanSummary, CliError> {
    let text = run.from_state.clone().ok_or_else(|| CliError::Config("replan needs --from-state alt_km,fuel_kg,cooldown,date".into()))?;
    let (alt, fuel, cooldown, when) = parse_from_state(&text)?;
    let domain = run.domain()?;
    let state = domain.state_at(alt, fuel, cooldown).map_err(|e| CliError::Config(e.to_string()))?;
    let model = run.build_model()?;
    let step = model
        .time()
        .step_nearest(when)
        .filter(|&h| h < model.horizon())
        .ok_or_else(|| CliError::Config(format!("date {} is outside the planning horizon", date(when))))?;
    let policy = run.load_policy(&model)?;
    let spec = compiled(run, &model)?;
    let report = run.timed("replan", |_| replan_from_state(&model, &policy, &spec, state, step).map_err(|e| CliError::Internal(e.to_string())))?;
    let (seed, n) = (run.seed, run.rollouts);
    let s = model.layout().encode(state);
    let batch = run.timed("simulate", |_| simulate_from(&model, &policy, seed, n, &[(s, 1.0)], step).map_err(|e| CliError::Internal(e.to_string())))?;
    let rollouts = summarize_rollouts(&model, &spec, &batch);

    let time = model.time().clone();
    let json_path = run.path("replan.json");
    let env_path = run.path("replan_envelope.csv");
    let sim_path = run.path("replan_simulation_envelope.csv");
    let final_path = run.path("replan_final_altitude.csv");
    write_json(
        &json_path,
        &json!({
            "state": state_json(state),
            "step": step,
            "date": date(time.date_at(step)),
            "safety_probability": report.safety,
            "min_p05_altitude_km": report.forward.minimum_altitude_km(),
            "final_p05_altitude_km": report.forward.final_altitude.quantile(0.05),
            "rollouts": n,
            "rollout_safe_fraction": rollouts.safe_fraction,
        }),
    )?;
    envelope_table(&report.forward.envelopes, &time).write(&env_path)?;
    envelope_table(&rollouts.envelopes, &time).write(&sim_path)?;
    distribution_table(&report.forward.final_altitude).write(&final_path)?;
    run.stat("safety_probability", json!(report.safety));
    Ok(ReplanSummary { state, step, safety: report.safety, forward: report.forward, rollouts })
}

pub fn cmd_resonances(run: &mut Run) -> Result<usize, CliError> {
    let c = &run.config.config;
    let body = run.config.environment.body;
    let band = (c.grid.altitude_km[0], c.grid.altitude_km[1]);
    let (max_n, incl) = (c.reward.max_n, c.reward.inclination_deg.to_radians());
    let table = run.timed("resonances", |_| resonance_altitudes(band, max_n, incl, &body).map_err(|e| CliError::Config(e.to_string())))?;
    let path = run.path("resonances.csv");
    crate::output::write_bytes(&path, table.to_delimited().as_bytes())?;
    run.stat("entries", json!(table.entries.len()));
    Ok(table.entries.len())
}

//! Run configuration: a strict TOML schema plus the data files it references.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use mission_core::astro::{resonance_altitudes, DensityModel, EnvironmentData, SpacecraftParams};
use mission_core::domain::{
    AltitudeGrid, Domain, FuelGrid, FuelMode, ManeuverActionSet, RewardParams, SolarScenario, ThrustModel, INTENSITY_NAMES,
    PERCENTILE_WEIGHTS,
};
use mission_core::mdp::TimeGrid;
use mission_core::verify::SafetySpec;

use crate::flux::{load_flux_file, rows_for_horizon};
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mission: MissionSection,
    pub grid: GridSection,
    pub actions: ActionSection,
    pub spacecraft: SpacecraftParams,
    pub environment: EnvironmentSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub thrust: ThrustSection,
    pub reward: RewardParams,
    #[serde(default)]
    pub safety: SafetySection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    pub epoch: DateTime<Utc>,
    pub step_seconds: f64,
    pub horizon_steps: usize,
    pub initial_altitude_km: f64,
    pub initial_fuel_kg: f64,
    /// Defaults to the cooldown saturation, i.e. a raise is allowed at once.
    pub initial_cooldown: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub altitude_km: [f64; 2],
    pub altitude_bins: usize,
    pub fuel_kg: [f64; 2],
    pub fuel_bins: usize,
    pub cooldown_steps: usize,
    #[serde(default = "yes")]
    pub enforce_spacing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSection {
    pub growth: f64,
    pub raises: usize,
    #[serde(default = "delta_v")]
    pub fuel_mode: FuelMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub density: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    Deterministic,
    Stochastic,
}

impl ScenarioMode {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioMode::Deterministic => "deterministic",
            ScenarioMode::Stochastic => "stochastic",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default = "stochastic")]
    pub mode: ScenarioMode,
    /// One file per intensity class: low, medium, high.
    pub flux_files: Vec<PathBuf>,
    #[serde(default = "thirds")]
    pub priors: Vec<f64>,
    #[serde(default = "percentile_weights")]
    pub weights: [f64; 5],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrustSection {
    pub eta: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for ThrustSection {
    fn default() -> Self {
        ThrustSection { eta: vec![0.9, 1.0, 1.1], weights: vec![0.2, 0.6, 0.2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SafetyModeName {
    UnderPolicy,
    MaxOverActions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySection {
    #[serde(default = "floor")]
    pub altitude_floor_km: f64,
    #[serde(default = "three")]
    pub spacing_steps: usize,
    #[serde(default = "five_percent")]
    pub delta: f64,
    #[serde(default = "under_policy")]
    pub mode: SafetyModeName,
}

impl Default for SafetySection {
    fn default() -> Self {
        SafetySection { altitude_floor_km: 300.0, spacing_steps: 3, delta: 0.05, mode: SafetyModeName::UnderPolicy }
    }
}

impl SafetySection {
    pub fn spec(&self) -> SafetySpec {
        SafetySpec { altitude_floor_km: self.altitude_floor_km, spacing_steps: self.spacing_steps, delta: self.delta }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "thousand")]
    pub rollouts: usize,
    /// Largest expanded kernel, in stored entries, written by `build`.
    #[serde(default = "export_limit")]
    pub model_export_limit: u64,
    /// Keep every safety-value slice when the table fits in this many bytes.
    #[serde(default = "table_limit")]
    pub value_table_limit_bytes: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, rollouts: thousand(), model_export_limit: export_limit(), value_table_limit_bytes: table_limit() }
    }
}

fn yes() -> bool {
    true
}
fn delta_v() -> FuelMode {
    FuelMode::DeltaV
}
fn stochastic() -> ScenarioMode {
    ScenarioMode::Stochastic
}
fn thirds() -> Vec<f64> {
    vec![1.0 / 3.0; 3]
}
fn percentile_weights() -> [f64; 5] {
    PERCENTILE_WEIGHTS
}
fn floor() -> f64 {
    300.0
}
fn three() -> usize {
    3
}
fn five_percent() -> f64 {
    0.05
}
fn under_policy() -> SafetyModeName {
    SafetyModeName::UnderPolicy
}
fn thousand() -> usize {
    1000
}
fn export_limit() -> u64 {
    5_000_000
}
fn table_limit() -> u64 {
    1 << 29
}

/// A parsed configuration with every referenced file read and hashed.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    pub environment: EnvironmentData,
    /// `flux[class][h]`, already mapped onto decision steps.
    pub flux: Vec<Vec<[f64; 5]>>,
    /// SHA-256 over the configuration text and every referenced file.
    pub input_hash: String,
    pub inputs: Vec<PathBuf>,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };

        let mut hasher = Sha256::new();
        hash_part(&mut hasher, "config", text.as_bytes());
        let mut inputs = Vec::new();

        let density_path = resolve(&config.environment.density);
        let density_text = read(&density_path)?;
        hash_part(&mut hasher, "density", density_text.as_bytes());
        let environment = EnvironmentData::from_toml(&density_text).map_err(|e| CliError::Config(format!("{}: {e}", density_path.display())))?;
        inputs.push(density_path);

        let time = time_grid(&config)?;
        if config.scenario.flux_files.len() != config.scenario.priors.len() {
            return Err(CliError::Config(format!(
                "{} flux files for {} intensity priors",
                config.scenario.flux_files.len(),
                config.scenario.priors.len()
            )));
        }
        let mut flux = Vec::new();
        for (i, f) in config.scenario.flux_files.iter().enumerate() {
            let p = resolve(f);
            let bytes = read(&p)?;
            hash_part(&mut hasher, INTENSITY_NAMES.get(i).copied().unwrap_or("flux"), bytes.as_bytes());
            let rows = load_flux_file(&p, bytes.as_bytes())?;
            flux.push(rows_for_horizon(&p, &rows, &time)?);
            inputs.push(p);
        }

        let loaded = LoadedConfig { path: path.to_path_buf(), config, environment, flux, input_hash: hex::encode(hasher.finalize()), inputs };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if !(0.0..1.0).contains(&c.safety.delta) {
            return Err(CliError::Config(format!("safety.delta = {} outside [0, 1)", c.safety.delta)));
        }
        if c.run.rollouts == 0 {
            return Err(CliError::Config("run.rollouts must be at least 1".into()));
        }
        self.domain(ScenarioMode::Deterministic).map(|_| ())
    }

    pub fn time(&self) -> TimeGrid {
        time_grid(&self.config).expect("validated at load")
    }

    /// Planning domain for `mode`: the stochastic mixture, or its expected
    /// flux per step with exact thrust.
    pub fn domain(&self, mode: ScenarioMode) -> Result<Domain<DensityModel>, CliError> {
        let c = &self.config;
        let g = &c.grid;
        let cfg = |e: mission_core::domain::DomainError| CliError::Config(e.to_string());
        let altitude = AltitudeGrid::new(g.altitude_km[0], g.altitude_km[1], g.altitude_bins).map_err(cfg)?;
        let fuel = FuelGrid::new(g.fuel_kg[0], g.fuel_kg[1], g.fuel_bins).map_err(cfg)?;
        let actions = ManeuverActionSet::geometric(c.actions.growth, c.actions.raises).map_err(cfg)?;
        let scenario = SolarScenario::from_percentiles(c.scenario.priors.clone(), &self.flux, c.scenario.weights).map_err(cfg)?;
        let thrust = ThrustModel::new(c.thrust.eta.clone(), c.thrust.weights.clone()).map_err(cfg)?;
        let (scenario, thrust) = match mode {
            ScenarioMode::Stochastic => (scenario, thrust),
            ScenarioMode::Deterministic => (scenario.collapsed(), ThrustModel::exact()),
        };
        c.reward.validate().map_err(cfg)?;
        let body = self.environment.body;
        let resonances = resonance_altitudes((altitude.lo, altitude.hi), c.reward.max_n, c.reward.inclination_deg.to_radians(), &body)
            .map_err(|e| CliError::Config(format!("resonances: {e}")))?;
        let mut domain = Domain {
            altitude,
            fuel,
            cooldown_max: g.cooldown_steps,
            enforce_spacing: g.enforce_spacing,
            actions,
            fuel_mode: c.actions.fuel_mode,
            spacecraft: c.spacecraft,
            body,
            atmosphere: self.environment.density.clone(),
            scenario,
            thrust,
            reward: c.reward,
            resonances,
            time: self.time(),
            initial: mission_core::domain::DomainState::Deorbited,
        };
        let m = &c.mission;
        domain.initial = domain
            .state_at(m.initial_altitude_km, m.initial_fuel_kg, m.initial_cooldown.unwrap_or(g.cooldown_steps))
            .map_err(cfg)?;
        domain.validate().map_err(cfg)?;
        Ok(domain)
    }
}

fn time_grid(c: &RunConfig) -> Result<TimeGrid, CliError> {
    TimeGrid::new(c.mission.horizon_steps, c.mission.step_seconds, c.mission.epoch).map_err(|e| CliError::Config(e.to_string()))
}

fn read(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn hash_part(h: &mut Sha256, name: &str, bytes: &[u8]) {
    h.update(name.as_bytes());
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

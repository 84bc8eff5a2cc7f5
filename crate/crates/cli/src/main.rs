use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mission_cli::config::{SafetyModeName, ScenarioMode};
use mission_cli::pipeline::{self, Options, Run};
use mission_cli::CliError;

#[derive(Parser)]
#[command(name = "mission", version, about = "Orbit-maintenance maneuver planning and safety verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the planning model and report its size.
    Build(Common),
    /// Solve for the reward-maximising policy.
    Solve(Common),
    /// Check the safety specification for the solved policy.
    Verify(Common),
    /// Monte Carlo rollouts of the solved policy.
    Simulate(Common),
    /// Forward analysis from an observed state.
    Replan(Common),
    /// Tabulate repeat-ground-track altitudes over the grid.
    Resonances(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    safety_mode: Option<Safety>,
    /// alt_km,fuel_kg,cooldown,date
    #[arg(long)]
    from_state: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Det,
    Stoch,
}

#[derive(Clone, Copy, ValueEnum)]
enum Safety {
    UnderPolicy,
    MaxOverActions,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            mode: self.mode.map(|m| match m {
                Mode::Det => ScenarioMode::Deterministic,
                Mode::Stoch => ScenarioMode::Stochastic,
            }),
            seed: self.seed,
            rollouts: self.rollouts,
            safety_mode: self.safety_mode.map(|m| match m {
                Safety::UnderPolicy => SafetyModeName::UnderPolicy,
                Safety::MaxOverActions => SafetyModeName::MaxOverActions,
            }),
            from_state: self.from_state.clone(),
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Build(c) => ("build", c),
        Command::Solve(c) => ("solve", c),
        Command::Verify(c) => ("verify", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Replan(c) => ("replan", c),
        Command::Resonances(c) => ("resonances", c),
    };
    let mut run = Run::new(name, &common.config, &common.out, common.options())?;
    let mut infeasible = None;
    match cli.command {
        Command::Build(_) => {
            let b = pipeline::cmd_build(&mut run)?;
            println!("states {}", b.stats.states);
            println!("actions {}", b.stats.actions);
            println!("steps {}", b.stats.steps);
            println!("nonzeros {}", b.stats.nonzeros);
            match &b.exported {
                Some(p) => println!("model {}", p.display()),
                None => println!("model not exported: {} entries exceed the export limit", b.stats.nonzeros),
            }
        }
        Command::Solve(_) => {
            let s = pipeline::cmd_solve(&mut run)?;
            println!("expected reward {}", s.expected_reward);
            if let Some(last) = s.trajectory.last() {
                println!("nominal final altitude {:.3} km, fuel {:.3} kg", last.altitude_km, last.fuel_kg);
            }
        }
        Command::Verify(_) => {
            let v = pipeline::cmd_verify(&mut run)?;
            let f = &v.feasibility;
            println!("safety probability {} ({})", f.probability, f.mode);
            println!("delta {} margin {} feasible {}", f.delta, f.margin, f.feasible);
            if !f.feasible {
                infeasible = Some(format!("safety probability {} below 1 - delta = {}", f.probability, 1.0 - f.delta));
            }
        }
        Command::Simulate(_) => {
            let s = pipeline::cmd_simulate(&mut run)?;
            println!("safe fraction {}", s.safe_fraction);
            println!("mean final altitude {} km", s.mean_final_altitude_km);
        }
        Command::Replan(_) => {
            let r = pipeline::cmd_replan(&mut run)?;
            println!("step {} safety probability {}", r.step, r.safety);
            println!("minimum p05 altitude {} km", r.forward.minimum_altitude_km());
        }
        Command::Resonances(_) => {
            let n = pipeline::cmd_resonances(&mut run)?;
            println!("{n} resonances");
        }
    }
    let manifest = run.finish()?;
    println!("manifest {}", manifest.display());
    match infeasible {
        Some(m) => Err(CliError::Infeasible(m)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

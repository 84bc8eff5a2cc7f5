//! Acceptance checks, one line per criterion. Runs the full-scale pipelines
//! through the `mission` binary, so expect several minutes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mission_cli::pipeline::{summarize_rollouts, Options, Run};
use mission_core::astro::{repeat_residual, resonance_altitudes, Body};
use mission_core::mdp::{oracle_enumerate, simulate_from, solve_backward, Mdp, MissionModel, Policy, Retain, Terminal, TimeGrid};
use mission_core::verify::{compile_spec, path_enumeration, safety_value, verify_policy, SafetyMode, SafetySpec, UnsafeSet};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().expect("data directory")
}

fn mission(args: &[&str], config: &Path, out: &Path) -> Result<f64, String> {
    let t = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_mission"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("mission {} failed ({:?}): {}", args.join(" "), o.status.code(), String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(t.elapsed().as_secs_f64())
}

fn json(p: &Path) -> Result<serde_json::Value, String> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn random_rows(rng: &mut ChaCha8Rng, ns: usize, sparse: bool) -> Vec<(usize, f64)> {
    let mut w: Vec<f64> = (0..ns).map(|_| if sparse && rng.random_bool(0.4) { 0.0 } else { rng.random::<f64>() + 0.01 }).collect();
    if w.iter().all(|x| *x == 0.0) {
        w[rng.random_range(0..ns)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().enumerate().filter(|(_, x)| **x > 0.0).map(|(t, x)| (t, x / total)).collect()
}

fn random_model(rng: &mut ChaCha8Rng, ns: usize, na: usize, horizon: usize, sparse: bool) -> MissionModel {
    let mut b = MissionModel::builder(ns, na, TimeGrid::unit(horizon).unwrap());
    for h in 0..horizon {
        for s in 0..ns {
            for a in 0..na {
                let row = random_rows(rng, ns, sparse);
                b.set_row(s, a, h, row);
                b.set_reward(s, a, h, rng.random_range(-1.0..1.0));
            }
        }
    }
    let init = random_rows(rng, ns, sparse);
    b.set_initial(init);
    b.build().unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (ns, na, h) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=4));
        let m = random_model(&mut rng, ns, na, h, true);
        let (v, _) = solve_backward(&m, &Terminal::Zero).unwrap();
        let dp = v.expected_at(m.initial(), 0);
        worst = worst.max((dp - oracle_enumerate(&m, &Terminal::Zero).unwrap()).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 10.0, format!("200 instances, max |V - oracle| = {worst:.3e}, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_paths, mut worst_dual): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let (ns, na, h) = (rng.random_range(1..=5), rng.random_range(1..=3), rng.random_range(1..=5));
        let m = random_model(&mut rng, ns, na, h, true);
        let policy = Policy::from_fn(ns, h, |_, _| rng.random_range(0..na));
        let unsafe_set = UnsafeSet::from_states(ns, (0..ns).filter(|_| rng.random_bool(0.3)));
        let table = safety_value(&m, &unsafe_set, SafetyMode::UnderPolicy(&policy), &Retain::Ends).unwrap();
        let v: f64 = m.initial().iter().map(|&(s, p)| p * table.value_at(s, 0)).sum();
        let paths = path_enumeration(&m, &policy, &unsafe_set).unwrap();
        worst_paths = worst_paths.max((v - paths.avoid).abs());
        worst_dual = worst_dual.max((v - (1.0 - paths.reach)).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_paths <= 1e-12 && worst_dual <= 1e-12 && secs < 10.0,
        format!("200 instances, max |V - Pr(always not B)| = {worst_paths:.3e}, max |V - (1 - Pr(eventually B))| = {worst_dual:.3e}, {secs:.2} s"),
    )
}

/// Monte Carlo against the exact forward and safety values on the solved
/// stochastic model, at the configured floor and at a floor high enough to bind.
fn criterion_3(config: &Path, out: &Path) -> Result<Outcome, String> {
    let t = Instant::now();
    let mut run = Run::new("simulate", config, out, Options::default()).map_err(|e| e.to_string())?;
    let model = run.build_model().map_err(|e| e.to_string())?;
    let policy = run.load_policy(&model).map_err(|e| e.to_string())?;
    let n = 100_000;
    let batch = simulate_from(&model, &policy, 2018, n, model.initial(), 0).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut pass = true;
    for floor in [300.0, 430.0] {
        let spec = compile_spec(&SafetySpec { altitude_floor_km: floor, ..Default::default() }, &model).map_err(|e| e.to_string())?;
        let exact = verify_policy(&model, &policy, &spec, SafetyMode::UnderPolicy(&policy), &Retain::Ends).map_err(|e| e.to_string())?;
        let mc = summarize_rollouts(&model, &spec, &batch);
        let p = exact.feasibility.probability;
        let se_p = (p * (1.0 - p) / n as f64).sqrt();
        let d = &exact.forward.final_altitude;
        let mean = d.mean_km();
        let var: f64 = d.labels_km.iter().zip(&d.pmf).map(|(x, w)| w * (x - mean).powi(2)).sum();
        let se_m = (var / n as f64).sqrt();
        let ok_p = (mc.safe_fraction - p).abs() <= 3.0 * se_p;
        let ok_m = (mc.mean_final_altitude_km - mean).abs() <= 3.0 * se_m;
        pass &= ok_p && ok_m;
        parts.push(format!(
            "floor {floor} km: safe {:.6} vs {p:.6} (SE {se_p:.2e}), mean final {:.4} vs {mean:.4} km (SE {se_m:.2e})",
            mc.safe_fraction, mc.mean_final_altitude_km
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(outcome(pass && secs < 300.0, format!("{n} rollouts; {}; {secs:.1} s", parts.join("; "))))
}

struct TrajectoryRow {
    alt: f64,
    fuel: f64,
    action: Option<usize>,
}

fn read_trajectory(p: &Path) -> Result<Vec<TrajectoryRow>, String> {
    let text = fs::read_to_string(p).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            let f = |i: usize| c[i].parse::<f64>().map_err(|e| format!("{l}: {e}"));
            Ok(TrajectoryRow { alt: f(2)?, fuel: f(3)?, action: c[5].parse().ok() })
        })
        .collect()
}

fn criterion_4(out: &Path, solve_secs: f64) -> Result<Outcome, String> {
    let rows = read_trajectory(&out.join("trajectory.csv"))?;
    let v = json(&out.join("verification.json"))?;
    let min_alt = rows.iter().map(|r| r.alt).fold(f64::INFINITY, f64::min);
    let raises: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.action.is_some_and(|a| a > 0)).map(|(h, _)| h).collect();
    let min_gap = raises.windows(2).map(|w| w[1] - w[0]).min();
    let fuel_ok = rows.windows(2).all(|w| w[1].fuel <= w[0].fuel) && rows.last().is_some_and(|r| r.fuel >= 0.0);
    let stairs = rows.windows(2).all(|w| w[1].alt <= w[0].alt || w[0].action.is_some_and(|a| a > 0));
    let last = rows.last().map_or(f64::NAN, |r| r.alt);
    let below = v["final_altitude"]["below_floor_probability"].as_f64().unwrap_or(f64::NAN);
    let a = min_alt >= 300.0 && below == 0.0;
    let b = min_gap.is_none_or(|g| g >= 3);
    let d = stairs && !raises.is_empty() && (400.0..=460.0).contains(&last);
    let pass = a && b && fuel_ok && d && solve_secs < 300.0;
    Ok(outcome(
        pass,
        format!(
            "(a) min altitude {min_alt:.2} km; (b) raises at {raises:?}, min gap {}; (c) fuel {:.2} -> {:.2} kg, non-increasing {fuel_ok}; (d) staircase {stairs}, final {last:.2} km; solve {solve_secs:.1} s",
            min_gap.map_or("-".into(), |g| g.to_string()),
            rows.first().map_or(f64::NAN, |r| r.fuel),
            rows.last().map_or(f64::NAN, |r| r.fuel),
        ),
    ))
}

fn criterion_5(out: &Path) -> Result<Outcome, String> {
    let v = json(&out.join("verification.json"))?;
    let fa = &v["final_altitude"];
    let below = fa["below_floor_probability"].as_f64().ok_or("missing below_floor_probability")?;
    let p05 = fa["p05_km"].as_f64().ok_or("missing p05_km")?;
    Ok(outcome(below < 1e-3 && p05 >= 400.0, format!("Pr(final < 300 km) = {below:.3e}, final p05 = {p05:.2} km, mean {:.2} km", fa["mean_km"])))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let kepler = Body::EARTH.without_j2();
    let table = resonance_altitudes((300.0, 600.0), 5, 89f64.to_radians(), &kepler).unwrap();
    let n = 15.0 * kepler.rotation_rate;
    let closed_form_km = ((kepler.mu / (n * n)).cbrt() - kepler.radius) / 1000.0;
    let found = table.entries.iter().find(|e| e.revolutions == 15 && e.nodal_days == 1);
    let err_m = found.map_or(f64::INFINITY, |e| (e.altitude_km - closed_form_km).abs() * 1000.0);
    let inc = 89f64.to_radians();
    let j2 = resonance_altitudes((300.0, 600.0), 5, inc, &Body::EARTH).unwrap();
    let worst = j2
        .entries
        .iter()
        .map(|e| repeat_residual(Body::EARTH.radius + e.altitude_km * 1000.0, e.revolutions, e.nodal_days, inc, &Body::EARTH))
        .fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        err_m < 1.0 && !j2.entries.is_empty() && worst < 1e-6 && secs < 1.0,
        format!("(15,1) Keplerian error {err_m:.3e} m; {} J2 entries, max residual {worst:.3e}; {secs:.3} s", j2.entries.len()),
    )
}

fn criterion_7(dir: &Path, elapsed: &BTreeMap<&str, f64>) -> Result<Outcome, String> {
    let total: f64 = elapsed.values().sum();
    let mut peak = 0u64;
    let mut phases = Vec::new();
    for cmd in ["build", "solve", "verify"] {
        let m = json(&dir.join(format!("{cmd}.manifest.json")))?;
        peak = peak.max(m["peak_memory_kib"].as_u64().unwrap_or(u64::MAX));
        let t: Vec<String> = m["timings"]
            .as_array()
            .ok_or("manifest without timings")?
            .iter()
            .map(|p| format!("{}={:.1}s", p["phase"].as_str().unwrap_or("?"), p["seconds"].as_f64().unwrap_or(f64::NAN)))
            .collect();
        if t.is_empty() {
            return Ok(outcome(false, format!("{cmd} manifest records no phases")));
        }
        phases.push(format!("{cmd}[{}]", t.join(" ")));
    }
    let gib = peak as f64 / (1024.0 * 1024.0);
    Ok(outcome(total < 600.0 && gib < 16.0, format!("wall {total:.1} s, peak {gib:.2} GiB; {}", phases.join(" "))))
}

/// Every file in two output directories, with manifests stripped of timings
/// and memory readings.
fn compare_dirs(a: &Path, b: &Path) -> Result<Vec<String>, String> {
    let mut diffs = Vec::new();
    let mut names: Vec<_> = fs::read_dir(a).map_err(|e| e.to_string())?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        let same = if name.to_string_lossy().ends_with(".manifest.json") {
            let strip = |p: &Path| -> Result<serde_json::Value, String> {
                let mut v = json(p)?;
                let o = v.as_object_mut().ok_or("manifest is not an object")?;
                o.remove("timings");
                o.remove("peak_memory_kib");
                Ok(v)
            };
            strip(&pa)? == strip(&pb)?
        } else {
            fs::read(&pa).ok() == fs::read(&pb).ok()
        };
        if !same {
            diffs.push(name.to_string_lossy().into_owned());
        }
    }
    Ok(diffs)
}

fn criterion_8(toy: &Path, full: &Path, work: &Path) -> Result<Outcome, String> {
    let toy_cmds: [&[&str]; 6] =
        [&["build"], &["solve"], &["verify"], &["simulate"], &["replan", "--from-state", "420,2.5,1,2018-08-01"], &["resonances"]];
    let full_cmds: [&[&str]; 3] = [&["solve", "--mode", "det"], &["verify", "--mode", "det"], &["simulate", "--mode", "det"]];
    let mut files = 0;
    let mut diffs = Vec::new();
    for (label, config, cmds) in [("toy", toy, &toy_cmds[..]), ("full-det", full, &full_cmds[..])] {
        let dirs = [work.join(format!("{label}-1")), work.join(format!("{label}-2"))];
        for d in &dirs {
            for c in cmds {
                mission(c, config, d)?;
            }
        }
        files += fs::read_dir(&dirs[0]).map_err(|e| e.to_string())?.count();
        diffs.extend(compare_dirs(&dirs[0], &dirs[1])?.into_iter().map(|f| format!("{label}/{f}")));
    }
    let detail = if diffs.is_empty() { format!("{files} files byte-identical across repeated runs") } else { format!("differing: {}", diffs.join(", ")) };
    Ok(outcome(diffs.is_empty(), detail))
}

fn main() -> ExitCode {
    let data = data();
    let full = data.join("full.toml");
    let toy = data.join("toy.toml");
    let work = tempfile::tempdir().expect("temporary directory");
    let (stoch, det) = (work.path().join("stoch"), work.path().join("det"));

    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let fail = |e: String| outcome(false, e);
    results.push((1, "oracle optimality", criterion_1()));
    results.push((2, "safety recursion exactness", criterion_2()));

    let mut elapsed = BTreeMap::new();
    let stoch_run = ["build", "solve", "verify"].iter().try_for_each(|cmd| mission(&[cmd], &full, &stoch).map(|s| {
        elapsed.insert(*cmd, s);
    }));
    let det_run = mission(&["solve", "--mode", "det"], &full, &det).and_then(|s| mission(&["verify", "--mode", "det"], &full, &det).map(|_| s));

    let c3 = stoch_run.clone().and_then(|_| criterion_3(&full, &stoch)).unwrap_or_else(fail);
    results.push((3, "Monte Carlo consistency", c3));
    let c4 = det_run.and_then(|s| criterion_4(&det, s)).unwrap_or_else(fail);
    results.push((4, "deterministic case study", c4));
    let c5 = stoch_run.clone().and_then(|_| criterion_5(&stoch)).unwrap_or_else(fail);
    results.push((5, "stochastic verification", c5));
    results.push((6, "resonance solver", criterion_6()));
    let c7 = stoch_run.and_then(|_| criterion_7(&stoch, &elapsed)).unwrap_or_else(fail);
    results.push((7, "performance envelope", c7));
    results.push((8, "determinism", criterion_8(&toy, &full, work.path()).unwrap_or_else(fail)));

    let mut all = true;
    for (id, name, o) in &results {
        all &= o.pass;
        println!("criterion {id} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::fmt::Write as _;

use super::{AstroError, Body};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceEntry {
    pub altitude_km: f64,
    /// Revolutions per repeat cycle.
    pub revolutions: u32,
    /// Nodal days per repeat cycle.
    pub nodal_days: u32,
    /// Repetition rate `1 / N`.
    pub res: f64,
}

/// Repeat-ground-track altitudes sorted by altitude.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResonanceTable {
    pub entries: Vec<ResonanceEntry>,
}

impl ResonanceTable {
    pub fn new(mut entries: Vec<ResonanceEntry>) -> Self {
        entries.sort_by(|a, b| a.altitude_km.total_cmp(&b.altitude_km));
        ResonanceTable { entries }
    }

    /// Entries with altitude in `[lo_km, hi_km]`.
    pub fn within(&self, lo_km: f64, hi_km: f64) -> &[ResonanceEntry] {
        let start = self.entries.partition_point(|e| e.altitude_km < lo_km);
        let end = self.entries.partition_point(|e| e.altitude_km <= hi_km);
        &self.entries[start..end.max(start)]
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::from("altitude_km,D,N,res\n");
        for e in &self.entries {
            let _ = writeln!(out, "{:.16e},{},{},{:.16e}", e.altitude_km, e.revolutions, e.nodal_days, e.res);
        }
        out
    }
}

/// Nodal regression and perigee drift of a circular orbit from first-order J2.
fn secular_rates(a: f64, inclination: f64, body: &Body) -> (f64, f64, f64) {
    let n = body.mean_motion(a);
    let k = body.j2 * n * (body.radius / a).powi(2);
    let c = inclination.cos();
    let raan_rate = -1.5 * k * c;
    let perigee_rate = 0.75 * k * (5.0 * c * c - 1.0);
    (n, raan_rate, perigee_rate)
}

/// Relative mismatch `|D T_sat - N T_nodal| / T_nodal` of the repeat condition at `a`.
pub fn repeat_residual(a: f64, d: u32, n_days: u32, inclination: f64, body: &Body) -> f64 {
    let (n, raan, perigee) = secular_rates(a, inclination, body);
    let t_sat = std::f64::consts::TAU / (n + perigee);
    let t_nodal = std::f64::consts::TAU / (body.rotation_rate - raan);
    (d as f64 * t_sat - n_days as f64 * t_nodal).abs() / t_nodal
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Solves `D (w_e - dRAAN/dt) = N (n + dperigee/dt)` for every coprime `(D, N)`
/// with `N <= max_n` whose root lies in the altitude band.
pub fn resonance_altitudes(band_km: (f64, f64), max_n: u32, inclination: f64, body: &Body) -> Result<ResonanceTable, AstroError> {
    body.validate()?;
    let (lo_km, hi_km) = band_km;
    if !(300.0 <= lo_km && lo_km < hi_km && hi_km <= 600.0) {
        return Err(AstroError::InvalidParameter(format!("band [{lo_km}, {hi_km}] km must lie within [300, 600] km")));
    }
    if !(1..=60).contains(&max_n) {
        return Err(AstroError::InvalidParameter(format!("max_N = {max_n} outside [1, 60]")));
    }
    if !inclination.is_finite() {
        return Err(AstroError::InvalidParameter("inclination must be finite".into()));
    }
    let a_lo = body.radius + lo_km * 1000.0;
    let a_hi = body.radius + hi_km * 1000.0;
    // revolutions per nodal day, decreasing in a
    let ratio = |a: f64| {
        let (n, raan, perigee) = secular_rates(a, inclination, body);
        (n + perigee) / (body.rotation_rate - raan)
    };
    let (r_hi, r_lo) = (ratio(a_lo), ratio(a_hi));

    let mut entries = Vec::new();
    for nd in 1..=max_n {
        let d_min = (r_lo * nd as f64).ceil() as u32;
        let d_max = (r_hi * nd as f64).floor() as u32;
        for d in d_min..=d_max {
            if gcd(d, nd) != 1 {
                continue;
            }
            let g = |a: f64| {
                let (n, raan, perigee) = secular_rates(a, inclination, body);
                d as f64 * (body.rotation_rate - raan) - nd as f64 * (n + perigee)
            };
            let Some(a) = bisect(g, a_lo, a_hi) else { continue };
            if repeat_residual(a, d, nd, inclination, body) >= 1e-6 {
                continue;
            }
            let altitude_km = (a - body.radius) / 1000.0;
            if (lo_km..=hi_km).contains(&altitude_km) {
                entries.push(ResonanceEntry { altitude_km, revolutions: d, nodal_days: nd, res: 1.0 / nd as f64 });
            }
        }
    }
    Ok(ResonanceTable::new(entries))
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (mut g_lo, g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid);
        if g_mid == 0.0 {
            return Some(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

//! Monthly F10.7 percentile forecasts: `date,p05,p25,p50,p75,p95`.

use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Deserialize;

use mission_core::mdp::TimeGrid;

use crate::CliError;

/// Largest gap between a decision date and the forecast row used for it.
pub const MAX_ROW_GAP_DAYS: i64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FluxRow {
    pub date: DateTime<Utc>,
    pub percentiles: [f64; 5],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    date: NaiveDate,
    p05: f64,
    p25: f64,
    p50: f64,
    p75: f64,
    p95: f64,
}

pub fn load_flux_file(path: &Path, bytes: &[u8]) -> Result<Vec<FluxRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let mut rows: Vec<FluxRow> = Vec::new();
    for (i, rec) in reader.deserialize::<Record>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| CliError::Config(format!("{}:{line}: {e}", path.display())))?;
        let percentiles = [r.p05, r.p25, r.p50, r.p75, r.p95];
        if percentiles.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(CliError::Config(format!("{}:{line}: flux values must be positive", path.display())));
        }
        if percentiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(CliError::Config(format!("{}:{line}: percentiles decrease", path.display())));
        }
        let date = r.date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc();
        if rows.last().is_some_and(|prev| prev.date >= date) {
            return Err(CliError::Config(format!("{}:{line}: dates must increase", path.display())));
        }
        rows.push(FluxRow { date, percentiles });
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no forecast rows", path.display())));
    }
    Ok(rows)
}

/// Percentiles for every decision step, each from the row nearest its date.
pub fn rows_for_horizon(path: &Path, rows: &[FluxRow], time: &TimeGrid) -> Result<Vec<[f64; 5]>, CliError> {
    (0..time.horizon())
        .map(|h| {
            let d = time.date_at(h);
            let i = rows.partition_point(|r| r.date < d);
            let best = [i.checked_sub(1), (i < rows.len()).then_some(i)]
                .into_iter()
                .flatten()
                .min_by_key(|&j| (rows[j].date - d).num_seconds().abs())
                .expect("rows are non-empty");
            let gap = (rows[best].date - d).num_seconds().abs();
            if gap > MAX_ROW_GAP_DAYS * 86_400 {
                return Err(CliError::Config(format!(
                    "{}: no forecast row within {MAX_ROW_GAP_DAYS} days of step {h} ({})",
                    path.display(),
                    d.format("%Y-%m-%d")
                )));
            }
            Ok(rows[best].percentiles)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const TEXT: &str = "date,p05,p25,p50,p75,p95\n2018-05-01,70,75,80,85,90\n2018-06-01,71,76,81,86,91\n2018-07-01,72,77,82,87,92\n";

    #[test]
    fn nearest_rows_follow_the_step_dates() {
        let rows = load_flux_file(Path::new("t.csv"), TEXT.as_bytes()).unwrap();
        let t = TimeGrid::new(3, 2_629_746.0, Utc.with_ymd_and_hms(2018, 5, 1, 0, 0, 0).unwrap()).unwrap();
        let per_step = rows_for_horizon(Path::new("t.csv"), &rows, &t).unwrap();
        assert_eq!(per_step.iter().map(|p| p[2]).collect::<Vec<_>>(), vec![80.0, 81.0, 82.0]);
    }

    #[test]
    fn short_files_are_rejected() {
        let rows = load_flux_file(Path::new("t.csv"), TEXT.as_bytes()).unwrap();
        let t = TimeGrid::new(4, 2_629_746.0, Utc.with_ymd_and_hms(2018, 5, 1, 0, 0, 0).unwrap()).unwrap();
        let err = rows_for_horizon(Path::new("t.csv"), &rows, &t).unwrap_err();
        assert!(err.to_string().contains("step 3"));
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let bad = "date,p05,p25,p50,p75,p95\n2018-05-01,70,75,80,85,90\n2018-06-01,71,76,60,86,91\n";
        let err = load_flux_file(Path::new("t.csv"), bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("t.csv:3"), "{err}");
        let extra = "date,p05,p25,p50,p75,p95,p99\n2018-05-01,70,75,80,85,90,95\n";
        assert!(load_flux_file(Path::new("t.csv"), extra.as_bytes()).is_err());
    }
}

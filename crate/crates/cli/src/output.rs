//! Result files: delimited tables, binary policy and value dumps, manifests.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mission_core::mdp::Policy;

use crate::CliError;

/// Fixed 17-significant-digit scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header plus rows, comma separated, one trailing newline per row.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { text: columns.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_bytes(path, self.text.as_bytes())
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

const POLICY_MAGIC: &str = "mission-policy v1";

/// Policy as a one-line text header followed by the raw action bytes.
pub fn write_policy(path: &Path, policy: &Policy, model_hash: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Internal(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{POLICY_MAGIC} states={} horizon={} model={model_hash}", policy.num_states(), policy.horizon()).map_err(io)?;
    w.write_all(policy.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_policy(path: &Path, model_hash: &str) -> Result<Policy, CliError> {
    let file = File::open(path).map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(file);
    let mut header = String::new();
    r.read_line(&mut header).map_err(|e| bad(&e.to_string()))?;
    let fields: Vec<&str> = header.trim_end().split(' ').collect();
    if fields.len() != 5 || format!("{} {}", fields[0], fields[1]) != POLICY_MAGIC {
        return Err(bad("not a policy file"));
    }
    let value = |f: &str, key: &str| f.strip_prefix(key).map(str::to_owned).ok_or_else(|| bad("malformed header"));
    let states: usize = value(fields[2], "states=")?.parse().map_err(|_| bad("malformed header"))?;
    let horizon: usize = value(fields[3], "horizon=")?.parse().map_err(|_| bad("malformed header"))?;
    if value(fields[4], "model=")? != model_hash {
        return Err(bad("solved for a different configuration or mode; rerun solve"));
    }
    let mut bytes = Vec::with_capacity(states * horizon);
    r.read_to_end(&mut bytes).map_err(|e| bad(&e.to_string()))?;
    Policy::from_bytes(states, horizon, bytes).map_err(|e| bad(&e.to_string()))
}

/// Little-endian `f64` values after a one-line header.
pub fn write_values(path: &Path, values: &[f64], step: usize) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Internal(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "mission-values v1 states={} step={step} f64le", values.len()).map_err(io)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let mut f = File::open(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

/// Everything needed to repeat a run, plus how long it took.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: PathBuf,
    pub inputs: Vec<PathBuf>,
    /// Hash of the configuration and data files.
    pub config_hash: String,
    /// Hash of `config_hash` plus every option that changes numerical output.
    pub run_hash: String,
    pub options: serde_json::Value,
    pub timings: Vec<PhaseTiming>,
    pub peak_memory_kib: Option<u64>,
    pub statistics: serde_json::Value,
    pub outputs: Vec<OutputFile>,
}

/// Resident-set high-water mark of this process, from procfs.
pub fn peak_memory_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

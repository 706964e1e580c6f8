//! Append-only run log: one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::guided::Directive;
use crate::model::Scenario;

use super::save_scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub timestamp_ms: u64,
    /// Hex SHA-256 of the canonical scenario document.
    pub scenario_sha256: String,
    pub strategy: String,
    #[serde(default)]
    pub directives: Vec<Directive>,
    pub objective: f64,
    pub feasible: bool,
}

impl RunRecord {
    pub fn now(scenario: &Scenario, strategy: &str, directives: Vec<Directive>, objective: f64, feasible: bool) -> Self {
        let timestamp_ms =
            SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
        Self { timestamp_ms, scenario_sha256: scenario_hash(scenario), strategy: strategy.into(), directives, objective, feasible }
    }
}

/// Hex SHA-256 of the canonical document form of `scenario`.
pub fn scenario_hash(scenario: &Scenario) -> String {
    let digest = Sha256::digest(save_scenario(scenario).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("run log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("run log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct RunLog {
    path: PathBuf,
}

impl RunLog {
    /// Opens the log at `path`, creating an empty file if needed.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RunLogError> {
        let path = path.into();
        OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one record. The file is locked exclusively for the write, so
    /// concurrent writers (threads or processes) never interleave lines.
    pub fn append(&self, record: &RunRecord) -> Result<(), RunLogError> {
        let mut line = serde_json::to_string(record).expect("run records always serialize");
        line.push('\n');
        let mut file = OpenOptions::new().append(true).open(&self.path)?;
        file.lock()?;
        let res = file.write_all(line.as_bytes()).and_then(|_| file.sync_data());
        file.unlock()?;
        res.map_err(RunLogError::from)
    }

    /// Every record, in the order appended.
    pub fn read(&self) -> Result<Vec<RunRecord>, RunLogError> {
        let file = File::open(&self.path)?;
        file.lock_shared()?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| RunLogError::Corrupt { line: i + 1, message: e.to_string() })?;
            out.push(rec);
        }
        file.unlock()?;
        Ok(out)
    }
}

//! Text formats: `.scenario` and `.plan` documents (TOML) and the JSON-lines
//! run log.

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::validate::{codes, ValidationIssue};

mod plan;
mod runlog;
mod scenario;

pub use plan::{load_plan, save_plan, PlanDocument};
pub use runlog::{scenario_hash, RunLog, RunLogError, RunRecord};
pub use scenario::{
    load_scenario, save_scenario, AdjustmentDoc, AttributeDoc, CurveDoc, DriftDoc, KnotDoc, LogisticsDoc, MarketDoc,
    ProductDoc, RangeDoc, RomDoc, ScenarioDocument,
};

/// The only document schema this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    /// The text could not be read as a document of the expected shape.
    #[error("{}", first_message(.0))]
    Malformed(Vec<ValidationIssue>),
    /// The document parsed but describes an invalid scenario or plan.
    #[error("{}", first_message(.0))]
    Invalid(Vec<ValidationIssue>),
}

fn first_message(issues: &[ValidationIssue]) -> String {
    match issues {
        [] => "invalid document".into(),
        [one] => one.to_string(),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
    }
}

impl DocumentError {
    pub fn issues(&self) -> &[ValidationIssue] {
        match self {
            DocumentError::Malformed(v) | DocumentError::Invalid(v) => v,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn toml_issue(text: &str, err: &toml::de::Error) -> ValidationIssue {
    let msg = err.message().to_string();
    let code = if msg.contains("unknown field") { codes::UNKNOWN_FIELD } else { codes::SYNTAX };
    let path = err.span().map_or_else(|| "document".to_string(), |s| format!("line {}", line_of(text, s.start)));
    ValidationIssue::new(code, path, msg)
}

/// Checks `schema_version`, then parses strictly into `T`.
pub(crate) fn parse_document<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DocumentError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        DocumentError::Malformed(vec![ValidationIssue::new(codes::SYNTAX, "document", format!("not UTF-8: {e}"))])
    })?;
    let table: toml::Table =
        toml::from_str(text).map_err(|e| DocumentError::Malformed(vec![toml_issue(text, &e)]))?;
    match table.get("schema_version") {
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(v) => {
            return Err(DocumentError::Malformed(vec![ValidationIssue::new(
                codes::SCHEMA_VERSION,
                "schema_version",
                format!("unsupported schema version {v}; expected {SCHEMA_VERSION}"),
            )]))
        }
        None => {
            return Err(DocumentError::Malformed(vec![ValidationIssue::new(
                codes::SCHEMA_VERSION,
                "schema_version",
                "schema_version is missing",
            )]))
        }
    }
    toml::from_str(text).map_err(|e| DocumentError::Malformed(vec![toml_issue(text, &e)]))
}

/// TOML text for any serializable value whose top level is a table: results,
/// reports, sessions. Used for every machine-readable output so that the
/// library, the CLI and the server produce the same bytes.
pub fn to_document<T: serde::Serialize>(value: &T) -> String {
    toml::to_string(value).expect("documents always serialize to TOML")
}

/// Reads back anything written by [`to_document`].
pub fn from_document<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DocumentError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        DocumentError::Malformed(vec![ValidationIssue::new(codes::SYNTAX, "document", format!("not UTF-8: {e}"))])
    })?;
    toml::from_str(text).map_err(|e| DocumentError::Malformed(vec![toml_issue(text, &e)]))
}

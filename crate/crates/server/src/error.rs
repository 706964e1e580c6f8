use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use blendforge_core::guided::DirectiveError;
use blendforge_core::io::{to_document, DocumentError};
use blendforge_core::optimizer::OptimizeError;
use blendforge_core::ValidationIssue;
use serde::Serialize;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    /// 422, with field paths when a document failed to load.
    Invalid { message: String, issues: Vec<ValidationIssue>, conflict: Option<[String; 2]> },
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    conflict: Option<&'a [String; 2]>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    issues: &'a [ValidationIssue],
}

impl ApiError {
    pub fn from_document(err: DocumentError) -> Self {
        ApiError::Invalid { message: err.to_string(), issues: err.issues().to_vec(), conflict: None }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::Invalid { message: message.into(), issues: Vec::new(), conflict: None }
    }
}

impl From<OptimizeError> for ApiError {
    fn from(err: OptimizeError) -> Self {
        match err {
            OptimizeError::InvalidScenario(issues) => {
                ApiError::Invalid { message: "scenario is invalid".into(), issues, conflict: None }
            }
            other => ApiError::invalid(other.to_string()),
        }
    }
}

impl From<DirectiveError> for ApiError {
    fn from(err: DirectiveError) -> Self {
        let conflict = err.conflict().map(|(a, b)| [a.to_string(), b.to_string()]);
        ApiError::Invalid { message: err.to_string(), issues: Vec::new(), conflict }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message, issues, conflict) = match &self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m.as_str(), &[][..], None),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m.as_str(), &[][..], None),
            ApiError::Invalid { message, issues, conflict } => {
                (StatusCode::UNPROCESSABLE_ENTITY, message.as_str(), issues.as_slice(), conflict.as_ref())
            }
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m.as_str(), &[][..], None),
        };
        crate::toml_response(status, to_document(&ErrorBody { error: message, conflict, issues }))
    }
}

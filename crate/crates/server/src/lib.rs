//! HTTP service over the blend planning engine.
//!
//! Request and response bodies are TOML documents, the same format the
//! engine reads and writes on disk. Optimization runs execute on a bounded
//! worker pool and are polled; guided sessions keep an incumbent plan that
//! changes only when a directive set succeeds.
//!
//! See `docs/format.md` for every endpoint and body.

mod error;
mod runs;
mod sessions;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use blendforge_core::io::{load_scenario, save_scenario, RunLog, RunRecord};
use blendforge_core::Scenario;
use tokio::sync::Semaphore;

pub use error::ApiError;
pub use runs::{RunHandle, RunState};
pub use sessions::{GuidedResponse, SessionView};

pub const TOML_CONTENT_TYPE: &str = "application/toml";

/// Shared server state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    scenarios: Mutex<HashMap<String, Arc<Scenario>>>,
    runs: Mutex<HashMap<String, Arc<runs::Run>>>,
    sessions: Mutex<HashMap<String, Arc<sessions::SessionSlot>>>,
    workers: Arc<Semaphore>,
    runlog: Option<RunLog>,
    next_id: AtomicU64,
}

impl AppState {
    /// `workers` bounds how many optimizations run at once.
    pub fn new(workers: usize, runlog: Option<RunLog>) -> Self {
        Self {
            inner: Arc::new(Inner {
                scenarios: Mutex::new(HashMap::new()),
                runs: Mutex::new(HashMap::new()),
                sessions: Mutex::new(HashMap::new()),
                workers: Arc::new(Semaphore::new(workers.max(1))),
                runlog,
                next_id: AtomicU64::new(1),
            }),
        }
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}-{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn scenario(&self, id: &str) -> Result<Arc<Scenario>, ApiError> {
        self.inner
            .scenarios
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no scenario `{id}`")))
    }

    fn log(&self, record: RunRecord) {
        if let Some(log) = &self.inner.runlog {
            if let Err(e) = log.append(&record) {
                eprintln!("run log: {e}");
            }
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenarios/{id}", put(put_scenario).get(get_scenario))
        .route("/scenarios/{id}/optimize", post(runs::start))
        .route("/runs/{id}", get(runs::poll).delete(runs::cancel))
        .route("/runs/{id}/result", get(runs::result))
        .route("/sessions", post(sessions::open))
        .route("/sessions/{id}", get(sessions::show))
        .route("/sessions/{id}/directives", post(sessions::apply))
        .route("/sessions/{id}/what-if", post(sessions::what_if))
        .route("/sessions/{id}/analytics", get(sessions::analytics))
        .with_state(state)
}

pub(crate) fn toml_response(status: StatusCode, body: String) -> Response {
    (status, [(axum::http::header::CONTENT_TYPE, TOML_CONTENT_TYPE)], body).into_response()
}

async fn put_scenario(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let scenario = load_scenario(&body).map_err(ApiError::from_document)?;
    let text = save_scenario(&scenario);
    let fresh = state.inner.scenarios.lock().unwrap().insert(id, Arc::new(scenario)).is_none();
    let status = if fresh { StatusCode::CREATED } else { StatusCode::OK };
    Ok(toml_response(status, text))
}

async fn get_scenario(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let scenario = state.scenario(&id)?;
    Ok(toml_response(StatusCode::OK, save_scenario(&scenario)))
}

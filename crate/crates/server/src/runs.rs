//! Polled optimization runs.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use blendforge_core::io::{from_document, to_document, RunRecord};
use blendforge_core::optimizer::{optimize_with, OptimizeResult, RunControl, Strategy};
use blendforge_core::Scenario;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::{toml_response, ApiError, AppState};

/// How long a cancel request waits for the run to stop before answering.
const CANCEL_WAIT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunState {
    Queued,
    Running,
    Done,
    Cancelled,
    Failed,
}

impl RunState {
    pub fn is_finished(self) -> bool {
        matches!(self, RunState::Done | RunState::Cancelled | RunState::Failed)
    }

    fn rank(self) -> u8 {
        match self {
            RunState::Queued => 0,
            RunState::Running => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub run_id: String,
    pub state: RunState,
    /// Evaluations done so far, out of `budget`.
    pub evaluations: u64,
    pub budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<OptimizeResult>,
}

#[derive(Debug, Clone)]
struct Status {
    state: RunState,
    result: Option<Arc<OptimizeResult>>,
    error: Option<String>,
}

pub(crate) struct Run {
    id: String,
    budget: u64,
    control: Arc<RunControl>,
    status: watch::Sender<Status>,
}

impl Run {
    /// Moves the run forward; a finished run never changes again.
    fn advance(&self, state: RunState, result: Option<Arc<OptimizeResult>>, error: Option<String>) {
        self.status.send_if_modified(|s| {
            if state.rank() <= s.state.rank() {
                return false;
            }
            *s = Status { state, result, error };
            true
        });
    }

    fn handle(&self) -> RunHandle {
        let s = self.status.borrow().clone();
        let evaluations = s.result.as_ref().map_or_else(|| self.control.evaluations(), |r| r.evaluations);
        RunHandle {
            run_id: self.id.clone(),
            state: s.state,
            evaluations,
            budget: self.budget,
            error: s.error,
            result: s.result.map(|r| (*r).clone()),
        }
    }
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Run>, ApiError> {
    state.inner.runs.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no run `{id}`")))
}

fn handle_response(status: StatusCode, run: &Run) -> Response {
    toml_response(status, to_document(&run.handle()))
}

pub(crate) async fn start(
    State(state): State<AppState>,
    Path(scenario_id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let scenario = state.scenario(&scenario_id)?;
    let strategy: Strategy = from_document(&body).map_err(ApiError::from_document)?;
    strategy.validate()?;
    let (status, _) = watch::channel(Status { state: RunState::Queued, result: None, error: None });
    let run = Arc::new(Run {
        id: state.fresh_id("run"),
        budget: strategy.budget_evaluations,
        control: Arc::new(RunControl::new()),
        status,
    });
    state.inner.runs.lock().unwrap().insert(run.id.clone(), run.clone());
    tokio::spawn(execute(state, run.clone(), scenario, strategy));
    Ok(handle_response(StatusCode::ACCEPTED, &run))
}

async fn execute(state: AppState, run: Arc<Run>, scenario: Arc<Scenario>, strategy: Strategy) {
    let Ok(_permit) = state.inner.workers.clone().acquire_owned().await else { return };
    if run.control.is_cancelled() {
        run.advance(RunState::Cancelled, None, None);
        return;
    }
    run.advance(RunState::Running, None, None);
    let control = run.control.clone();
    let job = {
        let scenario = scenario.clone();
        let strategy = strategy.clone();
        tokio::task::spawn_blocking(move || optimize_with(&scenario, &strategy, None, &control))
    };
    match job.await {
        Ok(Ok(result)) => {
            state.log(RunRecord::now(&scenario, strategy.name.as_str(), Vec::new(), result.objective, result.feasible));
            let end = if result.cancelled { RunState::Cancelled } else { RunState::Done };
            run.advance(end, Some(Arc::new(result)), None);
        }
        Ok(Err(e)) => run.advance(RunState::Failed, None, Some(e.to_string())),
        Err(e) => run.advance(RunState::Failed, None, Some(format!("worker stopped: {e}"))),
    }
}

pub(crate) async fn poll(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let run = lookup(&state, &id)?;
    Ok(handle_response(StatusCode::OK, &run))
}

/// Requests cancellation and answers once the run has stopped.
pub(crate) async fn cancel(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let run = lookup(&state, &id)?;
    let current = run.status.borrow().state;
    if current.is_finished() {
        return Err(ApiError::Conflict(format!("run `{id}` already finished ({current:?})")));
    }
    run.control.cancel();
    if current == RunState::Queued {
        run.advance(RunState::Cancelled, None, None);
    }
    let mut rx = run.status.subscribe();
    let _ = tokio::time::timeout(CANCEL_WAIT, rx.wait_for(|s| s.state.is_finished())).await;
    Ok(handle_response(StatusCode::OK, &run))
}

/// The bare result document of a finished run.
pub(crate) async fn result(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let run = lookup(&state, &id)?;
    let status = run.status.borrow().clone();
    match status.result {
        Some(r) => Ok(toml_response(StatusCode::OK, to_document(&*r))),
        None => Err(ApiError::Conflict(format!("run `{id}` has no result ({:?})", status.state))),
    }
}

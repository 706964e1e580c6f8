//! Guided sessions: directives, what-if previews and analytics.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::Response;
use blendforge_core::analytics::{analyze, AnalyticsOptions};
use blendforge_core::guided::{open_session, plan_delta, Directive, GuidedOutcome, HistoryEntry, PlanDelta, Session};
use blendforge_core::io::{from_document, to_document, RunRecord};
use blendforge_core::optimizer::{OptimizeResult, RunControl, Strategy};
use serde::{Deserialize, Serialize};

use crate::{toml_response, ApiError, AppState};

pub(crate) struct SessionSlot {
    scenario_id: String,
    session: Mutex<Session>,
    /// Set while a directive run is in flight.
    busy: AtomicBool,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenBody {
    scenario_id: String,
    strategy: Strategy,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectivesBody {
    #[serde(default)]
    directives: Vec<Directive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub scenario_id: String,
    pub strategy: Strategy,
    /// Every directive in force, in the order applied.
    pub directives: Vec<Directive>,
    pub incumbent: OptimizeResult,
    pub history: Vec<HistoryEntry>,
}

/// Answer to a directive or what-if request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedResponse {
    pub outcome: GuidedOutcome,
    /// Against the incumbent at the time of the request; absent when
    /// infeasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<PlanDelta>,
    pub history_length: usize,
}

fn view(slot: &SessionSlot, session: &Session) -> SessionView {
    SessionView {
        session_id: session.id.clone(),
        scenario_id: slot.scenario_id.clone(),
        strategy: session.strategy.clone(),
        directives: session.directives().to_vec(),
        incumbent: session.incumbent_result().clone(),
        history: session.history().to_vec(),
    }
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
    state
        .inner
        .sessions
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("no session `{id}`")))
}

fn parse_directives(body: &[u8]) -> Result<Vec<Directive>, ApiError> {
    let body: DirectivesBody = from_document(body).map_err(ApiError::from_document)?;
    Ok(body.directives)
}

/// Runs blocking engine work on the worker pool.
async fn on_worker<T: Send + 'static>(state: &AppState, job: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    let _permit = state.inner.workers.clone().acquire_owned().await.map_err(|e| ApiError::Internal(e.to_string()))?;
    tokio::task::spawn_blocking(job).await.map_err(|e| ApiError::Internal(format!("worker stopped: {e}")))
}

fn respond(before: &OptimizeResult, outcome: GuidedOutcome, session: &Session) -> Result<GuidedResponse, ApiError> {
    let delta = match &outcome {
        GuidedOutcome::Applied(after) => Some(
            plan_delta(
                &session.scenario,
                (&before.plan, &before.report, before.objective),
                (&after.plan, &after.report, after.objective),
            )
            .map_err(|e| ApiError::Internal(e.to_string()))?,
        ),
        GuidedOutcome::Infeasible(_) => None,
    };
    Ok(GuidedResponse { outcome, delta, history_length: session.history().len() })
}

pub(crate) async fn open(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: OpenBody = from_document(&body).map_err(ApiError::from_document)?;
    let scenario = state.scenario(&body.scenario_id)?;
    body.strategy.validate()?;
    let id = state.fresh_id("session");
    let session = {
        let (id, strategy) = (id.clone(), body.strategy.clone());
        on_worker(&state, move || open_session(id, scenario, strategy)).await??
    };
    let slot = Arc::new(SessionSlot { scenario_id: body.scenario_id, session: Mutex::new(session), busy: AtomicBool::new(false) });
    let text = to_document(&view(&slot, &slot.session.lock().unwrap()));
    state.inner.sessions.lock().unwrap().insert(id, slot);
    Ok(toml_response(StatusCode::CREATED, text))
}

pub(crate) async fn show(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = lookup(&state, &id)?;
    let text = to_document(&view(&slot, &slot.session.lock().unwrap()));
    Ok(toml_response(StatusCode::OK, text))
}

/// Applies directives; the session changes only when the outcome is applied.
/// A second request while one is running gets 409.
pub(crate) async fn apply(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let slot = lookup(&state, &id)?;
    let directives = parse_directives(&body)?;
    if slot.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
        return Err(ApiError::Conflict(format!("session `{id}` is already applying directives")));
    }
    let _guard = BusyGuard(&slot.busy);
    let mut work = slot.session.lock().unwrap().clone();
    let before = work.incumbent_result().clone();
    let (outcome, work) = on_worker(&state, move || {
        let outcome = work.apply(&directives, &RunControl::new());
        (outcome, work)
    })
    .await?;
    let outcome = outcome?;
    if let GuidedOutcome::Applied(r) = &outcome {
        let applied = work.history().last().map(|h| h.directives.clone()).unwrap_or_default();
        state.log(RunRecord::now(&work.scenario, work.strategy.name.as_str(), applied, r.objective, r.feasible));
        *slot.session.lock().unwrap() = work.clone();
    }
    let response = respond(&before, outcome, &work)?;
    Ok(toml_response(StatusCode::OK, to_document(&response)))
}

/// Previews directives without touching the session.
pub(crate) async fn what_if(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let slot = lookup(&state, &id)?;
    let directives = parse_directives(&body)?;
    let snapshot = slot.session.lock().unwrap().clone();
    let (outcome, snapshot) = on_worker(&state, move || {
        let outcome = snapshot.preview(&directives, &RunControl::new());
        (outcome, snapshot)
    })
    .await?;
    let response = respond(snapshot.incumbent_result(), outcome?, &snapshot)?;
    Ok(toml_response(StatusCode::OK, to_document(&response)))
}

pub(crate) async fn analytics(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = lookup(&state, &id)?;
    let snapshot = slot.session.lock().unwrap().clone();
    let report = on_worker(&state, move || {
        analyze(&snapshot.scenario, snapshot.incumbent(), &snapshot.strategy, &AnalyticsOptions::default())
    })
    .await?
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(toml_response(StatusCode::OK, to_document(&report)))
}

//! Plan search.
//!
//! Every strategy starts from the repaired satisficing plan and walks the
//! plan space with repaired random moves. Strategies differ in what they
//! rank plans by: NPV for `local-search` and `anneal`, and the rule of thumb
//! they are named after for the three heuristics. Plans with fewer
//! violations always rank first.

mod constraints;
mod initial;
mod moves;
mod repair;
mod search;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PlanError;
use crate::eval::{evaluate_grid_report, EvaluationReport};
use crate::model::Scenario;
use crate::plan::{BlendPlan, PlanGrid};
use crate::validate::ValidationIssue;

pub use constraints::{
    CheckError, ConstraintError, ConstraintSet, ConstraintViolation, Exclusion, Pin, QualityBound, Reservation,
    TonnageBound,
};
pub(crate) use constraints::Compiled;
pub use initial::initial_plan;
pub(crate) use initial::initial_grid;
pub use moves::{cut_ladder, neighbors};
pub use repair::{repair, Repaired};
pub(crate) use repair::repair_grid;
pub(crate) use search::{run_search, SearchOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    GreedyProfitFirst,
    AvgValue,
    MaxTonnes,
    LocalSearch,
    Anneal,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::GreedyProfitFirst,
        StrategyKind::AvgValue,
        StrategyKind::MaxTonnes,
        StrategyKind::LocalSearch,
        StrategyKind::Anneal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::GreedyProfitFirst => "greedy-profit-first",
            StrategyKind::AvgValue => "avg-value",
            StrategyKind::MaxTonnes => "max-tonnes",
            StrategyKind::LocalSearch => "local-search",
            StrategyKind::Anneal => "anneal",
        }
    }

    pub fn is_heuristic(self) -> bool {
        matches!(self, StrategyKind::GreedyProfitFirst | StrategyKind::AvgValue | StrategyKind::MaxTonnes)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = OptimizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| OptimizeError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Npv,
    Revenue,
}

fn default_budget() -> u64 {
    20_000
}

fn default_restarts() -> u32 {
    1
}

fn default_temperature() -> f64 {
    1.0
}

fn default_subdivisions() -> u32 {
    4
}

/// A named strategy with its parameters. Temperatures are dimensionless:
/// objective differences are scaled by the mean change seen over a sample of
/// neighbours before the search starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strategy {
    pub name: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_budget")]
    pub budget_evaluations: u64,
    #[serde(default = "default_restarts")]
    pub restarts: u32,
    #[serde(default = "default_temperature")]
    pub initial_temperature: f64,
    /// Per-evaluation cooling; by default the temperature falls 1000-fold
    /// over each restart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cooling_factor: Option<f64>,
    /// Cut-points are searched on the curve knots with each interval split
    /// this many times.
    #[serde(default = "default_subdivisions")]
    pub cut_subdivisions: u32,
    /// Half-width of continuous cut-point jitter in g/cc; 0 keeps cuts on the grid.
    #[serde(default)]
    pub cut_jitter: f64,
    #[serde(default)]
    pub objective: Objective,
}

impl Strategy {
    pub fn new(name: StrategyKind) -> Self {
        Self {
            name,
            seed: None,
            budget_evaluations: default_budget(),
            restarts: default_restarts(),
            initial_temperature: default_temperature(),
            cooling_factor: None,
            cut_subdivisions: default_subdivisions(),
            cut_jitter: 0.0,
            objective: Objective::Npv,
        }
    }

    pub fn seeded(name: StrategyKind, seed: u64) -> Self {
        Self { seed: Some(seed), ..Self::new(name) }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget_evaluations = budget;
        self
    }

    pub fn with_restarts(mut self, restarts: u32) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |name: &str, reason: &str| Err(OptimizeError::InvalidParameter { name: name.into(), reason: reason.into() });
        if self.seed.is_none() && !self.name.is_heuristic() {
            return Err(OptimizeError::MissingSeed(self.name));
        }
        if self.restarts == 0 {
            return bad("restarts", "must be at least 1");
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature >= 0.0) {
            return bad("initial_temperature", "must be finite and non-negative");
        }
        if let Some(c) = self.cooling_factor {
            if !(c > 0.0 && c <= 1.0) {
                return bad("cooling_factor", "must lie in (0, 1]");
            }
        }
        if self.cut_subdivisions == 0 {
            return bad("cut_subdivisions", "must be at least 1");
        }
        if !(self.cut_jitter.is_finite() && self.cut_jitter >= 0.0) {
            return bad("cut_jitter", "must be finite and non-negative");
        }
        Ok(())
    }

    pub(crate) fn rng_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluation: u64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub strategy: Strategy,
    pub objective: f64,
    pub feasible: bool,
    pub evaluations: u64,
    pub cancelled: bool,
    /// Incumbent improvements while feasible, in the strategy's own ranking
    /// measure (NPV or revenue for the search strategies).
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraint_violations: Vec<ConstraintViolation>,
    pub plan: BlendPlan,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("strategy `{0}` needs a seed")]
    MissingSeed(StrategyKind),
    #[error("invalid strategy parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("scenario is invalid ({} problems)", .0.len())]
    InvalidScenario(Vec<ValidationIssue>),
    #[error("comparing strategies needs at least two")]
    TooFewStrategies,
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Cooperative cancellation and progress for a running search.
#[derive(Debug, Default)]
pub struct RunControl {
    cancel: AtomicBool,
    evaluations: AtomicU64,
}

impl RunControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub(crate) fn tick(&self) {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
    }
}

/// Runs `strategy` on `scenario`, honouring `constraints` as hard bounds.
pub fn optimize(
    scenario: &Scenario,
    strategy: &Strategy,
    constraints: Option<&ConstraintSet>,
) -> Result<OptimizeResult, OptimizeError> {
    optimize_with(scenario, strategy, constraints, &RunControl::new())
}

pub fn optimize_with(
    scenario: &Scenario,
    strategy: &Strategy,
    constraints: Option<&ConstraintSet>,
    control: &RunControl,
) -> Result<OptimizeResult, OptimizeError> {
    let (result, _) = optimize_from(scenario, strategy, constraints, None, control)?;
    Ok(result)
}

/// Shared entry point; `start` replaces the satisficing plan as the initial
/// incumbent. Also returns the near-optimal plans seen along the way.
pub(crate) fn optimize_from(
    scenario: &Scenario,
    strategy: &Strategy,
    constraints: Option<&ConstraintSet>,
    start: Option<&PlanGrid>,
    control: &RunControl,
) -> Result<(OptimizeResult, SearchOutput), OptimizeError> {
    strategy.validate()?;
    let issues = scenario.validate();
    if !issues.is_empty() {
        return Err(OptimizeError::InvalidScenario(issues));
    }
    let compiled = match constraints {
        Some(set) => Compiled::new(scenario, set)?,
        None => Compiled::unconstrained(scenario),
    };
    let initial = match start {
        Some(grid) => {
            let mut g = grid.clone();
            repair_grid(&compiled, &mut g);
            g
        }
        None => initial_grid(&compiled),
    };
    let output = run_search(&compiled, strategy, initial, control);
    let result = finish(scenario, strategy, &compiled, &output);
    Ok((result, output))
}

pub(crate) fn finish(scenario: &Scenario, strategy: &Strategy, compiled: &Compiled, output: &SearchOutput) -> OptimizeResult {
    let report = evaluate_grid_report(scenario, &output.best);
    let plan = output.best.to_plan(scenario);
    let constraint_violations = compiled.violations_of(&output.best);
    let objective = match strategy.objective {
        Objective::Npv => report.npv,
        Objective::Revenue => report.total_revenue,
    };
    OptimizeResult {
        strategy: strategy.clone(),
        objective,
        feasible: report.is_feasible() && constraint_violations.is_empty(),
        evaluations: output.evaluations,
        cancelled: output.cancelled,
        trace: output.trace.clone(),
        constraint_violations,
        plan,
        report,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub strategy: String,
    pub objective: f64,
    pub feasible: bool,
}

/// Runs each strategy independently and ranks them by objective.
pub fn compare_strategies(scenario: &Scenario, strategies: &[Strategy]) -> Result<Vec<RankingRow>, OptimizeError> {
    if strategies.len() < 2 {
        return Err(OptimizeError::TooFewStrategies);
    }
    let mut rows = Vec::with_capacity(strategies.len());
    for s in strategies {
        let r = optimize(scenario, s, None)?;
        rows.push(RankingRow { strategy: s.name.to_string(), objective: r.objective, feasible: r.feasible });
    }
    rows.sort_by(|a, b| b.objective.total_cmp(&a.objective).then_with(|| a.strategy.cmp(&b.strategy)));
    Ok(rows)
}

//! Blend analytics: where a blend's quality comes from, how much room is
//! left on each capacity, what one more tonne of a ROM is worth, how prices
//! move the plan, and how long a stockpile stays usable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PlanError;
use crate::eval::{evaluate_grid, Outcome, ViolationCode};
use crate::guided::explore;
use crate::model::Scenario;
use crate::optimizer::{Objective, OptimizeError, RunControl, Strategy};
use crate::plan::{BlendPlan, PlanGrid};
use crate::pricing::check_spec;
use crate::quality::{blend_quality, degrade_quality};
use crate::QualityVector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("unknown ROM `{0}`")]
    UnknownRom(String),
    #[error("period {period} outside horizon of {horizon}")]
    PeriodOutOfRange { period: usize, horizon: usize },
    #[error("{0} must be finite and positive")]
    BadDelta(&'static str),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

fn product_index(scenario: &Scenario, id: &str) -> Result<usize, AnalyticsError> {
    scenario.product_index(id).ok_or_else(|| AnalyticsError::UnknownProduct(id.into()))
}

fn rom_index(scenario: &Scenario, id: &str) -> Result<usize, AnalyticsError> {
    scenario.rom_index(id).ok_or_else(|| AnalyticsError::UnknownRom(id.into()))
}

fn objective_of(strategy: &Strategy, outcome: &Outcome) -> f64 {
    match strategy.objective {
        Objective::Npv => outcome.npv,
        Objective::Revenue => outcome.total_revenue,
    }
}

/// One ROM's part in a blend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub rom: String,
    pub feed_lots: u32,
    /// Washed tonnes entering the blend.
    pub tonnes: f64,
    /// Washed tonnes over blend tonnes.
    pub share: f64,
    /// Share times the ROM's washed value, per attribute.
    pub attributes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendContribution {
    pub product: String,
    pub period: usize,
    pub contributions: Vec<Contribution>,
}

/// Per-ROM breakdown of one blend; empty when the blend has no tonnage.
pub fn quality_contribution(
    scenario: &Scenario,
    plan: &BlendPlan,
    product: &str,
    period: usize,
) -> Result<Vec<Contribution>, AnalyticsError> {
    let p = product_index(scenario, product)?;
    if period >= scenario.horizon_periods {
        return Err(AnalyticsError::PeriodOutOfRange { period, horizon: scenario.horizon_periods });
    }
    let grid = PlanGrid::bind(scenario, plan)?;
    let outcome = evaluate_grid(scenario, &grid);
    Ok(contributions(scenario, &grid, &outcome, p, period))
}

fn contributions(scenario: &Scenario, grid: &PlanGrid, outcome: &Outcome, p: usize, t: usize) -> Vec<Contribution> {
    let blend = outcome.blend(scenario.products.len(), t, p);
    if blend.tonnes <= 0.0 {
        return Vec::new();
    }
    let roms = scenario.roms.len();
    let attrs = scenario.registry.len();
    let lot = scenario.logistics.lot_size_tonnes;
    (0..roms)
        .filter(|&r| grid.lots(t, p, r) > 0)
        .map(|r| {
            let i = t * roms + r;
            let lots = grid.lots(t, p, r);
            let tonnes = lots as f64 * lot * outcome.yields[i];
            let share = tonnes / blend.tonnes;
            let q = &outcome.washed_quality[i * attrs..(i + 1) * attrs];
            Contribution {
                rom: scenario.roms[r].id.clone(),
                feed_lots: lots,
                tonnes,
                share,
                attributes: (0..attrs).map(|a| (scenario.registry.code(a).to_string(), share * q[a])).collect(),
            }
        })
        .collect()
}

/// Room left on one capacity or commitment. Negative means broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackRow {
    pub code: ViolationCode,
    pub period: usize,
    pub subject: String,
    pub limit: f64,
    pub usage: f64,
    pub slack: f64,
}

/// Signed slack of every availability, haul, wash, tonnage-target and
/// contract constraint. A row is negative exactly when
/// [`evaluate_plan`](crate::evaluate_plan) reports the matching violation.
pub fn constraint_slack(scenario: &Scenario, plan: &BlendPlan) -> Result<Vec<SlackRow>, PlanError> {
    let grid = PlanGrid::bind(scenario, plan)?;
    Ok(slack_rows(scenario, &evaluate_grid(scenario, &grid)))
}

fn slack_rows(scenario: &Scenario, outcome: &Outcome) -> Vec<SlackRow> {
    let mut rows: Vec<SlackRow> = outcome
        .slacks
        .iter()
        .filter(|s| s.code != ViolationCode::RehandleStock)
        .map(|s| SlackRow {
            code: s.code,
            period: s.period,
            subject: s.subject.label(scenario),
            limit: s.limit,
            usage: s.usage,
            slack: s.slack,
        })
        .collect();
    rows.sort_by(|a, b| (a.period, a.code, &a.subject).cmp(&(b.period, b.code, &b.subject)));
    rows
}

/// Best objective reachable from `plan` on `scenario`, and the plan reaching it.
fn reoptimized(
    scenario: &Scenario,
    strategy: &Strategy,
    start: &PlanGrid,
) -> Result<(f64, PlanGrid), OptimizeError> {
    let (_, output) = explore(scenario, strategy, None, start, &RunControl::new())?;
    let best = output
        .elite
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.lots_slice().cmp(a.0.lots_slice())))
        .map(|(g, o)| (*o, g.clone()));
    Ok(best.unwrap_or_else(|| {
        let outcome = evaluate_grid(scenario, &output.best);
        (objective_of(strategy, &outcome), output.best)
    }))
}

/// Money per extra tonne of `rom` made available in the first period.
///
/// Both sides are re-optimized from `plan` with the same strategy and seed;
/// the side with extra stock may also keep the other side's plan, so the
/// value is never negative.
pub fn marginal_rom_value(
    scenario: &Scenario,
    plan: &BlendPlan,
    rom: &str,
    delta_tonnes: f64,
    strategy: &Strategy,
) -> Result<f64, AnalyticsError> {
    let r = rom_index(scenario, rom)?;
    if !(delta_tonnes.is_finite() && delta_tonnes > 0.0) {
        return Err(AnalyticsError::BadDelta("delta_tonnes"));
    }
    let start = PlanGrid::bind(scenario, plan)?;
    let (base, base_plan) = reoptimized(scenario, strategy, &start)?;
    let mut more = scenario.clone();
    more.roms[r].available_tonnes[0] += delta_tonnes;
    let (bumped, _) = reoptimized(&more, strategy, &start)?;
    // extra stock leaves every plan's cashflows unchanged
    let kept = objective_of(strategy, &evaluate_grid(&more, &base_plan));
    Ok((bumped.max(kept) - base) / delta_tonnes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSensitivity {
    pub base_objective: f64,
    /// The plan itself, re-evaluated at the shifted price.
    pub shifted_objective: f64,
    /// Objective after re-optimizing at the shifted price.
    pub reoptimized_objective: f64,
    /// Whether re-optimizing at the shifted price picks a different plan
    /// than re-optimizing at the current one.
    pub plan_changed: bool,
}

fn shift_price(scenario: &Scenario, p: usize, delta: f64) -> Scenario {
    let mut s = scenario.clone();
    for v in &mut s.products[p].base_price {
        *v += delta;
    }
    s
}

pub fn price_sensitivity(
    scenario: &Scenario,
    plan: &BlendPlan,
    product: &str,
    price_delta: f64,
    strategy: &Strategy,
) -> Result<PriceSensitivity, AnalyticsError> {
    let p = product_index(scenario, product)?;
    if !price_delta.is_finite() {
        return Err(AnalyticsError::BadDelta("price_delta"));
    }
    let grid = PlanGrid::bind(scenario, plan)?;
    let shifted = shift_price(scenario, p, price_delta);
    let base_objective = objective_of(strategy, &evaluate_grid(scenario, &grid));
    let shifted_objective = objective_of(strategy, &evaluate_grid(&shifted, &grid));
    let (_, at_base) = reoptimized(scenario, strategy, &grid)?;
    let (reoptimized_objective, at_shift) = reoptimized(&shifted, strategy, &grid)?;
    Ok(PriceSensitivity {
        base_objective,
        shifted_objective,
        reoptimized_objective,
        plan_changed: at_base.lots_slice() != at_shift.lots_slice(),
    })
}

/// How long a ROM stays usable in a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "period", rename_all = "kebab-case")]
pub enum Deadline {
    /// In spec in every period of the horizon.
    Always,
    /// Off-spec from the first period on.
    Never,
    /// In spec up to and including this period, off-spec in the next.
    LastSafe(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDeadline {
    pub product: String,
    /// Period whose blend proportions were held fixed.
    pub reference_period: usize,
    pub deadline: Deadline,
}

/// For each product whose blend uses `rom`, the last period in which the
/// blend still meets spec when its proportions and cut-points are frozen at
/// the first period using the ROM and every component ages normally.
pub fn degradation_deadline(
    scenario: &Scenario,
    plan: &BlendPlan,
    rom: &str,
) -> Result<Vec<ProductDeadline>, AnalyticsError> {
    let target = rom_index(scenario, rom)?;
    let grid = PlanGrid::bind(scenario, plan)?;
    let outcome = evaluate_grid(scenario, &grid);
    let roms = scenario.roms.len();
    let attrs = scenario.registry.len();
    let ash = scenario.registry.ash_index();
    let mut out = Vec::new();
    for (p, spec) in scenario.products.iter().enumerate() {
        let Some(t0) = (0..scenario.horizon_periods).find(|&t| grid.lots(t, p, target) > 0) else { continue };
        let parts: Vec<(usize, f64)> = (0..roms)
            .filter(|&r| grid.lots(t0, p, r) > 0)
            .map(|r| (r, grid.lots(t0, p, r) as f64 * outcome.yields[t0 * roms + r]))
            .collect();
        let in_spec_at = |t: usize| {
            let washed: Vec<(f64, QualityVector)> = parts
                .iter()
                .map(|&(r, w)| {
                    let rom = &scenario.roms[r];
                    let mut q = degrade_quality(&scenario.registry, &rom.quality, scenario.rom_age_days(r, t), &rom.degradation);
                    if let Some(a) = ash {
                        // the cut fixes product ash whatever the feed
                        let i = (t0 * roms + r) * attrs + a;
                        if !grid.cut(t0, r).is_bypass() && rom.curve.is_some() {
                            q.set(a, outcome.washed_quality[i]);
                        }
                    }
                    (w, q)
                })
                .collect();
            let refs: Vec<(f64, &QualityVector)> = washed.iter().map(|(w, q)| (*w, q)).collect();
            blend_quality(&refs).map(|q| check_spec(&q, spec).is_empty()).unwrap_or(false)
        };
        let mut last = None;
        for t in 0..scenario.horizon_periods {
            if !in_spec_at(t) {
                break;
            }
            last = Some(t);
        }
        let deadline = match last {
            None => Deadline::Never,
            Some(t) if t + 1 == scenario.horizon_periods => Deadline::Always,
            Some(t) => Deadline::LastSafe(t),
        };
        out.push(ProductDeadline { product: spec.id.clone(), reference_period: t0, deadline });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsOptions {
    /// Extra tonnes offered when valuing each ROM.
    pub marginal_delta_tonnes: Option<f64>,
    /// Evaluation budget for each re-optimization behind a marginal value.
    pub marginal_budget: u64,
}

impl Default for AnalyticsOptions {
    fn default() -> Self {
        Self { marginal_delta_tonnes: None, marginal_budget: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomValue {
    pub rom: String,
    pub value_per_tonne: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomDeadlines {
    pub rom: String,
    pub products: Vec<ProductDeadline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub contributions: Vec<BlendContribution>,
    pub slacks: Vec<SlackRow>,
    pub marginals: Vec<RomValue>,
    pub deadlines: Vec<RomDeadlines>,
}

/// Every analysis for one plan. Marginal values default to one lot of extra
/// stock per ROM.
pub fn analyze(
    scenario: &Scenario,
    plan: &BlendPlan,
    strategy: &Strategy,
    options: &AnalyticsOptions,
) -> Result<AnalyticsReport, AnalyticsError> {
    let grid = PlanGrid::bind(scenario, plan)?;
    let outcome = evaluate_grid(scenario, &grid);
    let mut blends = Vec::new();
    for t in 0..scenario.horizon_periods {
        for (p, spec) in scenario.products.iter().enumerate() {
            let c = contributions(scenario, &grid, &outcome, p, t);
            if !c.is_empty() {
                blends.push(BlendContribution { product: spec.id.clone(), period: t, contributions: c });
            }
        }
    }
    let delta = options.marginal_delta_tonnes.unwrap_or(scenario.logistics.lot_size_tonnes);
    let mut budgeted = strategy.clone();
    budgeted.budget_evaluations = budgeted.budget_evaluations.min(options.marginal_budget);
    let mut marginals = Vec::with_capacity(scenario.roms.len());
    let mut deadlines = Vec::with_capacity(scenario.roms.len());
    for rom in &scenario.roms {
        marginals.push(RomValue {
            rom: rom.id.clone(),
            value_per_tonne: marginal_rom_value(scenario, plan, &rom.id, delta, &budgeted)?,
        });
        deadlines.push(RomDeadlines { rom: rom.id.clone(), products: degradation_deadline(scenario, plan, &rom.id)? });
    }
    Ok(AnalyticsReport { contributions: blends, slacks: slack_rows(scenario, &outcome), marginals, deadlines })
}

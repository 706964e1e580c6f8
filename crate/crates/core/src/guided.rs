//! Planner-guided re-optimization.
//!
//! A [`Session`] holds an incumbent plan. Planners push [`Directive`]s
//! ("lower ash by 2 points", "keep ROM C out of the coking blend") which are
//! compiled against the incumbent into hard constraints and handed to the
//! optimizer. Among the near-best plans found, the one closest to the
//! incumbent is kept so the result stays recognisable.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PlanError;
use crate::eval::{evaluate_grid, EvaluationReport};
use crate::model::Scenario;
use crate::optimizer::{
    optimize_from, SearchOutput, Compiled, Objective, ConstraintError, ConstraintSet, Exclusion, OptimizeError, OptimizeResult,
    Pin, QualityBound, Reservation, RunControl, Strategy, TonnageBound,
};
use crate::plan::{BlendPlan, CutPoint, PlanGrid};
use crate::quality::degrade_into;
use crate::space::enumerate_grids;

/// Plans within this fraction of the best objective count as equally good
/// when choosing the one closest to the incumbent.
pub const NEAR_BEST_FRACTION: f64 = 1e-3;

/// One planner instruction. Quality and tonnage deltas are relative to the
/// incumbent at the time the directive is applied; ash deltas are in
/// absolute percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Directive {
    PinAllotment {
        period: usize,
        product: String,
        rom: String,
        lots: u32,
    },
    QualityDelta {
        product: String,
        attribute: String,
        delta: f64,
        #[serde(default)]
        from_period: usize,
        /// Defaults to the last period.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to_period: Option<usize>,
    },
    TonnageDelta {
        product: String,
        period: usize,
        delta_tonnes: f64,
    },
    ExcludeRom {
        rom: String,
        product: String,
        #[serde(default)]
        from_period: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to_period: Option<usize>,
    },
    ReserveRom {
        rom: String,
        tonnes: f64,
        until_period: usize,
    },
}

impl Directive {
    pub fn kind(&self) -> &'static str {
        match self {
            Directive::PinAllotment { .. } => "pin-allotment",
            Directive::QualityDelta { .. } => "quality-delta",
            Directive::TonnageDelta { .. } => "tonnage-delta",
            Directive::ExcludeRom { .. } => "exclude-rom",
            Directive::ReserveRom { .. } => "reserve-rom",
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let range = |from: usize, to: &Option<usize>| match to {
            Some(to) => format!("periods {from}..={to}"),
            None => format!("periods {from}.."),
        };
        match self {
            Directive::PinAllotment { period, product, rom, lots } => {
                write!(f, "pin {lots} lots of {rom} in {product}, period {period}")
            }
            Directive::QualityDelta { product, attribute, delta, from_period, to_period } => {
                write!(f, "{product} {attribute} {delta:+}, {}", range(*from_period, to_period))
            }
            Directive::TonnageDelta { product, period, delta_tonnes } => {
                write!(f, "{product} tonnage {delta_tonnes:+} t, period {period}")
            }
            Directive::ExcludeRom { rom, product, from_period, to_period } => {
                write!(f, "exclude {rom} from {product}, {}", range(*from_period, to_period))
            }
            Directive::ReserveRom { rom, tonnes, until_period } => {
                write!(f, "reserve {tonnes} t of {rom} until period {until_period}")
            }
        }
    }
}

/// Label used to name directive `index` in constraints and errors.
pub fn directive_label(index: usize, d: &Directive) -> String {
    format!("#{index} {} ({d})", d.kind())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectiveError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("{label}: the incumbent has no {product} blend in the affected periods")]
    NoIncumbentBlend { label: String, product: String },
    #[error("incumbent does not fit the scenario: {0}")]
    Incumbent(#[from] PlanError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

impl DirectiveError {
    /// The two directives that contradict each other, if that is the problem.
    pub fn conflict(&self) -> Option<(&str, &str)> {
        match self {
            DirectiveError::Constraint(ConstraintError::Conflict { first, second, .. })
            | DirectiveError::Optimize(OptimizeError::Constraint(ConstraintError::Conflict { first, second, .. })) => {
                Some((first, second))
            }
            _ => None,
        }
    }
}

fn period_range(
    label: &str,
    scenario: &Scenario,
    from: usize,
    to: Option<usize>,
) -> Result<std::ops::RangeInclusive<usize>, ConstraintError> {
    let horizon = scenario.horizon_periods;
    let to = to.unwrap_or(horizon.saturating_sub(1));
    for t in [from, to] {
        if t >= horizon {
            return Err(ConstraintError::PeriodOutOfRange { label: label.into(), period: t, horizon });
        }
    }
    if to < from {
        return Err(ConstraintError::Invalid { label: label.into(), reason: "period range is empty".into() });
    }
    Ok(from..=to)
}

/// Compiles directives into hard constraints, resolving relative deltas
/// against `incumbent`.
pub fn compile_directives(
    directives: &[Directive],
    scenario: &Scenario,
    incumbent: &BlendPlan,
) -> Result<ConstraintSet, DirectiveError> {
    compile_from(directives, 0, scenario, incumbent)
}

fn compile_from(
    directives: &[Directive],
    first_index: usize,
    scenario: &Scenario,
    incumbent: &BlendPlan,
) -> Result<ConstraintSet, DirectiveError> {
    let mut set = ConstraintSet::default();
    if directives.is_empty() {
        return Ok(set);
    }
    let grid = PlanGrid::bind(scenario, incumbent)?;
    let outcome = evaluate_grid(scenario, &grid);
    let products = scenario.products.len();
    for (i, d) in directives.iter().enumerate() {
        let label = directive_label(first_index + i, d);
        let product_of = |id: &str| {
            scenario
                .product_index(id)
                .ok_or_else(|| ConstraintError::UnknownProduct { label: label.clone(), id: id.into() })
        };
        match d {
            Directive::PinAllotment { period, product, rom, lots } => set.pins.push(Pin {
                label,
                period: *period,
                product: product.clone(),
                rom: rom.clone(),
                lots: *lots,
            }),
            Directive::QualityDelta { product, attribute, delta, from_period, to_period } => {
                if !delta.is_finite() {
                    return Err(ConstraintError::Invalid { label, reason: "delta is not finite".into() }.into());
                }
                let p = product_of(product)?;
                let a = scenario.registry.index_of(attribute).ok_or_else(|| ConstraintError::UnknownAttribute {
                    label: label.clone(),
                    code: attribute.clone(),
                })?;
                let mut any = false;
                for t in period_range(&label, scenario, *from_period, *to_period)? {
                    let blend = outcome.blend(products, t, p);
                    if blend.quality.is_empty() {
                        continue;
                    }
                    any = true;
                    let bound = blend.quality[a] + delta;
                    let (min, max) = if *delta > 0.0 { (Some(bound), None) } else { (None, Some(bound)) };
                    set.quality_bounds.push(QualityBound {
                        label: label.clone(),
                        period: t,
                        product: product.clone(),
                        attribute: attribute.clone(),
                        min,
                        max,
                    });
                }
                if !any {
                    return Err(DirectiveError::NoIncumbentBlend { label, product: product.clone() });
                }
            }
            Directive::TonnageDelta { product, period, delta_tonnes } => {
                if !delta_tonnes.is_finite() {
                    return Err(ConstraintError::Invalid { label, reason: "delta is not finite".into() }.into());
                }
                let p = product_of(product)?;
                period_range(&label, scenario, *period, Some(*period))?;
                let bound = outcome.blend(products, *period, p).sold_tonnes() + delta_tonnes;
                let (min_tonnes, max_tonnes) = if *delta_tonnes >= 0.0 {
                    (Some(bound), None)
                } else if bound < 0.0 {
                    return Err(ConstraintError::Invalid {
                        label,
                        reason: format!("cannot reduce below zero tonnes ({bound} t)"),
                    }
                    .into());
                } else {
                    (None, Some(bound))
                };
                set.tonnage_bounds.push(TonnageBound {
                    label,
                    period: *period,
                    product: product.clone(),
                    min_tonnes,
                    max_tonnes,
                });
            }
            Directive::ExcludeRom { rom, product, from_period, to_period } => {
                let range = period_range(&label, scenario, *from_period, *to_period)?;
                set.exclusions.push(Exclusion {
                    label,
                    rom: rom.clone(),
                    product: product.clone(),
                    from_period: *range.start(),
                    to_period: *range.end(),
                });
            }
            Directive::ReserveRom { rom, tonnes, until_period } => set.reserves.push(Reservation {
                label,
                rom: rom.clone(),
                tonnes: *tonnes,
                until_period: *until_period,
            }),
        }
    }
    set.validate(scenario)?;
    Ok(set)
}

/// Why a guided run could not be applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    /// The constraint that could not be met, by label.
    pub binding: String,
    pub reason: String,
    /// The best plan the search reached, when a search ran at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<Box<OptimizeResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum GuidedOutcome {
    Applied(Box<OptimizeResult>),
    Infeasible(Infeasibility),
}

impl GuidedOutcome {
    pub fn result(&self) -> Option<&OptimizeResult> {
        match self {
            GuidedOutcome::Applied(r) => Some(r),
            GuidedOutcome::Infeasible(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Directives newly applied by this run; empty for the opening run.
    pub directives: Vec<Directive>,
    pub result: OptimizeResult,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub scenario: Arc<Scenario>,
    pub strategy: Strategy,
    incumbent: OptimizeResult,
    /// Every directive applied so far, in order.
    directives: Vec<Directive>,
    /// Constraints compiled from `directives`, each against the incumbent at
    /// the time it was applied.
    constraints: ConstraintSet,
    history: Vec<HistoryEntry>,
}

/// Opens a session whose incumbent is a fresh optimizer run.
pub fn open_session(id: impl Into<String>, scenario: Arc<Scenario>, strategy: Strategy) -> Result<Session, OptimizeError> {
    let result = crate::optimizer::optimize(&scenario, &strategy, None)?;
    Ok(Session {
        id: id.into(),
        scenario,
        strategy,
        incumbent: result.clone(),
        directives: Vec::new(),
        constraints: ConstraintSet::default(),
        history: vec![HistoryEntry { directives: Vec::new(), result }],
    })
}

impl Session {
    pub fn incumbent(&self) -> &BlendPlan {
        &self.incumbent.plan
    }

    pub fn incumbent_result(&self) -> &OptimizeResult {
        &self.incumbent
    }

    pub fn directives(&self) -> &[Directive] {
        &self.directives
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Compiles `directives` on top of those already in force.
    pub fn compile(&self, directives: &[Directive]) -> Result<ConstraintSet, DirectiveError> {
        let new = compile_from(directives, self.directives.len(), &self.scenario, &self.incumbent.plan)?;
        let mut all = self.constraints.clone();
        all.extend(new);
        all.validate(&self.scenario)?;
        Ok(all)
    }

    /// Runs `directives` without touching the session.
    pub fn preview(&self, directives: &[Directive], control: &RunControl) -> Result<GuidedOutcome, DirectiveError> {
        let constraints = self.compile(directives)?;
        Ok(reoptimize(&self.scenario, &self.strategy, &constraints, &self.incumbent, control)?)
    }

    /// Runs `directives` and, on success, makes the result the incumbent.
    pub fn apply(&mut self, directives: &[Directive], control: &RunControl) -> Result<GuidedOutcome, DirectiveError> {
        let constraints = self.compile(directives)?;
        let outcome = reoptimize(&self.scenario, &self.strategy, &constraints, &self.incumbent, control)?;
        if let GuidedOutcome::Applied(result) = &outcome {
            self.incumbent = (**result).clone();
            self.constraints = constraints;
            self.directives.extend_from_slice(directives);
            self.history.push(HistoryEntry { directives: directives.to_vec(), result: (**result).clone() });
        }
        Ok(outcome)
    }
}

/// Runs one guided step; the session is updated only on success.
pub fn guided_reoptimize(session: &mut Session, directives: &[Directive]) -> Result<GuidedOutcome, DirectiveError> {
    session.apply(directives, &RunControl::new())
}

/// Replays a session history from scratch and returns the final incumbent.
pub fn replay_history(
    id: impl Into<String>,
    scenario: Arc<Scenario>,
    strategy: Strategy,
    history: &[HistoryEntry],
) -> Result<Session, DirectiveError> {
    let mut session = open_session(id, scenario, strategy)?;
    for entry in history.iter().skip(1) {
        session.apply(&entry.directives, &RunControl::new())?;
    }
    Ok(session)
}

/// Checks bounds that no plan can meet whatever it blends, using the range
/// of washed quality and yield each usable ROM can reach.
fn static_infeasibility(compiled: &Compiled) -> Option<Infeasibility> {
    let scenario = &compiled.scenario;
    let attrs = scenario.registry.len();
    let ash = scenario.registry.ash_index();
    let grid = PlanGrid::empty(scenario);
    let lot = scenario.logistics.lot_size_tonnes;
    // (per-attribute min, max, best yield) for ROM r in period t
    let reach = |t: usize, r: usize| {
        let rom = &scenario.roms[r];
        let mut q = vec![0.0; attrs];
        degrade_into(&scenario.registry, rom.quality.values(), scenario.rom_age_days(r, t), &rom.degradation, &mut q);
        let mut lo = q.clone();
        let mut hi = q.clone();
        let mut best_yield = 1.0;
        if let (Some(curve), Some(a)) = (&rom.curve, ash) {
            let ashes = curve.knots.iter().map(|k| k.product_ash);
            let bypass = curve.bypass_allowed.then_some(q[a]);
            lo[a] = ashes.clone().chain(bypass).fold(f64::INFINITY, f64::min);
            hi[a] = ashes.chain(bypass).fold(f64::NEG_INFINITY, f64::max);
            if !curve.bypass_allowed {
                best_yield = curve.knots.last().map_or(1.0, |k| k.yield_fraction);
            }
        }
        (lo, hi, best_yield)
    };
    let usable = |t: usize, p: usize, r: usize| {
        compiled.fixed[grid.cell(t, p, r)] != Some(0) && scenario.cumulative_rom_lots(r, t) > 0
    };
    for q in &compiled.quality {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in (0..scenario.roms.len()).filter(|&r| usable(q.period, q.product, r)) {
            let (l, h, _) = reach(q.period, r);
            lo = lo.min(l[q.attribute]);
            hi = hi.max(h[q.attribute]);
        }
        let code = scenario.registry.code(q.attribute);
        let reason = if lo > hi {
            Some("no ROM can be blended into this product".to_string())
        } else if q.max < lo - 1e-9 * lo.abs().max(1.0) {
            Some(format!("{code} must be at most {} but no usable ROM goes below {lo}", q.max))
        } else if q.min > hi + 1e-9 * hi.abs().max(1.0) {
            Some(format!("{code} must be at least {} but no usable ROM goes above {hi}", q.min))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Some(Infeasibility { binding: compiled.labels[q.label].clone(), reason, attempt: None });
        }
    }
    for b in &compiled.tonnage {
        let best_yield = (0..scenario.roms.len())
            .filter(|&r| usable(b.period, b.product, r))
            .map(|r| reach(b.period, r).2)
            .fold(0.0, f64::max);
        let most = scenario.max_lots(b.product, b.period) as f64 * lot * best_yield;
        if b.min > most + 1e-9 * most.max(1.0) {
            return Some(Infeasibility {
                binding: compiled.labels[b.label].clone(),
                reason: format!("at least {} t required but at most {most} t can be produced", b.min),
                attempt: None,
            });
        }
    }
    None
}

/// Knot densities of every curve; the cut grid for exhaustive search.
fn knot_grid(scenario: &Scenario) -> Vec<f64> {
    scenario.roms.iter().filter_map(|r| r.curve.as_ref()).flat_map(|c| c.knots.iter().map(|k| k.density)).collect()
}

/// Searches from `start` and, when the space is small enough to list within
/// the strategy's budget, adds every feasible listed plan to the archive so
/// that near-best choices are exact on small cases.
pub(crate) fn explore(
    scenario: &Scenario,
    strategy: &Strategy,
    constraints: Option<&ConstraintSet>,
    start: &PlanGrid,
    control: &RunControl,
) -> Result<(Compiled, SearchOutput), OptimizeError> {
    let (_, mut output) = optimize_from(scenario, strategy, constraints, Some(start), control)?;
    let compiled = match constraints {
        Some(set) => Compiled::new(scenario, set)?,
        None => Compiled::unconstrained(scenario),
    };
    let cut_grid = knot_grid(&compiled.scenario);
    if !control.is_cancelled() {
        if let Ok(all) = enumerate_grids(&compiled.scenario, &cut_grid, strategy.budget_evaluations) {
            for grid in all {
                let outcome = evaluate_grid(&compiled.scenario, &grid);
                if outcome.violations.is_empty() && compiled.violations_of(&grid).is_empty() {
                    let objective = match strategy.objective {
                        Objective::Npv => outcome.npv,
                        Objective::Revenue => outcome.total_revenue,
                    };
                    output.elite.push((grid, objective));
                }
            }
        }
    }
    Ok((compiled, output))
}

fn reoptimize(
    scenario: &Scenario,
    strategy: &Strategy,
    constraints: &ConstraintSet,
    incumbent: &OptimizeResult,
    control: &RunControl,
) -> Result<GuidedOutcome, OptimizeError> {
    let compiled = Compiled::new(scenario, constraints)?;
    if let Some(inf) = static_infeasibility(&compiled) {
        return Ok(GuidedOutcome::Infeasible(inf));
    }
    let start = PlanGrid::bind(scenario, &incumbent.plan)?;
    let (compiled, mut output) = explore(scenario, strategy, Some(constraints), &start, control)?;

    let top = output.elite.iter().map(|(_, o)| *o).fold(f64::NEG_INFINITY, f64::max);
    if top.is_finite() {
        let floor = top - NEAR_BEST_FRACTION * top.abs();
        let chosen = output
            .elite
            .iter()
            .filter(|(_, o)| *o >= floor)
            .min_by(|(a, oa), (b, ob)| {
                a.hamming(&start)
                    .cmp(&b.hamming(&start))
                    .then(a.lot_distance(&start).cmp(&b.lot_distance(&start)))
                    .then(ob.total_cmp(oa))
                    .then_with(|| cut_key(a).cmp(&cut_key(b)))
            })
            .map(|(g, _)| g.clone())
            .expect("a finite top implies a member");
        output.best = chosen;
    }
    let result = crate::optimizer::finish(scenario, strategy, &compiled, &output);
    let incumbent_feasible = incumbent.report.is_feasible();
    if result.constraint_violations.is_empty() && (result.report.is_feasible() || !incumbent_feasible) {
        return Ok(GuidedOutcome::Applied(Box::new(result)));
    }
    let (binding, reason) = match result
        .constraint_violations
        .iter()
        .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
    {
        Some(v) => (v.label.clone(), format!("best plan found misses it by {}", v.magnitude)),
        None => {
            let v = &result.report.violations[0];
            (
                format!("{} {} period {}", v.code, v.subject, v.period),
                format!("no plan meeting the directives keeps this satisfied (short by {})", v.magnitude.abs()),
            )
        }
    };
    Ok(GuidedOutcome::Infeasible(Infeasibility { binding, reason, attempt: Some(Box::new(result)) }))
}

/// Tie-break on cut-points so the choice never depends on archive order.
fn cut_key(grid: &PlanGrid) -> Vec<(u8, u64)> {
    (0..grid.periods())
        .flat_map(|t| (0..grid.roms()).map(move |r| (t, r)))
        .map(|(t, r)| match grid.cut(t, r) {
            CutPoint::Bypass => (0, 0),
            CutPoint::Density(d) => (1, d.to_bits()),
        })
        .collect()
}

/// Differences between two evaluated plans, for previews.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDelta {
    pub objective_delta: f64,
    pub blends: Vec<BlendDelta>,
    pub changed_cells: Vec<CellChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendDelta {
    pub period: usize,
    pub product: String,
    pub tonnes_delta: f64,
    /// Per attribute; only present when both plans produce this blend.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub quality_delta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellChange {
    pub period: usize,
    pub product: String,
    pub rom: String,
    pub from_lots: u32,
    pub to_lots: u32,
}

pub fn plan_delta(
    scenario: &Scenario,
    before: (&BlendPlan, &EvaluationReport, f64),
    after: (&BlendPlan, &EvaluationReport, f64),
) -> Result<PlanDelta, PlanError> {
    let (gb, ga) = (PlanGrid::bind(scenario, before.0)?, PlanGrid::bind(scenario, after.0)?);
    let mut changed_cells = Vec::new();
    for cell in 0..gb.lots_slice().len() {
        let (from, to) = (gb.lots_slice()[cell], ga.lots_slice()[cell]);
        if from != to {
            let (t, p, r) = gb.coords(cell);
            changed_cells.push(CellChange {
                period: t,
                product: scenario.products[p].id.clone(),
                rom: scenario.roms[r].id.clone(),
                from_lots: from,
                to_lots: to,
            });
        }
    }
    let blends = before
        .1
        .blends
        .iter()
        .zip(&after.1.blends)
        .map(|(b, a)| BlendDelta {
            period: b.period,
            product: b.product.clone(),
            tonnes_delta: a.tonnes - b.tonnes,
            quality_delta: match (&b.quality, &a.quality) {
                (Some(qb), Some(qa)) => qb.iter().map(|(k, v)| (k.clone(), qa[k] - v)).collect(),
                _ => BTreeMap::new(),
            },
        })
        .collect();
    Ok(PlanDelta { objective_delta: after.2 - before.2, blends, changed_cells })
}

//! Deterministic plan evaluation.
//!
//! Per period: degrade each ROM by stockpile age, wash it at the plan's
//! cut-point, blend per product, check the contract ranges, price in-spec
//! blends, charge haul/wash/rehandle costs, then discount the net cashflows.
//! Infeasible plans are evaluated as they are; every broken constraint is
//! listed as a [`Violation`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::finance::npv;
use crate::model::Scenario;
use crate::plan::{BlendPlan, CutPoint, PlanGrid};
use crate::pricing::adjustment_per_tonne;
use crate::quality::{blend_into, degrade_into};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    QualityRange,
    ContractMin,
    TonnageTarget,
    Availability,
    RehandleStock,
    HaulCapacity,
    WashCapacity,
    BlendCardinality,
    MinLots,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::QualityRange => "quality-range",
            ViolationCode::ContractMin => "contract-min",
            ViolationCode::TonnageTarget => "tonnage-target",
            ViolationCode::Availability => "availability",
            ViolationCode::RehandleStock => "rehandle-stock",
            ViolationCode::HaulCapacity => "haul-capacity",
            ViolationCode::WashCapacity => "wash-capacity",
            ViolationCode::BlendCardinality => "blend-cardinality",
            ViolationCode::MinLots => "min-lots",
        }
    }

    /// Violations that repair can remove by dropping lots.
    pub fn is_structural(self) -> bool {
        !matches!(self, ViolationCode::QualityRange | ViolationCode::ContractMin)
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a violation or slack entry refers to, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Subject {
    Product(usize),
    ProductAttribute(usize, usize),
    ProductRom(usize, usize),
    Rom(usize),
    HaulFleet,
    WashPlant,
}

impl Subject {
    pub(crate) fn label(self, scenario: &Scenario) -> String {
        match self {
            Subject::Product(p) => scenario.products[p].id.clone(),
            Subject::ProductAttribute(p, a) => format!("{}/{}", scenario.products[p].id, scenario.registry.code(a)),
            Subject::ProductRom(p, r) => format!("{}/{}", scenario.products[p].id, scenario.roms[r].id),
            Subject::Rom(r) => scenario.roms[r].id.clone(),
            Subject::HaulFleet => "haul-fleet".into(),
            Subject::WashPlant => "wash-plant".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RawViolation {
    pub code: ViolationCode,
    pub period: usize,
    pub subject: Subject,
    pub magnitude: f64,
}

/// A capacity or commitment with its usage. `slack` is signed so that a
/// negative value always means the constraint is broken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RawSlack {
    pub code: ViolationCode,
    pub period: usize,
    pub subject: Subject,
    pub limit: f64,
    pub usage: f64,
    pub slack: f64,
}

fn tolerance(limit: f64, usage: f64) -> f64 {
    1e-9 * limit.abs().max(usage.abs()).max(1.0)
}

impl RawSlack {
    fn upper(code: ViolationCode, period: usize, subject: Subject, limit: f64, usage: f64) -> Self {
        Self::snapped(code, period, subject, limit, usage, limit - usage)
    }

    fn lower(code: ViolationCode, period: usize, subject: Subject, limit: f64, usage: f64) -> Self {
        Self::snapped(code, period, subject, limit, usage, usage - limit)
    }

    fn snapped(code: ViolationCode, period: usize, subject: Subject, limit: f64, usage: f64, slack: f64) -> Self {
        let slack = if slack.abs() <= tolerance(limit, usage) { 0.0 } else { slack };
        Self { code, period, subject, limit, usage, slack }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeriodCosts {
    pub haul_hours: f64,
    pub haul_cost: f64,
    pub wash_feed_tonnes: f64,
    pub wash_cost: f64,
    pub rehandled_tonnes: f64,
    /// Rehandled tonnes that reach the staging yard after losses.
    pub staged_tonnes: f64,
    pub rehandle_cost: f64,
}

impl PeriodCosts {
    pub fn total(&self) -> f64 {
        self.haul_cost + self.wash_cost + self.rehandle_cost
    }
}

pub(crate) struct CostSheet {
    pub periods: Vec<PeriodCosts>,
    pub slacks: Vec<RawSlack>,
}

/// Haul, wash and rehandle usage and cost per period, plus the stock,
/// fleet and plant slacks they imply.
pub(crate) fn cost_sheet(scenario: &Scenario, grid: &PlanGrid) -> CostSheet {
    let horizon = scenario.horizon_periods;
    let log = &scenario.logistics;
    let lot = log.lot_size_tonnes;
    let mut periods = vec![PeriodCosts::default(); horizon];
    let mut slacks = Vec::new();

    for (r, rom) in scenario.roms.iter().enumerate() {
        let mut pit = 0.0;
        let mut staging = 0.0;
        let mut cum_available = 0.0;
        let mut cum_loss = 0.0;
        let mut cum_feed = 0.0;
        for t in 0..horizon {
            let arrived = rom.available_tonnes[t];
            pit += arrived;
            cum_available += arrived;
            let moved = grid.rehandle(t, r);
            if moved > 0.0 {
                slacks.push(RawSlack::upper(ViolationCode::RehandleStock, t, Subject::Rom(r), pit, moved));
                let kept = moved * (1.0 - log.rehandle_loss_fraction);
                pit -= moved;
                staging += kept;
                cum_loss += moved - kept;
                let c = &mut periods[t];
                c.rehandled_tonnes += moved;
                c.staged_tonnes += kept;
                c.rehandle_cost += moved * log.rehandle_cost_per_tonne;
            }
            let feed = grid.rom_lots(t, r) as f64 * lot;
            let from_staging = feed.min(staging.max(0.0));
            let from_pit = feed - from_staging;
            staging -= from_staging;
            pit -= from_pit;
            cum_feed += feed;
            slacks.push(RawSlack::upper(ViolationCode::Availability, t, Subject::Rom(r), cum_available - cum_loss, cum_feed));

            let c = &mut periods[t];
            c.haul_hours += from_staging * rom.staging_haul_hours_per_tonne + from_pit * rom.haul_hours_per_tonne;
            if !grid.cut(t, r).is_bypass() {
                c.wash_feed_tonnes += feed;
            }
        }
    }

    for (t, c) in periods.iter_mut().enumerate() {
        c.haul_cost = c.haul_hours * log.haul_cost_per_hour;
        if c.wash_feed_tonnes > 0.0 {
            c.wash_cost = log.wash_fixed_cost_per_period + log.wash_variable_cost_per_tonne * c.wash_feed_tonnes;
        }
        let haul_limit = log.haul_limit(t);
        if haul_limit.is_finite() {
            slacks.push(RawSlack::upper(ViolationCode::HaulCapacity, t, Subject::HaulFleet, haul_limit, c.haul_hours));
        }
        let wash_limit = log.wash_limit(t);
        if wash_limit.is_finite() {
            slacks.push(RawSlack::upper(ViolationCode::WashCapacity, t, Subject::WashPlant, wash_limit, c.wash_feed_tonnes));
        }
    }
    CostSheet { periods, slacks }
}

/// Per-period haul, wash and rehandle costs and resource usage of a plan.
pub fn compute_costs(scenario: &Scenario, plan: &BlendPlan) -> Result<Vec<PeriodCosts>, PlanError> {
    let grid = PlanGrid::bind(scenario, plan)?;
    Ok(cost_sheet(scenario, &grid).periods)
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BlendOutcome {
    pub feed_lots: u32,
    pub tonnes: f64,
    /// Empty when the blend has no tonnage.
    pub quality: Vec<f64>,
    pub in_spec: bool,
    pub gross: f64,
    pub adjustment: f64,
}

impl BlendOutcome {
    pub fn sold_tonnes(&self) -> f64 {
        if self.in_spec {
            self.tonnes
        } else {
            0.0
        }
    }
}

/// Index-based evaluation result; [`EvaluationReport`] is its id-based view.
#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub blends: Vec<BlendOutcome>,
    pub costs: Vec<PeriodCosts>,
    pub revenue: Vec<f64>,
    pub cashflows: Vec<f64>,
    pub violations: Vec<RawViolation>,
    pub slacks: Vec<RawSlack>,
    /// Washed yield per `(period, rom)`.
    pub yields: Vec<f64>,
    /// Washed quality per `(period, rom)`, `attributes` values each.
    pub washed_quality: Vec<f64>,
    pub npv: f64,
    pub total_revenue: f64,
    pub sold_tonnes: f64,
}

impl Outcome {
    pub fn blend(&self, products: usize, period: usize, product: usize) -> &BlendOutcome {
        &self.blends[period * products + product]
    }

    pub fn violation_magnitude(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude.abs()).sum()
    }
}

/// Degraded and washed `(yield, quality)` of every ROM in every period.
pub(crate) fn washed_states(scenario: &Scenario, grid: &PlanGrid) -> (Vec<f64>, Vec<f64>) {
    let attrs = scenario.registry.len();
    let roms = scenario.roms.len();
    let ash = scenario.registry.ash_index();
    let mut yields = vec![1.0; scenario.horizon_periods * roms];
    let mut quality = vec![0.0; scenario.horizon_periods * roms * attrs];
    for t in 0..scenario.horizon_periods {
        for (r, rom) in scenario.roms.iter().enumerate() {
            let i = t * roms + r;
            let q = &mut quality[i * attrs..(i + 1) * attrs];
            degrade_into(&scenario.registry, rom.quality.values(), scenario.rom_age_days(r, t), &rom.degradation, q);
            if let (CutPoint::Density(d), Some(curve), Some(ash)) = (grid.cut(t, r), &rom.curve, ash) {
                // cut-points are range-checked when a plan is bound
                let (product_ash, y) = curve.interpolate(d).unwrap_or((q[ash], 1.0));
                q[ash] = product_ash;
                yields[i] = y;
            }
        }
    }
    (yields, quality)
}

pub(crate) fn evaluate_grid(scenario: &Scenario, grid: &PlanGrid) -> Outcome {
    let horizon = scenario.horizon_periods;
    let products = scenario.products.len();
    let roms = scenario.roms.len();
    let attrs = scenario.registry.len();
    let log = &scenario.logistics;
    let lot = log.lot_size_tonnes;

    let (yields, washed) = washed_states(scenario, grid);
    let CostSheet { periods: costs, mut slacks } = cost_sheet(scenario, grid);
    let mut violations = Vec::new();
    let mut blends = Vec::with_capacity(horizon * products);
    let mut revenue = vec![0.0; horizon];
    let mut sold_tonnes = 0.0;

    for t in 0..horizon {
        for (p, spec) in scenario.products.iter().enumerate() {
            let feed_lots = grid.blend_lots(t, p);
            let parcels = (0..roms).filter_map(|r| {
                let lots = grid.lots(t, p, r);
                (lots > 0).then(|| {
                    let i = t * roms + r;
                    (lots as f64 * lot * yields[i], &washed[i * attrs..(i + 1) * attrs])
                })
            });
            let tonnes: f64 = parcels.clone().map(|(w, _)| w).sum();
            let mut blend =
                BlendOutcome { feed_lots, tonnes, quality: Vec::new(), in_spec: false, gross: 0.0, adjustment: 0.0 };
            if tonnes > 0.0 {
                let mut q = vec![0.0; attrs];
                blend_into(parcels, tonnes, &mut q);
                let mut ok = true;
                for range in &spec.ranges {
                    let v = q[range.attribute];
                    let excess = if v > range.max {
                        v - range.max
                    } else if v < range.min {
                        v - range.min
                    } else {
                        continue;
                    };
                    ok = false;
                    violations.push(RawViolation {
                        code: ViolationCode::QualityRange,
                        period: t,
                        subject: Subject::ProductAttribute(p, range.attribute),
                        magnitude: excess,
                    });
                }
                if ok {
                    blend.in_spec = true;
                    blend.gross = spec.base_price[t] * tonnes;
                    blend.adjustment = tonnes * adjustment_per_tonne(&q, spec);
                    revenue[t] += blend.gross + blend.adjustment;
                    sold_tonnes += tonnes;
                }
                blend.quality = q;
            }

            let used = (0..roms).filter(|&r| grid.lots(t, p, r) > 0).count() as u32;
            if used > log.max_rom_types_per_blend {
                violations.push(RawViolation {
                    code: ViolationCode::BlendCardinality,
                    period: t,
                    subject: Subject::Product(p),
                    magnitude: (used - log.max_rom_types_per_blend) as f64,
                });
            }
            for r in 0..roms {
                let lots = grid.lots(t, p, r);
                if lots > 0 && lots < log.min_lots_per_used_rom {
                    violations.push(RawViolation {
                        code: ViolationCode::MinLots,
                        period: t,
                        subject: Subject::ProductRom(p, r),
                        magnitude: (log.min_lots_per_used_rom - lots) as f64,
                    });
                }
            }

            slacks.push(RawSlack::upper(
                ViolationCode::TonnageTarget,
                t,
                Subject::Product(p),
                spec.tonnage_target[t],
                feed_lots as f64 * lot,
            ));
            if spec.contract_min_tonnes[t] > 0.0 {
                slacks.push(RawSlack::lower(
                    ViolationCode::ContractMin,
                    t,
                    Subject::Product(p),
                    spec.contract_min_tonnes[t],
                    blend.sold_tonnes(),
                ));
            }
            blends.push(blend);
        }
    }

    for s in &slacks {
        if s.slack < 0.0 {
            violations.push(RawViolation { code: s.code, period: s.period, subject: s.subject, magnitude: -s.slack });
        }
    }
    violations.sort_by(|a, b| (a.period, a.code).cmp(&(b.period, b.code)));

    let cashflows: Vec<f64> = (0..horizon).map(|t| revenue[t] - costs[t].total()).collect();
    let npv = npv(&cashflows, scenario.market.discount_rate_per_period);
    let total_revenue = revenue.iter().sum();
    Outcome {
        blends,
        costs,
        revenue,
        cashflows,
        violations,
        slacks,
        yields,
        washed_quality: washed,
        npv,
        total_revenue,
        sold_tonnes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRow {
    pub period: usize,
    pub product: String,
    pub feed_tonnes: f64,
    pub tonnes: f64,
    pub in_spec: bool,
    pub gross_revenue: f64,
    pub adjustment_revenue: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub period: usize,
    pub revenue: f64,
    pub haul_hours: f64,
    pub haul_cost: f64,
    pub wash_feed_tonnes: f64,
    pub wash_cost: f64,
    pub rehandled_tonnes: f64,
    pub rehandle_cost: f64,
    pub net_cashflow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub period: usize,
    pub subject: String,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub total_sold_tonnes: f64,
    pub avg_revenue_per_tonne: f64,
    pub wash_utilization: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total_revenue: f64,
    pub npv: f64,
    pub discount_rate_per_period: f64,
    pub kpis: Kpis,
    pub blends: Vec<BlendRow>,
    pub periods: Vec<PeriodRow>,
    pub violations: Vec<Violation>,
}

impl EvaluationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn net_cashflows(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.net_cashflow).collect()
    }

    pub fn blend(&self, period: usize, product: &str) -> Option<&BlendRow> {
        self.blends.iter().find(|b| b.period == period && b.product == product)
    }

    pub fn violations_of(&self, code: ViolationCode) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.code == code)
    }

    pub(crate) fn from_outcome(scenario: &Scenario, outcome: &Outcome) -> Self {
        let lot = scenario.logistics.lot_size_tonnes;
        let products = scenario.products.len();
        let mut blends = Vec::with_capacity(outcome.blends.len());
        for (i, b) in outcome.blends.iter().enumerate() {
            let (t, p) = (i / products.max(1), i % products.max(1));
            blends.push(BlendRow {
                period: t,
                product: scenario.products[p].id.clone(),
                feed_tonnes: b.feed_lots as f64 * lot,
                tonnes: b.tonnes,
                in_spec: b.in_spec,
                gross_revenue: b.gross,
                adjustment_revenue: b.adjustment,
                quality: (!b.quality.is_empty()).then(|| {
                    b.quality.iter().enumerate().map(|(a, v)| (scenario.registry.code(a).to_string(), *v)).collect()
                }),
            });
        }
        let periods = outcome
            .costs
            .iter()
            .enumerate()
            .map(|(t, c)| PeriodRow {
                period: t,
                revenue: outcome.revenue[t],
                haul_hours: c.haul_hours,
                haul_cost: c.haul_cost,
                wash_feed_tonnes: c.wash_feed_tonnes,
                wash_cost: c.wash_cost,
                rehandled_tonnes: c.rehandled_tonnes,
                rehandle_cost: c.rehandle_cost,
                net_cashflow: outcome.cashflows[t],
            })
            .collect();
        let violations = outcome
            .violations
            .iter()
            .map(|v| Violation { code: v.code, period: v.period, subject: v.subject.label(scenario), magnitude: v.magnitude })
            .collect();
        let wash_utilization = outcome
            .costs
            .iter()
            .enumerate()
            .map(|(t, c)| {
                let cap = scenario.logistics.wash_limit(t);
                if cap.is_finite() && cap > 0.0 {
                    c.wash_feed_tonnes / cap
                } else {
                    0.0
                }
            })
            .collect();
        let avg = if outcome.sold_tonnes > 0.0 { outcome.total_revenue / outcome.sold_tonnes } else { 0.0 };
        EvaluationReport {
            total_revenue: outcome.total_revenue,
            npv: outcome.npv,
            discount_rate_per_period: scenario.market.discount_rate_per_period,
            kpis: Kpis { total_sold_tonnes: outcome.sold_tonnes, avg_revenue_per_tonne: avg, wash_utilization },
            blends,
            periods,
            violations,
        }
    }
}

/// Evaluates `plan` against `scenario`. Only dangling ids and malformed
/// cut-points fail; every other problem is reported as a violation.
pub fn evaluate_plan(scenario: &Scenario, plan: &BlendPlan) -> Result<EvaluationReport, PlanError> {
    let grid = PlanGrid::bind(scenario, plan)?;
    Ok(evaluate_grid_report(scenario, &grid))
}

pub fn evaluate_grid_report(scenario: &Scenario, grid: &PlanGrid) -> EvaluationReport {
    EvaluationReport::from_outcome(scenario, &evaluate_grid(scenario, grid))
}

//! Hard constraints layered on top of a scenario, typically compiled from
//! planner directives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::PlanError;
use crate::eval::{evaluate_grid, Outcome, Subject, ViolationCode};
use crate::model::Scenario;
use crate::plan::{BlendPlan, PlanGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pin {
    pub label: String,
    pub period: usize,
    pub product: String,
    pub rom: String,
    pub lots: u32,
}

/// Keeps `rom` out of `product` for periods `from_period..=to_period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub label: String,
    pub rom: String,
    pub product: String,
    pub from_period: usize,
    pub to_period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityBound {
    pub label: String,
    pub period: usize,
    pub product: String,
    pub attribute: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

/// Bounds on a product's sold tonnes in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TonnageBound {
    pub label: String,
    pub period: usize,
    pub product: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_tonnes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tonnes: Option<f64>,
}

/// Holds `tonnes` of a ROM back until after `until_period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reservation {
    pub label: String,
    pub rom: String,
    pub tonnes: f64,
    pub until_period: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSet {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pins: Vec<Pin>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<Exclusion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quality_bounds: Vec<QualityBound>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tonnage_bounds: Vec<TonnageBound>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reserves: Vec<Reservation>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("{label}: unknown product `{id}`")]
    UnknownProduct { label: String, id: String },
    #[error("{label}: unknown ROM `{id}`")]
    UnknownRom { label: String, id: String },
    #[error("{label}: unknown attribute `{code}`")]
    UnknownAttribute { label: String, code: String },
    #[error("{label}: period {period} outside horizon of {horizon}")]
    PeriodOutOfRange { label: String, period: usize, horizon: usize },
    #[error("{label}: {reason}")]
    Invalid { label: String, reason: String },
    #[error("`{first}` conflicts with `{second}`: {reason}")]
    Conflict { first: String, second: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub label: String,
    pub magnitude: f64,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
            && self.exclusions.is_empty()
            && self.quality_bounds.is_empty()
            && self.tonnage_bounds.is_empty()
            && self.reserves.is_empty()
    }

    pub fn extend(&mut self, other: ConstraintSet) {
        self.pins.extend(other.pins);
        self.exclusions.extend(other.exclusions);
        self.quality_bounds.extend(other.quality_bounds);
        self.tonnage_bounds.extend(other.tonnage_bounds);
        self.reserves.extend(other.reserves);
    }

    /// Checks the set against `scenario` without running anything.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ConstraintError> {
        Compiled::new(scenario, self).map(|_| ())
    }

    /// Bounds broken by `plan`, checked with a 1e-9 tolerance.
    pub fn check(&self, scenario: &Scenario, plan: &BlendPlan) -> Result<Vec<ConstraintViolation>, CheckError> {
        let compiled = Compiled::new(scenario, self)?;
        let grid = PlanGrid::bind(scenario, plan)?;
        Ok(compiled.violations_of(&grid))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Index-based constraints plus the scenario with reservations applied.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub scenario: Scenario,
    /// Lots a cell is held at, per plan-grid cell.
    pub fixed: Vec<Option<u32>>,
    pub fixed_label: Vec<usize>,
    pub quality: Vec<QualityRow>,
    pub tonnage: Vec<TonnageRow>,
    pub reserved_roms: Vec<(usize, usize)>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QualityRow {
    pub period: usize,
    pub product: usize,
    pub attribute: usize,
    pub min: f64,
    pub max: f64,
    pub label: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TonnageRow {
    pub period: usize,
    pub product: usize,
    pub min: f64,
    pub max: f64,
    pub label: usize,
}

fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

impl Compiled {
    pub fn unconstrained(scenario: &Scenario) -> Self {
        let cells = scenario.horizon_periods * scenario.products.len() * scenario.roms.len();
        Self {
            scenario: scenario.clone(),
            fixed: vec![None; cells],
            fixed_label: vec![usize::MAX; cells],
            quality: Vec::new(),
            tonnage: Vec::new(),
            reserved_roms: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn new(scenario: &Scenario, set: &ConstraintSet) -> Result<Self, ConstraintError> {
        let mut c = Self::unconstrained(scenario);
        let horizon = scenario.horizon_periods;
        let grid = PlanGrid::empty(scenario);
        let period = |label: &str, t: usize| {
            if t < horizon {
                Ok(t)
            } else {
                Err(ConstraintError::PeriodOutOfRange { label: label.into(), period: t, horizon })
            }
        };
        let product = |label: &str, id: &str| {
            scenario
                .product_index(id)
                .ok_or_else(|| ConstraintError::UnknownProduct { label: label.into(), id: id.into() })
        };
        let rom = |label: &str, id: &str| {
            scenario.rom_index(id).ok_or_else(|| ConstraintError::UnknownRom { label: label.into(), id: id.into() })
        };

        for pin in &set.pins {
            let cell = grid.cell(period(&pin.label, pin.period)?, product(&pin.label, &pin.product)?, rom(&pin.label, &pin.rom)?);
            let label = c.label(&pin.label);
            if let Some(prev) = c.fixed[cell] {
                if prev != pin.lots {
                    return Err(ConstraintError::Conflict {
                        first: c.labels[c.fixed_label[cell]].clone(),
                        second: pin.label.clone(),
                        reason: format!("pins {prev} and {} lots on the same allotment", pin.lots),
                    });
                }
            }
            c.fixed[cell] = Some(pin.lots);
            c.fixed_label[cell] = label;
        }

        for ex in &set.exclusions {
            let (p, r) = (product(&ex.label, &ex.product)?, rom(&ex.label, &ex.rom)?);
            period(&ex.label, ex.from_period)?;
            if ex.to_period < ex.from_period {
                return Err(ConstraintError::Invalid { label: ex.label.clone(), reason: "period range is empty".into() });
            }
            let label = c.label(&ex.label);
            for t in ex.from_period..=ex.to_period.min(horizon - 1) {
                let cell = grid.cell(t, p, r);
                match c.fixed[cell] {
                    Some(lots) if lots > 0 => {
                        return Err(ConstraintError::Conflict {
                            first: c.labels[c.fixed_label[cell]].clone(),
                            second: ex.label.clone(),
                            reason: format!("allotment pinned at {lots} lots is excluded in period {t}"),
                        })
                    }
                    Some(_) => {}
                    None => {
                        c.fixed[cell] = Some(0);
                        c.fixed_label[cell] = label;
                    }
                }
            }
        }

        for qb in &set.quality_bounds {
            let t = period(&qb.label, qb.period)?;
            let p = product(&qb.label, &qb.product)?;
            let a = scenario
                .registry
                .index_of(&qb.attribute)
                .ok_or_else(|| ConstraintError::UnknownAttribute { label: qb.label.clone(), code: qb.attribute.clone() })?;
            let (min, max) = (qb.min.unwrap_or(f64::NEG_INFINITY), qb.max.unwrap_or(f64::INFINITY));
            if min.is_nan() || max.is_nan() || qb.min.is_some_and(|v| !v.is_finite()) || qb.max.is_some_and(|v| !v.is_finite()) {
                return Err(ConstraintError::Invalid { label: qb.label.clone(), reason: "bound is not finite".into() });
            }
            if min > max {
                return Err(ConstraintError::Invalid { label: qb.label.clone(), reason: format!("lower bound {min} exceeds upper bound {max}") });
            }
            let label = c.label(&qb.label);
            for other in c.quality.iter().filter(|o| o.period == t && o.product == p && o.attribute == a) {
                if other.max < min || max < other.min {
                    return Err(ConstraintError::Conflict {
                        first: c.labels[other.label].clone(),
                        second: qb.label.clone(),
                        reason: format!("no {} value satisfies both bounds", qb.attribute),
                    });
                }
            }
            c.quality.push(QualityRow { period: t, product: p, attribute: a, min, max, label });
        }

        for tb in &set.tonnage_bounds {
            let t = period(&tb.label, tb.period)?;
            let p = product(&tb.label, &tb.product)?;
            let (min, max) = (tb.min_tonnes.unwrap_or(0.0), tb.max_tonnes.unwrap_or(f64::INFINITY));
            if !min.is_finite() || max.is_nan() || tb.max_tonnes.is_some_and(|v| !v.is_finite()) || min > max {
                return Err(ConstraintError::Invalid { label: tb.label.clone(), reason: format!("invalid tonnage range [{min}, {max}]") });
            }
            let label = c.label(&tb.label);
            for other in c.tonnage.iter().filter(|o| o.period == t && o.product == p) {
                if other.max < min || max < other.min {
                    return Err(ConstraintError::Conflict {
                        first: c.labels[other.label].clone(),
                        second: tb.label.clone(),
                        reason: "no tonnage satisfies both bounds".into(),
                    });
                }
            }
            c.tonnage.push(TonnageRow { period: t, product: p, min, max, label });
        }

        for res in &set.reserves {
            let r = rom(&res.label, &res.rom)?;
            if !(res.tonnes.is_finite() && res.tonnes >= 0.0) {
                return Err(ConstraintError::Invalid { label: res.label.clone(), reason: "reserved tonnes must be finite and non-negative".into() });
            }
            let until = period(&res.label, res.until_period)?;
            let avail = &mut c.scenario.roms[r].available_tonnes;
            let mut left = res.tonnes;
            for v in avail.iter_mut().take(until + 1) {
                let take = v.min(left);
                *v -= take;
                left -= take;
            }
            if left > tol(res.tonnes) {
                return Err(ConstraintError::Invalid {
                    label: res.label.clone(),
                    reason: format!("only {} t of `{}` arrive by period {until}", res.tonnes - left, res.rom),
                });
            }
            if until + 1 < horizon {
                avail[until + 1] += res.tonnes - left.max(0.0);
            }
            let label = c.label(&res.label);
            c.reserved_roms.push((r, label));
        }
        Ok(c)
    }

    /// Every bound broken by `grid`, by label.
    pub fn violations_of(&self, grid: &PlanGrid) -> Vec<ConstraintViolation> {
        let outcome = evaluate_grid(&self.scenario, grid);
        let mut out: Vec<(usize, f64)> = self.fixed_violations(grid);
        out.extend(self.bound_violations(&outcome));
        for v in &outcome.violations {
            if let (ViolationCode::Availability, Subject::Rom(r)) = (v.code, v.subject) {
                if let Some((_, label)) = self.reserved_roms.iter().find(|(rr, _)| *rr == r) {
                    out.push((*label, v.magnitude));
                }
            }
        }
        out.into_iter().map(|(l, magnitude)| ConstraintViolation { label: self.labels[l].clone(), magnitude }).collect()
    }

    fn label(&mut self, label: &str) -> usize {
        self.labels.push(label.to_string());
        self.labels.len() - 1
    }

    pub fn is_fixed(&self, cell: usize) -> bool {
        self.fixed[cell].is_some()
    }

    /// Forces every held cell of `grid` to its value.
    pub fn apply_fixed(&self, grid: &mut PlanGrid) {
        for (cell, v) in self.fixed.iter().enumerate() {
            if let Some(v) = v {
                grid.lots[cell] = *v;
            }
        }
    }

    fn fixed_violations(&self, grid: &PlanGrid) -> Vec<(usize, f64)> {
        self.fixed
            .iter()
            .enumerate()
            .filter_map(|(cell, v)| {
                let v = (*v)?;
                (grid.lots[cell] != v).then(|| (self.fixed_label[cell], grid.lots[cell].abs_diff(v) as f64))
            })
            .collect()
    }

    /// Quality and tonnage bounds broken by an evaluated plan.
    pub fn bound_violations(&self, outcome: &Outcome) -> Vec<(usize, f64)> {
        let products = self.scenario.products.len();
        let mut out = Vec::new();
        for q in &self.quality {
            let blend = outcome.blend(products, q.period, q.product);
            if blend.quality.is_empty() {
                // an empty blend has no attribute to satisfy the bound with
                out.push((q.label, 1.0));
                continue;
            }
            let v = blend.quality[q.attribute];
            if v > q.max + tol(q.max) {
                out.push((q.label, v - q.max));
            } else if v < q.min - tol(q.min) {
                out.push((q.label, q.min - v));
            }
        }
        for b in &self.tonnage {
            let sold = outcome.blend(products, b.period, b.product).sold_tonnes();
            if sold < b.min - tol(b.min) {
                out.push((b.label, b.min - sold));
            } else if sold > b.max + tol(b.max) {
                out.push((b.label, sold - b.max));
            }
        }
        out
    }

    pub fn has_lower_tonnage(&self, label: usize) -> bool {
        self.tonnage.iter().any(|t| t.label == label && t.min > 0.0)
    }
}

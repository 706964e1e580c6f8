//! Invariant checks for a whole [`Scenario`].
//!
//! Each problem carries a stable code and the document path of the offending
//! field (`roms[1].curve.knots[2].yield_fraction`), so loaders and the HTTP
//! service can report them without further translation.

use std::fmt;

use serde::Serialize;

use crate::error::ModelError;
use crate::model::{Scenario, Unit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub code: String,
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn new(code: &str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

pub mod codes {
    pub const SYNTAX: &str = "E_SYNTAX";
    pub const UNKNOWN_FIELD: &str = "E_UNKNOWN_FIELD";
    pub const SCHEMA_VERSION: &str = "E_SCHEMA_VERSION";
    pub const HORIZON: &str = "E_HORIZON";
    pub const DAYS_PER_PERIOD: &str = "E_DAYS_PER_PERIOD";
    pub const ATTR_EMPTY_CODE: &str = "E_ATTR_EMPTY_CODE";
    pub const ATTR_DUPLICATE: &str = "E_ATTR_DUPLICATE";
    pub const ATTR_ASH_MISSING: &str = "E_ATTR_ASH_MISSING";
    pub const QUALITY_UNKNOWN_ATTR: &str = "E_QUALITY_UNKNOWN_ATTR";
    pub const QUALITY_MISSING_ATTR: &str = "E_QUALITY_MISSING_ATTR";
    pub const QUALITY_NOT_FINITE: &str = "E_QUALITY_NOT_FINITE";
    pub const QUALITY_PERCENT_RANGE: &str = "E_QUALITY_PERCENT_RANGE";
    pub const CURVE_TOO_FEW_KNOTS: &str = "E_CURVE_TOO_FEW_KNOTS";
    pub const CURVE_NOT_FINITE: &str = "E_CURVE_NOT_FINITE";
    pub const CURVE_DENSITY_ORDER: &str = "E_CURVE_DENSITY_ORDER";
    pub const CURVE_ASH_ORDER: &str = "E_CURVE_ASH_ORDER";
    pub const CURVE_YIELD_ORDER: &str = "E_CURVE_YIELD_ORDER";
    pub const CURVE_YIELD_RANGE: &str = "E_CURVE_YIELD_RANGE";
    pub const CURVE_ASH_RANGE: &str = "E_CURVE_ASH_RANGE";
    pub const DEGRADATION_UNKNOWN_ATTR: &str = "E_DEGRADATION_UNKNOWN_ATTR";
    pub const DEGRADATION_CAP_NEGATIVE: &str = "E_DEGRADATION_CAP_NEGATIVE";
    pub const DEGRADATION_NOT_FINITE: &str = "E_DEGRADATION_NOT_FINITE";
    pub const ROM_EMPTY_ID: &str = "E_ROM_EMPTY_ID";
    pub const ROM_DUPLICATE_ID: &str = "E_ROM_DUPLICATE_ID";
    pub const ROM_AVAILABILITY_NEGATIVE: &str = "E_ROM_AVAILABILITY_NEGATIVE";
    pub const ROM_HAUL_NEGATIVE: &str = "E_ROM_HAUL_NEGATIVE";
    pub const ROM_STAGING_HAUL: &str = "E_ROM_STAGING_HAUL";
    pub const PRODUCT_EMPTY_ID: &str = "E_PRODUCT_EMPTY_ID";
    pub const PRODUCT_DUPLICATE_ID: &str = "E_PRODUCT_DUPLICATE_ID";
    pub const RANGE_UNKNOWN_ATTR: &str = "E_RANGE_UNKNOWN_ATTR";
    pub const RANGE_INVERTED: &str = "E_RANGE_INVERTED";
    pub const ADJ_UNKNOWN_ATTR: &str = "E_ADJ_UNKNOWN_ATTR";
    pub const ADJ_TARGET_OUTSIDE_RANGE: &str = "E_ADJ_TARGET_OUTSIDE_RANGE";
    pub const ADJ_RATE_NOT_FINITE: &str = "E_ADJ_RATE_NOT_FINITE";
    pub const PRICE_NEGATIVE: &str = "E_PRICE_NEGATIVE";
    pub const CONTRACT_NEGATIVE: &str = "E_CONTRACT_NEGATIVE";
    pub const TARGET_NEGATIVE: &str = "E_TARGET_NEGATIVE";
    pub const PERIOD_LENGTH: &str = "E_PERIOD_LENGTH";
    pub const LOT_SIZE: &str = "E_LOT_SIZE";
    pub const MIN_LOTS: &str = "E_MIN_LOTS";
    pub const MAX_ROM_TYPES: &str = "E_MAX_ROM_TYPES";
    pub const HAUL_FLEET_NEGATIVE: &str = "E_HAUL_FLEET_NEGATIVE";
    pub const WASH_CAPACITY_NEGATIVE: &str = "E_WASH_CAPACITY_NEGATIVE";
    pub const COST_NEGATIVE: &str = "E_COST_NEGATIVE";
    pub const REHANDLE_LOSS_RANGE: &str = "E_REHANDLE_LOSS_RANGE";
    pub const DISCOUNT_RATE: &str = "E_DISCOUNT_RATE";
}

fn nonneg_finite(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

pub(crate) fn validate_scenario(s: &Scenario) -> Vec<ValidationIssue> {
    use codes::*;
    let mut out = Vec::new();
    let mut push = |code: &str, path: String, msg: String| out.push(ValidationIssue::new(code, path, msg));
    let horizon = s.horizon_periods;

    if horizon < 1 {
        push(HORIZON, "horizon_periods".into(), "horizon must be at least 1 period".into());
    }
    if s.days_per_period < 1 {
        push(DAYS_PER_PERIOD, "days_per_period".into(), "days per period must be positive".into());
    }

    let reg = &s.registry;
    for (i, a) in reg.iter().enumerate() {
        if a.code.trim().is_empty() {
            push(ATTR_EMPTY_CODE, format!("attributes[{i}].code"), "attribute code is empty".into());
        } else if reg.iter().take(i).any(|b| b.code == a.code) {
            push(ATTR_DUPLICATE, format!("attributes[{i}].code"), format!("duplicate attribute `{}`", a.code));
        }
    }
    let any_curve = s.roms.iter().any(|r| r.curve.is_some());
    if any_curve && reg.ash_index().is_none() {
        push(ATTR_ASH_MISSING, "attributes".into(), "an ash-yield curve exists but `ash` is not registered".into());
    }

    let per_period = |out: &mut dyn FnMut(&str, String, String), path: String, v: &[f64], code: &str, what: &str| {
        if v.len() != horizon {
            out(PERIOD_LENGTH, path.clone(), format!("expected {horizon} periods, got {}", v.len()));
        }
        for (t, x) in v.iter().enumerate() {
            if !nonneg_finite(*x) {
                out(code, format!("{path}[{t}]"), format!("{what} must be finite and nonnegative, got {x}"));
            }
        }
    };

    for (ri, rom) in s.roms.iter().enumerate() {
        let base = format!("roms[{ri}]");
        if rom.id.trim().is_empty() {
            push(ROM_EMPTY_ID, format!("{base}.id"), "ROM id is empty".into());
        } else if s.roms.iter().take(ri).any(|o| o.id == rom.id) {
            push(ROM_DUPLICATE_ID, format!("{base}.id"), format!("duplicate ROM id `{}`", rom.id));
        }
        per_period(
            &mut push,
            format!("{base}.available_tonnes"),
            &rom.available_tonnes,
            ROM_AVAILABILITY_NEGATIVE,
            "availability",
        );
        if rom.quality.len() != reg.len() {
            push(QUALITY_MISSING_ATTR, format!("{base}.quality"), "quality must give every registered attribute".into());
        } else {
            for (ai, v) in rom.quality.values().iter().enumerate() {
                let p = format!("{base}.quality.{}", reg.code(ai));
                if !v.is_finite() {
                    push(QUALITY_NOT_FINITE, p, format!("value {v} is not finite"));
                } else if reg.get(ai).unit == Unit::Percent && !(0.0..=100.0).contains(v) {
                    push(QUALITY_PERCENT_RANGE, p, format!("percent value {v} outside [0, 100]"));
                }
            }
        }
        if let Some(curve) = &rom.curve {
            for (ki, err) in curve.invariant_errors() {
                let (code, field) = match err {
                    ModelError::TooFewKnots(_) => (CURVE_TOO_FEW_KNOTS, String::new()),
                    ModelError::NonFinite(_) => (CURVE_NOT_FINITE, String::new()),
                    ModelError::YieldOutOfRange(_) => (CURVE_YIELD_RANGE, ".yield_fraction".into()),
                    ModelError::PercentOutOfRange(_) => (CURVE_ASH_RANGE, ".product_ash_percent".into()),
                    ModelError::DensityNotIncreasing => (CURVE_DENSITY_ORDER, ".density_gcc".into()),
                    ModelError::AshDecreasing => (CURVE_ASH_ORDER, ".product_ash_percent".into()),
                    ModelError::YieldDecreasing => (CURVE_YIELD_ORDER, ".yield_fraction".into()),
                    _ => (CURVE_NOT_FINITE, String::new()),
                };
                let path = if code == CURVE_TOO_FEW_KNOTS {
                    format!("{base}.curve.knots")
                } else {
                    format!("{base}.curve.knots[{ki}]{field}")
                };
                push(code, path, err.to_string());
            }
        }
        let d = &rom.degradation;
        if d.rate_per_day.len() != reg.len() || d.cap.len() != reg.len() {
            push(DEGRADATION_UNKNOWN_ATTR, format!("{base}.degradation"), "degradation must align with the registry".into());
        } else {
            for ai in 0..reg.len() {
                let p = format!("{base}.degradation.{}", reg.code(ai));
                if !d.rate_per_day[ai].is_finite() || !d.cap[ai].is_finite() {
                    push(DEGRADATION_NOT_FINITE, p, "rate and cap must be finite".into());
                } else if d.cap[ai] < 0.0 {
                    push(DEGRADATION_CAP_NEGATIVE, format!("{p}.cap"), format!("cap {} is negative", d.cap[ai]));
                }
            }
        }
        if !nonneg_finite(rom.haul_hours_per_tonne) {
            push(ROM_HAUL_NEGATIVE, format!("{base}.haul_hours_per_tonne"), "haul hours must be finite and nonnegative".into());
        }
        if !nonneg_finite(rom.staging_haul_hours_per_tonne) || rom.staging_haul_hours_per_tonne > rom.haul_hours_per_tonne {
            push(
                ROM_STAGING_HAUL,
                format!("{base}.staging_haul_hours_per_tonne"),
                "staging haul hours must lie in [0, haul_hours_per_tonne]".into(),
            );
        }
    }

    for (pi, p) in s.products.iter().enumerate() {
        let base = format!("products[{pi}]");
        if p.id.trim().is_empty() {
            push(PRODUCT_EMPTY_ID, format!("{base}.id"), "product id is empty".into());
        } else if s.products.iter().take(pi).any(|o| o.id == p.id) {
            push(PRODUCT_DUPLICATE_ID, format!("{base}.id"), format!("duplicate product id `{}`", p.id));
        }
        for r in &p.ranges {
            if r.attribute >= reg.len() {
                push(RANGE_UNKNOWN_ATTR, format!("{base}.range"), "range references an unknown attribute".into());
                continue;
            }
            let path = format!("{base}.range.{}", reg.code(r.attribute));
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                push(RANGE_INVERTED, path, format!("range [{}, {}] is not a valid interval", r.min, r.max));
            }
        }
        for a in &p.adjustments {
            if a.attribute >= reg.len() {
                push(ADJ_UNKNOWN_ATTR, format!("{base}.adjustments"), "adjustment references an unknown attribute".into());
                continue;
            }
            let path = format!("{base}.adjustments.{}", reg.code(a.attribute));
            if !a.rate_below.is_finite() || !a.rate_above.is_finite() || !a.target.is_finite() {
                push(ADJ_RATE_NOT_FINITE, path.clone(), "adjustment target and rates must be finite".into());
            }
            if let Some(r) = p.range_for(a.attribute) {
                if !r.contains(a.target) {
                    push(
                        ADJ_TARGET_OUTSIDE_RANGE,
                        format!("{path}.target"),
                        format!("target {} outside range [{}, {}]", a.target, r.min, r.max),
                    );
                }
            }
        }
        per_period(&mut push, format!("{base}.base_price_per_tonne"), &p.base_price, PRICE_NEGATIVE, "base price");
        per_period(&mut push, format!("{base}.contract_min_tonnes"), &p.contract_min_tonnes, CONTRACT_NEGATIVE, "contract tonnage");
        per_period(&mut push, format!("{base}.tonnage_target_tonnes"), &p.tonnage_target, TARGET_NEGATIVE, "tonnage target");
    }

    let l = &s.logistics;
    if !(l.lot_size_tonnes.is_finite() && l.lot_size_tonnes > 0.0) {
        push(LOT_SIZE, "logistics.lot_size_tonnes".into(), "lot size must be positive".into());
    }
    if l.min_lots_per_used_rom < 1 {
        push(MIN_LOTS, "logistics.min_lots_per_used_rom".into(), "must be a positive integer".into());
    }
    if l.max_rom_types_per_blend < 1 {
        push(MAX_ROM_TYPES, "logistics.max_rom_types_per_blend".into(), "must be a positive integer".into());
    }
    if let Some(v) = &l.haul_fleet_hours {
        per_period(&mut push, "logistics.haul_fleet_hours".into(), v, HAUL_FLEET_NEGATIVE, "haul fleet hours");
    }
    if let Some(v) = &l.wash_capacity_tonnes {
        per_period(&mut push, "logistics.wash_capacity_tonnes".into(), v, WASH_CAPACITY_NEGATIVE, "wash capacity");
    }
    for (name, v) in [
        ("wash_fixed_cost_per_period", l.wash_fixed_cost_per_period),
        ("wash_variable_cost_per_tonne", l.wash_variable_cost_per_tonne),
        ("rehandle_cost_per_tonne", l.rehandle_cost_per_tonne),
        ("haul_cost_per_hour", l.haul_cost_per_hour),
    ] {
        if !nonneg_finite(v) {
            push(COST_NEGATIVE, format!("logistics.{name}"), format!("{name} must be finite and nonnegative"));
        }
    }
    if !(l.rehandle_loss_fraction >= 0.0 && l.rehandle_loss_fraction < 1.0) {
        push(REHANDLE_LOSS_RANGE, "logistics.rehandle_loss_fraction".into(), "loss fraction must lie in [0, 1)".into());
    }
    if !nonneg_finite(s.market.discount_rate_per_period) {
        push(DISCOUNT_RATE, "market.discount_rate_per_period".into(), "discount rate must be finite and nonnegative".into());
    }
    out
}

//! Domain types: attributes, ROM parcels, products, logistics and the scenario
//! that ties them together.
//!
//! Quality values are stored densely, aligned with the scenario's
//! [`AttributeRegistry`]. Documents and reports use attribute codes; everything
//! inside the evaluation pipeline uses registry indices.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Name of the attribute that washing acts on.
pub const ASH: &str = "ash";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Percent,
    Index,
    MjPerKg,
}

impl Unit {
    /// Physical bounds a value of this unit is clamped to after degradation.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Unit::Percent => (0.0, 100.0),
            Unit::Index | Unit::MjPerKg => (0.0, f64::INFINITY),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Percent => "percent",
            Unit::Index => "index",
            Unit::MjPerKg => "mj-per-kg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub code: String,
    pub unit: Unit,
    pub lower_is_better: bool,
}

impl Attribute {
    pub fn new(code: impl Into<String>, unit: Unit, lower_is_better: bool) -> Self {
        Self { code: code.into(), unit, lower_is_better }
    }
}

/// The set of quality attributes tracked for a scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeRegistry {
    entries: Vec<Attribute>,
}

impl AttributeRegistry {
    pub fn new(entries: Vec<Attribute>) -> Result<Self, ModelError> {
        for (i, a) in entries.iter().enumerate() {
            if a.code.trim().is_empty() {
                return Err(ModelError::EmptyAttributeCode);
            }
            if entries[..i].iter().any(|b| b.code == a.code) {
                return Err(ModelError::DuplicateAttribute(a.code.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Registry with only `ash` in percent; handy for single-attribute work.
    pub fn ash_only() -> Self {
        Self { entries: vec![Attribute::new(ASH, Unit::Percent, true)] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.entries.iter().position(|a| a.code == code)
    }

    pub fn ash_index(&self) -> Option<usize> {
        self.index_of(ASH)
    }

    pub fn get(&self, index: usize) -> &Attribute {
        &self.entries[index]
    }

    pub fn code(&self, index: usize) -> &str {
        &self.entries[index].code
    }

    pub fn iter(&self) -> impl Iterator<Item = &Attribute> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[Attribute] {
        &self.entries
    }
}

/// Attribute values aligned with an [`AttributeRegistry`].
#[derive(Debug, Clone, PartialEq)]
pub struct QualityVector(Vec<f64>);

impl QualityVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Builds a vector from `(code, value)` pairs. Every registry attribute
    /// must be given exactly once.
    pub fn from_pairs(registry: &AttributeRegistry, pairs: &[(&str, f64)]) -> Result<Self, ModelError> {
        let mut values = vec![f64::NAN; registry.len()];
        for (code, value) in pairs {
            let i = registry
                .index_of(code)
                .ok_or_else(|| ModelError::UnknownAttribute((*code).to_string()))?;
            if !value.is_finite() {
                return Err(ModelError::NonFinite((*code).to_string()));
            }
            values[i] = *value;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(ModelError::MissingAttribute(registry.code(i).to_string()));
        }
        Ok(Self(values))
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, value: f64) {
        self.0[index] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_map(&self, registry: &AttributeRegistry) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, v)| (registry.code(i).to_string(), *v))
            .collect()
    }
}

/// One point of an ash-yield curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub density: f64,
    pub product_ash: f64,
    pub yield_fraction: f64,
}

impl Knot {
    pub fn new(density: f64, product_ash: f64, yield_fraction: f64) -> Self {
        Self { density, product_ash, yield_fraction }
    }
}

/// Washability of one ROM: product ash and yield as functions of the
/// heavy-medium cut-point density.
#[derive(Debug, Clone, PartialEq)]
pub struct AshYieldCurve {
    pub knots: Vec<Knot>,
    pub bypass_allowed: bool,
}

impl AshYieldCurve {
    pub fn new(knots: Vec<Knot>, bypass_allowed: bool) -> Result<Self, ModelError> {
        let curve = Self { knots, bypass_allowed };
        if let Some((_, err)) = curve.invariant_errors().into_iter().next() {
            return Err(err);
        }
        Ok(curve)
    }

    /// Every violated curve invariant, paired with the offending knot index.
    pub(crate) fn invariant_errors(&self) -> Vec<(usize, ModelError)> {
        let mut errors = Vec::new();
        if self.knots.len() < 2 {
            errors.push((0, ModelError::TooFewKnots(self.knots.len())));
        }
        for (i, k) in self.knots.iter().enumerate() {
            if !(k.density.is_finite() && k.product_ash.is_finite() && k.yield_fraction.is_finite()) {
                errors.push((i, ModelError::NonFinite(format!("knot {i}"))));
                continue;
            }
            if !(k.yield_fraction > 0.0 && k.yield_fraction <= 1.0) {
                errors.push((i, ModelError::YieldOutOfRange(k.yield_fraction)));
            }
            if !(0.0..=100.0).contains(&k.product_ash) {
                errors.push((i, ModelError::PercentOutOfRange(k.product_ash)));
            }
            if i > 0 {
                let prev = &self.knots[i - 1];
                if k.density <= prev.density {
                    errors.push((i, ModelError::DensityNotIncreasing));
                }
                if k.product_ash < prev.product_ash {
                    errors.push((i, ModelError::AshDecreasing));
                }
                if k.yield_fraction < prev.yield_fraction {
                    errors.push((i, ModelError::YieldDecreasing));
                }
            }
        }
        errors
    }

    pub fn min_density(&self) -> f64 {
        self.knots[0].density
    }

    pub fn max_density(&self) -> f64 {
        self.knots[self.knots.len() - 1].density
    }

    /// Linear interpolation of `(product_ash, yield)` at `density`.
    pub fn interpolate(&self, density: f64) -> Result<(f64, f64), ModelError> {
        let (lo, hi) = (self.min_density(), self.max_density());
        if !(density >= lo && density <= hi) {
            return Err(ModelError::CutPointOutOfRange { density, min: lo, max: hi });
        }
        // partition_point gives the first knot strictly above density
        let upper = self.knots.partition_point(|k| k.density <= density);
        if upper == 0 {
            let k = self.knots[0];
            return Ok((k.product_ash, k.yield_fraction));
        }
        let a = self.knots[upper - 1];
        if upper == self.knots.len() || a.density == density {
            return Ok((a.product_ash, a.yield_fraction));
        }
        let b = self.knots[upper];
        let w = (density - a.density) / (b.density - a.density);
        Ok((
            a.product_ash + w * (b.product_ash - a.product_ash),
            a.yield_fraction + w * (b.yield_fraction - a.yield_fraction),
        ))
    }
}

/// Linear-per-day drift of quality on the stockpile, capped per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationModel {
    pub rate_per_day: Vec<f64>,
    pub cap: Vec<f64>,
}

impl DegradationModel {
    pub fn none(attributes: usize) -> Self {
        Self { rate_per_day: vec![0.0; attributes], cap: vec![0.0; attributes] }
    }

    pub fn from_pairs(
        registry: &AttributeRegistry,
        entries: &[(&str, f64, f64)],
    ) -> Result<Self, ModelError> {
        let mut model = Self::none(registry.len());
        for (code, rate, cap) in entries {
            let i = registry
                .index_of(code)
                .ok_or_else(|| ModelError::UnknownAttribute((*code).to_string()))?;
            if *cap < 0.0 {
                return Err(ModelError::NegativeCap((*code).to_string()));
            }
            model.rate_per_day[i] = *rate;
            model.cap[i] = *cap;
        }
        Ok(model)
    }

    pub fn is_inert(&self) -> bool {
        self.rate_per_day.iter().all(|r| *r == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomParcel {
    pub id: String,
    pub pit: String,
    /// Day index the parcel was excavated; degradation age is measured from here.
    pub excavation_day: i64,
    /// Tonnes becoming available in each period. Unused stock carries over.
    pub available_tonnes: Vec<f64>,
    pub quality: QualityVector,
    pub curve: Option<AshYieldCurve>,
    pub degradation: DegradationModel,
    pub haul_hours_per_tonne: f64,
    pub staging_haul_hours_per_tonne: f64,
}

/// Price adjustment for one attribute relative to a target value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub attribute: usize,
    pub target: f64,
    /// Money per tonne per unit the blend sits below `target`.
    pub rate_below: f64,
    /// Money per tonne per unit the blend sits above `target`.
    pub rate_above: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityRange {
    pub attribute: usize,
    pub min: f64,
    pub max: f64,
}

impl QualityRange {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpec {
    pub id: String,
    pub ranges: Vec<QualityRange>,
    pub adjustments: Vec<Adjustment>,
    pub base_price: Vec<f64>,
    pub contract_min_tonnes: Vec<f64>,
    /// Feed tonnage the product is blended up to in each period.
    pub tonnage_target: Vec<f64>,
}

impl ProductSpec {
    pub fn range_for(&self, attribute: usize) -> Option<&QualityRange> {
        self.ranges.iter().find(|r| r.attribute == attribute)
    }

    /// Mean base price over the horizon; used to rank products.
    pub fn mean_price(&self) -> f64 {
        if self.base_price.is_empty() {
            0.0
        } else {
            self.base_price.iter().sum::<f64>() / self.base_price.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticsConstraints {
    pub lot_size_tonnes: f64,
    pub min_lots_per_used_rom: u32,
    pub max_rom_types_per_blend: u32,
    /// `None` means the haul fleet is not a constraint.
    pub haul_fleet_hours: Option<Vec<f64>>,
    /// `None` means the wash plant has no throughput limit.
    pub wash_capacity_tonnes: Option<Vec<f64>>,
    pub wash_fixed_cost_per_period: f64,
    pub wash_variable_cost_per_tonne: f64,
    pub rehandle_cost_per_tonne: f64,
    pub rehandle_loss_fraction: f64,
    pub haul_cost_per_hour: f64,
}

pub const DEFAULT_LOT_SIZE_TONNES: f64 = 1000.0;
pub const DEFAULT_MAX_ROM_TYPES: u32 = 64;

impl Default for LogisticsConstraints {
    fn default() -> Self {
        Self {
            lot_size_tonnes: DEFAULT_LOT_SIZE_TONNES,
            min_lots_per_used_rom: 1,
            max_rom_types_per_blend: DEFAULT_MAX_ROM_TYPES,
            haul_fleet_hours: None,
            wash_capacity_tonnes: None,
            wash_fixed_cost_per_period: 0.0,
            wash_variable_cost_per_tonne: 0.0,
            rehandle_cost_per_tonne: 0.0,
            rehandle_loss_fraction: 0.0,
            haul_cost_per_hour: 0.0,
        }
    }
}

impl LogisticsConstraints {
    pub fn haul_limit(&self, period: usize) -> f64 {
        self.haul_fleet_hours.as_ref().map_or(f64::INFINITY, |v| v[period])
    }

    pub fn wash_limit(&self, period: usize) -> f64 {
        self.wash_capacity_tonnes.as_ref().map_or(f64::INFINITY, |v| v[period])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarketModel {
    pub discount_rate_per_period: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon_periods: usize,
    pub days_per_period: u32,
    pub registry: AttributeRegistry,
    pub roms: Vec<RomParcel>,
    pub products: Vec<ProductSpec>,
    pub logistics: LogisticsConstraints,
    pub market: MarketModel,
}

impl Scenario {
    pub fn rom_index(&self, id: &str) -> Option<usize> {
        self.roms.iter().position(|r| r.id == id)
    }

    pub fn product_index(&self, id: &str) -> Option<usize> {
        self.products.iter().position(|p| p.id == id)
    }

    /// Day index of the middle of `period`.
    pub fn period_midpoint_day(&self, period: usize) -> i64 {
        period as i64 * self.days_per_period as i64 + self.days_per_period as i64 / 2
    }

    /// Stockpile age of a ROM at the middle of `period`, never negative.
    pub fn rom_age_days(&self, rom: usize, period: usize) -> i64 {
        (self.period_midpoint_day(period) - self.roms[rom].excavation_day).max(0)
    }

    /// Maximum feed lots a product may take in a period.
    pub fn max_lots(&self, product: usize, period: usize) -> u32 {
        lots_floor(self.products[product].tonnage_target[period], self.logistics.lot_size_tonnes)
    }

    /// Minimum feed lots that could possibly meet the period's contract.
    pub fn contract_lots(&self, product: usize, period: usize) -> u32 {
        lots_ceil(self.products[product].contract_min_tonnes[period], self.logistics.lot_size_tonnes)
    }

    /// Lots of a ROM available by the end of `period` (cumulative, floored).
    pub fn cumulative_rom_lots(&self, rom: usize, period: usize) -> u32 {
        let total: f64 = self.roms[rom].available_tonnes[..=period].iter().sum();
        lots_floor(total, self.logistics.lot_size_tonnes)
    }

    /// Checks every type invariant, returning all problems found.
    pub fn validate(&self) -> Vec<crate::validate::ValidationIssue> {
        crate::validate::validate_scenario(self)
    }
}

const LOT_EPS: f64 = 1e-9;

pub(crate) fn lots_floor(tonnes: f64, lot: f64) -> u32 {
    if !(tonnes > 0.0) {
        return 0;
    }
    let x = tonnes / lot;
    (x + LOT_EPS).floor().min(u32::MAX as f64) as u32
}

pub(crate) fn lots_ceil(tonnes: f64, lot: f64) -> u32 {
    if !(tonnes > 0.0) {
        return 0;
    }
    let x = tonnes / lot;
    (x - LOT_EPS).ceil().max(0.0).min(u32::MAX as f64) as u32
}

//! `.scenario` documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    Adjustment, AshYieldCurve, Attribute, AttributeRegistry, DegradationModel, Knot, LogisticsConstraints,
    MarketModel, ProductSpec, QualityRange, QualityVector, RomParcel, Scenario, Unit, DEFAULT_LOT_SIZE_TONNES,
    DEFAULT_MAX_ROM_TYPES,
};
use crate::validate::{codes, ValidationIssue};

use super::{parse_document, DocumentError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    pub horizon_periods: usize,
    pub days_per_period: u32,
    #[serde(default = "default_attributes")]
    pub attributes: Vec<AttributeDoc>,
    #[serde(default)]
    pub logistics: LogisticsDoc,
    #[serde(default)]
    pub market: MarketDoc,
    #[serde(default)]
    pub roms: Vec<RomDoc>,
    #[serde(default)]
    pub products: Vec<ProductDoc>,
}

fn default_attributes() -> Vec<AttributeDoc> {
    vec![AttributeDoc { code: crate::model::ASH.into(), unit: Unit::Percent, lower_is_better: true }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDoc {
    pub code: String,
    pub unit: Unit,
    #[serde(default)]
    pub lower_is_better: bool,
}

fn default_lot() -> f64 {
    DEFAULT_LOT_SIZE_TONNES
}

fn default_min_lots() -> u32 {
    1
}

fn default_max_types() -> u32 {
    DEFAULT_MAX_ROM_TYPES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticsDoc {
    #[serde(default = "default_lot")]
    pub lot_size_tonnes: f64,
    #[serde(default = "default_min_lots")]
    pub min_lots_per_used_rom: u32,
    #[serde(default = "default_max_types")]
    pub max_rom_types_per_blend: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub haul_fleet_hours: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wash_capacity_tonnes: Option<Vec<f64>>,
    #[serde(default)]
    pub wash_fixed_cost_per_period: f64,
    #[serde(default)]
    pub wash_variable_cost_per_tonne: f64,
    #[serde(default)]
    pub rehandle_cost_per_tonne: f64,
    #[serde(default)]
    pub rehandle_loss_fraction: f64,
    #[serde(default)]
    pub haul_cost_per_hour: f64,
}

impl Default for LogisticsDoc {
    fn default() -> Self {
        LogisticsDoc::from(&LogisticsConstraints::default())
    }
}

impl From<&LogisticsConstraints> for LogisticsDoc {
    fn from(l: &LogisticsConstraints) -> Self {
        Self {
            lot_size_tonnes: l.lot_size_tonnes,
            min_lots_per_used_rom: l.min_lots_per_used_rom,
            max_rom_types_per_blend: l.max_rom_types_per_blend,
            haul_fleet_hours: l.haul_fleet_hours.clone(),
            wash_capacity_tonnes: l.wash_capacity_tonnes.clone(),
            wash_fixed_cost_per_period: l.wash_fixed_cost_per_period,
            wash_variable_cost_per_tonne: l.wash_variable_cost_per_tonne,
            rehandle_cost_per_tonne: l.rehandle_cost_per_tonne,
            rehandle_loss_fraction: l.rehandle_loss_fraction,
            haul_cost_per_hour: l.haul_cost_per_hour,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketDoc {
    #[serde(default)]
    pub discount_rate_per_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotDoc {
    pub density_gcc: f64,
    pub product_ash_percent: f64,
    pub yield_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveDoc {
    #[serde(default)]
    pub bypass_allowed: bool,
    pub knots: Vec<KnotDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftDoc {
    pub rate_per_day: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomDoc {
    pub id: String,
    #[serde(default)]
    pub pit: String,
    #[serde(default)]
    pub excavation_day: i64,
    pub available_tonnes: Vec<f64>,
    #[serde(default)]
    pub haul_hours_per_tonne: f64,
    #[serde(default)]
    pub staging_haul_hours_per_tonne: f64,
    pub quality: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub degradation: BTreeMap<String, DriftDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeDoc {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustmentDoc {
    pub target: f64,
    pub rate_below: f64,
    pub rate_above: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductDoc {
    pub id: String,
    pub base_price_per_tonne: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract_min_tonnes: Option<Vec<f64>>,
    pub tonnage_target_tonnes: Vec<f64>,
    #[serde(default)]
    pub range: BTreeMap<String, RangeDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub adjustments: BTreeMap<String, AdjustmentDoc>,
}

impl ScenarioDocument {
    pub fn from_scenario(s: &Scenario) -> Self {
        let reg = &s.registry;
        let roms = s
            .roms
            .iter()
            .map(|r| RomDoc {
                id: r.id.clone(),
                pit: r.pit.clone(),
                excavation_day: r.excavation_day,
                available_tonnes: r.available_tonnes.clone(),
                haul_hours_per_tonne: r.haul_hours_per_tonne,
                staging_haul_hours_per_tonne: r.staging_haul_hours_per_tonne,
                quality: r.quality.to_map(reg),
                curve: r.curve.as_ref().map(|c| CurveDoc {
                    bypass_allowed: c.bypass_allowed,
                    knots: c
                        .knots
                        .iter()
                        .map(|k| KnotDoc {
                            density_gcc: k.density,
                            product_ash_percent: k.product_ash,
                            yield_fraction: k.yield_fraction,
                        })
                        .collect(),
                }),
                degradation: (0..reg.len())
                    .filter(|&a| r.degradation.rate_per_day[a] != 0.0 || r.degradation.cap[a] != 0.0)
                    .map(|a| {
                        (
                            reg.code(a).to_string(),
                            DriftDoc { rate_per_day: r.degradation.rate_per_day[a], cap: r.degradation.cap[a] },
                        )
                    })
                    .collect(),
            })
            .collect();
        let products = s
            .products
            .iter()
            .map(|p| ProductDoc {
                id: p.id.clone(),
                base_price_per_tonne: p.base_price.clone(),
                contract_min_tonnes: Some(p.contract_min_tonnes.clone()),
                tonnage_target_tonnes: p.tonnage_target.clone(),
                range: p
                    .ranges
                    .iter()
                    .map(|r| (reg.code(r.attribute).to_string(), RangeDoc { min: r.min, max: r.max }))
                    .collect(),
                adjustments: p
                    .adjustments
                    .iter()
                    .map(|a| {
                        (
                            reg.code(a.attribute).to_string(),
                            AdjustmentDoc { target: a.target, rate_below: a.rate_below, rate_above: a.rate_above },
                        )
                    })
                    .collect(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            horizon_periods: s.horizon_periods,
            days_per_period: s.days_per_period,
            attributes: reg
                .iter()
                .map(|a| AttributeDoc { code: a.code.clone(), unit: a.unit, lower_is_better: a.lower_is_better })
                .collect(),
            logistics: LogisticsDoc::from(&s.logistics),
            market: MarketDoc { discount_rate_per_period: s.market.discount_rate_per_period },
            roms,
            products,
        }
    }

    /// Builds and validates the scenario, reporting every problem found.
    pub fn into_scenario(self) -> Result<Scenario, Vec<ValidationIssue>> {
        let mut issues = Vec::new();
        let registry = match AttributeRegistry::new(
            self.attributes.iter().map(|a| Attribute::new(a.code.clone(), a.unit, a.lower_is_better)).collect(),
        ) {
            Ok(r) => r,
            Err(_) => {
                // report through the shared validator on a throwaway scenario
                for (i, a) in self.attributes.iter().enumerate() {
                    if a.code.trim().is_empty() {
                        issues.push(ValidationIssue::new(codes::ATTR_EMPTY_CODE, format!("attributes[{i}].code"), "attribute code is empty"));
                    } else if self.attributes[..i].iter().any(|b| b.code == a.code) {
                        issues.push(ValidationIssue::new(
                            codes::ATTR_DUPLICATE,
                            format!("attributes[{i}].code"),
                            format!("duplicate attribute `{}`", a.code),
                        ));
                    }
                }
                return Err(issues);
            }
        };
        let horizon = self.horizon_periods;

        let mut roms = Vec::with_capacity(self.roms.len());
        for (ri, r) in self.roms.into_iter().enumerate() {
            let base = format!("roms[{ri}]");
            let mut values = vec![f64::NAN; registry.len()];
            for (code, v) in &r.quality {
                match registry.index_of(code) {
                    Some(a) => values[a] = *v,
                    None => issues.push(ValidationIssue::new(
                        codes::QUALITY_UNKNOWN_ATTR,
                        format!("{base}.quality.{code}"),
                        format!("unknown attribute `{code}`"),
                    )),
                }
            }
            for (a, v) in values.iter_mut().enumerate() {
                if !r.quality.contains_key(registry.code(a)) {
                    issues.push(ValidationIssue::new(
                        codes::QUALITY_MISSING_ATTR,
                        format!("{base}.quality.{}", registry.code(a)),
                        format!("attribute `{}` is missing", registry.code(a)),
                    ));
                    *v = 0.0;
                }
            }
            let mut degradation = DegradationModel::none(registry.len());
            for (code, d) in &r.degradation {
                match registry.index_of(code) {
                    Some(a) => {
                        degradation.rate_per_day[a] = d.rate_per_day;
                        degradation.cap[a] = d.cap;
                    }
                    None => issues.push(ValidationIssue::new(
                        codes::DEGRADATION_UNKNOWN_ATTR,
                        format!("{base}.degradation.{code}"),
                        format!("unknown attribute `{code}`"),
                    )),
                }
            }
            roms.push(RomParcel {
                id: r.id,
                pit: r.pit,
                excavation_day: r.excavation_day,
                available_tonnes: r.available_tonnes,
                quality: QualityVector::from_values(values),
                curve: r.curve.map(|c| AshYieldCurve {
                    knots: c
                        .knots
                        .iter()
                        .map(|k| Knot::new(k.density_gcc, k.product_ash_percent, k.yield_fraction))
                        .collect(),
                    bypass_allowed: c.bypass_allowed,
                }),
                degradation,
                haul_hours_per_tonne: r.haul_hours_per_tonne,
                staging_haul_hours_per_tonne: r.staging_haul_hours_per_tonne,
            });
        }

        let mut products = Vec::with_capacity(self.products.len());
        for (pi, p) in self.products.into_iter().enumerate() {
            let base = format!("products[{pi}]");
            let mut ranges = Vec::new();
            for (code, r) in &p.range {
                match registry.index_of(code) {
                    Some(a) => ranges.push(QualityRange { attribute: a, min: r.min, max: r.max }),
                    None => issues.push(ValidationIssue::new(
                        codes::RANGE_UNKNOWN_ATTR,
                        format!("{base}.range.{code}"),
                        format!("unknown attribute `{code}`"),
                    )),
                }
            }
            ranges.sort_by_key(|r| r.attribute);
            let mut adjustments = Vec::new();
            for (code, a) in &p.adjustments {
                match registry.index_of(code) {
                    Some(i) => adjustments.push(Adjustment {
                        attribute: i,
                        target: a.target,
                        rate_below: a.rate_below,
                        rate_above: a.rate_above,
                    }),
                    None => issues.push(ValidationIssue::new(
                        codes::ADJ_UNKNOWN_ATTR,
                        format!("{base}.adjustments.{code}"),
                        format!("unknown attribute `{code}`"),
                    )),
                }
            }
            adjustments.sort_by_key(|a| a.attribute);
            products.push(ProductSpec {
                id: p.id,
                ranges,
                adjustments,
                base_price: p.base_price_per_tonne,
                contract_min_tonnes: p.contract_min_tonnes.unwrap_or_else(|| vec![0.0; horizon]),
                tonnage_target: p.tonnage_target_tonnes,
            });
        }

        let l = self.logistics;
        let scenario = Scenario {
            horizon_periods: horizon,
            days_per_period: self.days_per_period,
            registry,
            roms,
            products,
            logistics: LogisticsConstraints {
                lot_size_tonnes: l.lot_size_tonnes,
                min_lots_per_used_rom: l.min_lots_per_used_rom,
                max_rom_types_per_blend: l.max_rom_types_per_blend,
                haul_fleet_hours: l.haul_fleet_hours,
                wash_capacity_tonnes: l.wash_capacity_tonnes,
                wash_fixed_cost_per_period: l.wash_fixed_cost_per_period,
                wash_variable_cost_per_tonne: l.wash_variable_cost_per_tonne,
                rehandle_cost_per_tonne: l.rehandle_cost_per_tonne,
                rehandle_loss_fraction: l.rehandle_loss_fraction,
                haul_cost_per_hour: l.haul_cost_per_hour,
            },
            market: MarketModel { discount_rate_per_period: self.market.discount_rate_per_period },
        };
        issues.extend(scenario.validate());
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(issues)
        }
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(bytes: &[u8]) -> Result<Scenario, DocumentError> {
    let doc: ScenarioDocument = parse_document(bytes)?;
    doc.into_scenario().map_err(DocumentError::Invalid)
}

/// Canonical text form of `scenario`.
pub fn save_scenario(scenario: &Scenario) -> String {
    toml::to_string(&ScenarioDocument::from_scenario(scenario)).expect("scenario documents always serialize")
}

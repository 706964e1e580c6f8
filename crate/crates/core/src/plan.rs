//! Blend plans.
//!
//! [`BlendPlan`] is the id-based form that is saved, exchanged and shown to
//! planners. [`PlanGrid`] is the dense, index-based form the evaluator and the
//! search work on. [`PlanGrid::bind`] converts one into the other and is where
//! dangling ids and malformed cut-points are caught.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::PlanError;
use crate::model::Scenario;

/// Wash plant setting for one ROM in one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutPoint {
    /// Heavy-medium separation density in g/cc.
    Density(f64),
    /// Material skips the wash plant.
    Bypass,
}

impl CutPoint {
    pub fn density(self) -> Option<f64> {
        match self {
            CutPoint::Density(d) => Some(d),
            CutPoint::Bypass => None,
        }
    }

    pub fn is_bypass(self) -> bool {
        matches!(self, CutPoint::Bypass)
    }

    /// Total order with bypass first, used for canonical sorting.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (CutPoint::Bypass, CutPoint::Bypass) => Ordering::Equal,
            (CutPoint::Bypass, _) => Ordering::Less,
            (_, CutPoint::Bypass) => Ordering::Greater,
            (CutPoint::Density(a), CutPoint::Density(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for CutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CutPoint::Density(d) => write!(f, "{d}"),
            CutPoint::Bypass => f.write_str("bypass"),
        }
    }
}

impl Serialize for CutPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CutPoint::Density(d) => s.serialize_f64(*d),
            CutPoint::Bypass => s.serialize_str("bypass"),
        }
    }
}

impl<'de> Deserialize<'de> for CutPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl de::Visitor<'_> for V {
            type Value = CutPoint;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a density in g/cc or \"bypass\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<CutPoint, E> {
                Ok(CutPoint::Density(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CutPoint, E> {
                Ok(CutPoint::Density(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CutPoint, E> {
                Ok(CutPoint::Density(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<CutPoint, E> {
                if v == "bypass" {
                    Ok(CutPoint::Bypass)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allotment {
    pub period: usize,
    pub product: String,
    pub rom: String,
    pub lots: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutAssignment {
    pub period: usize,
    pub rom: String,
    pub cut: CutPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rehandle {
    pub period: usize,
    pub rom: String,
    pub tonnes: f64,
}

/// Lot allotments, wash cut-points and rehandle moves, referencing scenario
/// objects by id only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendPlan {
    #[serde(default)]
    pub allotments: Vec<Allotment>,
    #[serde(default)]
    pub cut_points: Vec<CutAssignment>,
    #[serde(default)]
    pub rehandles: Vec<Rehandle>,
}

impl BlendPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts entries by `(period, product, rom)` and drops zero-lot allotments
    /// and zero-tonne rehandles.
    pub fn canonicalize(&mut self) {
        self.allotments.retain(|a| a.lots > 0);
        self.allotments
            .sort_by(|a, b| (a.period, &a.product, &a.rom).cmp(&(b.period, &b.product, &b.rom)));
        self.cut_points.sort_by(|a, b| (a.period, &a.rom).cmp(&(b.period, &b.rom)));
        self.rehandles.retain(|r| r.tonnes > 0.0);
        self.rehandles.sort_by(|a, b| (a.period, &a.rom).cmp(&(b.period, &b.rom)));
    }

    pub fn total_lots(&self) -> u64 {
        self.allotments.iter().map(|a| a.lots as u64).sum()
    }

    pub fn lots_of(&self, period: usize, product: &str, rom: &str) -> u32 {
        self.allotments
            .iter()
            .filter(|a| a.period == period && a.product == product && a.rom == rom)
            .map(|a| a.lots)
            .sum()
    }
}

/// Dense plan indexed by `(period, product, rom)` for lots and `(period, rom)`
/// for cut-points and rehandles.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGrid {
    periods: usize,
    products: usize,
    roms: usize,
    pub(crate) lots: Vec<u32>,
    pub(crate) cuts: Vec<CutPoint>,
    pub(crate) rehandle: Vec<f64>,
}

impl PlanGrid {
    /// A plan with no lots, default cut-points (the highest-yield knot for
    /// washable ROMs) and no rehandling.
    pub fn empty(scenario: &Scenario) -> Self {
        let (t, p, r) = (scenario.horizon_periods, scenario.products.len(), scenario.roms.len());
        let mut cuts = Vec::with_capacity(t * r);
        for _ in 0..t {
            for rom in &scenario.roms {
                cuts.push(default_cut(rom));
            }
        }
        Self { periods: t, products: p, roms: r, lots: vec![0; t * p * r], cuts, rehandle: vec![0.0; t * r] }
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn products(&self) -> usize {
        self.products
    }

    pub fn roms(&self) -> usize {
        self.roms
    }

    #[inline]
    pub fn cell(&self, period: usize, product: usize, rom: usize) -> usize {
        (period * self.products + product) * self.roms + rom
    }

    #[inline]
    pub fn lots(&self, period: usize, product: usize, rom: usize) -> u32 {
        self.lots[self.cell(period, product, rom)]
    }

    #[inline]
    pub fn set_lots(&mut self, period: usize, product: usize, rom: usize, lots: u32) {
        let i = self.cell(period, product, rom);
        self.lots[i] = lots;
    }

    pub fn lots_slice(&self) -> &[u32] {
        &self.lots
    }

    /// `(period, product, rom)` of a flat cell index.
    pub fn coords(&self, cell: usize) -> (usize, usize, usize) {
        let rom = cell % self.roms;
        let rest = cell / self.roms;
        (rest / self.products, rest % self.products, rom)
    }

    #[inline]
    pub fn cut(&self, period: usize, rom: usize) -> CutPoint {
        self.cuts[period * self.roms + rom]
    }

    pub fn set_cut(&mut self, period: usize, rom: usize, cut: CutPoint) {
        self.cuts[period * self.roms + rom] = cut;
    }

    #[inline]
    pub fn rehandle(&self, period: usize, rom: usize) -> f64 {
        self.rehandle[period * self.roms + rom]
    }

    pub fn set_rehandle(&mut self, period: usize, rom: usize, tonnes: f64) {
        self.rehandle[period * self.roms + rom] = tonnes;
    }

    /// Feed lots of a ROM across all products in a period.
    pub fn rom_lots(&self, period: usize, rom: usize) -> u32 {
        (0..self.products).map(|p| self.lots(period, p, rom)).sum()
    }

    /// Feed lots of a product blend in a period.
    pub fn blend_lots(&self, period: usize, product: usize) -> u32 {
        let start = self.cell(period, product, 0);
        self.lots[start..start + self.roms].iter().sum()
    }

    pub fn total_lots(&self) -> u64 {
        self.lots.iter().map(|l| *l as u64).sum()
    }

    /// Number of cells whose lot counts differ.
    pub fn hamming(&self, other: &PlanGrid) -> usize {
        self.lots.iter().zip(&other.lots).filter(|(a, b)| a != b).count()
    }

    /// Total lots that would have to move to turn one plan into the other.
    pub fn lot_distance(&self, other: &PlanGrid) -> u64 {
        self.lots.iter().zip(&other.lots).map(|(a, b)| a.abs_diff(*b) as u64).sum()
    }

    /// Binds an id-based plan to `scenario`.
    pub fn bind(scenario: &Scenario, plan: &BlendPlan) -> Result<Self, PlanError> {
        let horizon = scenario.horizon_periods;
        let rom_idx: HashMap<&str, usize> = scenario.roms.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let prod_idx: HashMap<&str, usize> =
            scenario.products.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let check_period = |period: usize| {
            if period >= horizon {
                Err(PlanError::PeriodOutOfRange { period, horizon })
            } else {
                Ok(())
            }
        };
        let rom_of = |id: &str| rom_idx.get(id).copied().ok_or_else(|| PlanError::UnknownRom(id.to_string()));

        let mut grid = Self::empty(scenario);
        let mut seen_cells = vec![false; grid.lots.len()];
        for a in &plan.allotments {
            check_period(a.period)?;
            let p = prod_idx.get(a.product.as_str()).copied().ok_or_else(|| PlanError::UnknownProduct(a.product.clone()))?;
            let r = rom_of(&a.rom)?;
            let cell = grid.cell(a.period, p, r);
            if seen_cells[cell] {
                return Err(PlanError::DuplicateAllotment {
                    period: a.period,
                    product: a.product.clone(),
                    rom: a.rom.clone(),
                });
            }
            seen_cells[cell] = true;
            grid.lots[cell] = a.lots;
        }

        let mut has_cut = vec![false; grid.cuts.len()];
        for c in &plan.cut_points {
            check_period(c.period)?;
            let r = rom_of(&c.rom)?;
            let i = c.period * grid.roms + r;
            if has_cut[i] {
                return Err(PlanError::DuplicateCutPoint { period: c.period, rom: c.rom.clone() });
            }
            validate_cut(scenario, r, c.cut)?;
            has_cut[i] = true;
            grid.cuts[i] = c.cut;
        }

        for t in 0..horizon {
            for (r, rom) in scenario.roms.iter().enumerate() {
                if rom.curve.is_some() && !has_cut[t * grid.roms + r] && grid.rom_lots(t, r) > 0 {
                    return Err(PlanError::MissingCutPoint { period: t, rom: rom.id.clone() });
                }
            }
        }

        let mut has_rehandle = vec![false; grid.rehandle.len()];
        for m in &plan.rehandles {
            check_period(m.period)?;
            let r = rom_of(&m.rom)?;
            let i = m.period * grid.roms + r;
            if has_rehandle[i] || !(m.tonnes.is_finite() && m.tonnes >= 0.0) {
                return Err(PlanError::InvalidRehandle { period: m.period, rom: m.rom.clone(), tonnes: m.tonnes });
            }
            has_rehandle[i] = true;
            grid.rehandle[i] = m.tonnes;
        }
        Ok(grid)
    }

    /// Canonical id-based form. Cut-points are emitted for every washable ROM
    /// in every period so the plan round-trips exactly.
    pub fn to_plan(&self, scenario: &Scenario) -> BlendPlan {
        let mut plan = BlendPlan::empty();
        for t in 0..self.periods {
            for p in 0..self.products {
                for r in 0..self.roms {
                    let lots = self.lots(t, p, r);
                    if lots > 0 {
                        plan.allotments.push(Allotment {
                            period: t,
                            product: scenario.products[p].id.clone(),
                            rom: scenario.roms[r].id.clone(),
                            lots,
                        });
                    }
                }
            }
            for (r, rom) in scenario.roms.iter().enumerate() {
                if rom.curve.is_some() {
                    plan.cut_points.push(CutAssignment { period: t, rom: rom.id.clone(), cut: self.cut(t, r) });
                }
                let moved = self.rehandle(t, r);
                if moved > 0.0 {
                    plan.rehandles.push(Rehandle { period: t, rom: rom.id.clone(), tonnes: moved });
                }
            }
        }
        plan.canonicalize();
        plan
    }
}

pub(crate) fn default_cut(rom: &crate::model::RomParcel) -> CutPoint {
    match &rom.curve {
        Some(c) => CutPoint::Density(c.max_density()),
        None => CutPoint::Bypass,
    }
}

pub(crate) fn validate_cut(scenario: &Scenario, rom: usize, cut: CutPoint) -> Result<(), PlanError> {
    use crate::error::ModelError;
    let parcel = &scenario.roms[rom];
    match (cut, &parcel.curve) {
        (CutPoint::Bypass, None) => Ok(()),
        (CutPoint::Bypass, Some(c)) if c.bypass_allowed => Ok(()),
        (CutPoint::Bypass, Some(_)) => Err(ModelError::BypassNotAllowed(parcel.id.clone()).into()),
        (CutPoint::Density(_), None) => Err(ModelError::NoWashCurve(parcel.id.clone()).into()),
        (CutPoint::Density(d), Some(c)) => {
            if d >= c.min_density() && d <= c.max_density() {
                Ok(())
            } else {
                Err(ModelError::CutPointOutOfRange { density: d, min: c.min_density(), max: c.max_density() }.into())
            }
        }
    }
}

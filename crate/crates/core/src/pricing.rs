//! Contract quality checks and the penalty/bonus price schedule.

use serde::Serialize;

use crate::error::ModelError;
use crate::model::{ProductSpec, QualityVector};

/// An attribute outside its contractual range. `excess` is positive above the
/// maximum and negative below the minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecViolation {
    pub attribute: usize,
    pub excess: f64,
}

/// Every attribute of `quality` outside the product's closed ranges.
pub fn check_spec(quality: &QualityVector, spec: &ProductSpec) -> Vec<SpecViolation> {
    let mut out = Vec::new();
    for range in &spec.ranges {
        let v = quality.get(range.attribute);
        if v > range.max {
            out.push(SpecViolation { attribute: range.attribute, excess: v - range.max });
        } else if v < range.min {
            out.push(SpecViolation { attribute: range.attribute, excess: v - range.min });
        }
    }
    out
}

pub(crate) fn in_spec(quality: &[f64], spec: &ProductSpec) -> bool {
    spec.ranges.iter().all(|r| r.contains(quality[r.attribute]))
}

/// Per-tonne price adjustment for a blend of the given quality.
pub(crate) fn adjustment_per_tonne(quality: &[f64], spec: &ProductSpec) -> f64 {
    spec.adjustments
        .iter()
        .map(|a| {
            let v = quality[a.attribute];
            if v > a.target {
                a.rate_above * (v - a.target)
            } else if v < a.target {
                a.rate_below * (a.target - v)
            } else {
                0.0
            }
        })
        .sum()
}

/// `(gross_revenue, adjustment_revenue)` for `tonnes` sold in `period`.
///
/// Off-spec blends are unsaleable and rejected.
pub fn price_blend(quality: &QualityVector, tonnes: f64, spec: &ProductSpec, period: usize) -> Result<(f64, f64), ModelError> {
    if period >= spec.base_price.len() {
        return Err(ModelError::PeriodOutOfRange { period, horizon: spec.base_price.len() });
    }
    if !in_spec(quality.values(), spec) {
        return Err(ModelError::OffSpec(spec.id.clone()));
    }
    let gross = spec.base_price[period] * tonnes;
    let adjustment = tonnes * adjustment_per_tonne(quality.values(), spec);
    Ok((gross, adjustment))
}

//! Mass-weighted blending, washing along an ash-yield curve, and stockpile
//! degradation.

use crate::error::ModelError;
use crate::model::{AttributeRegistry, DegradationModel, QualityVector, RomParcel};
use crate::plan::CutPoint;

/// Mass-weighted mean of each attribute over `parcels`.
pub fn blend_quality(parcels: &[(f64, &QualityVector)]) -> Result<QualityVector, ModelError> {
    let Some((_, first)) = parcels.first() else {
        return Err(ModelError::EmptyBlend);
    };
    let n = first.len();
    if parcels.iter().any(|(_, q)| q.len() != n) {
        return Err(ModelError::RegistryMismatch);
    }
    let total: f64 = parcels.iter().map(|(t, _)| *t).sum();
    if !(total > 0.0) {
        return Err(ModelError::EmptyBlend);
    }
    let mut acc = vec![0.0; n];
    blend_into(parcels.iter().map(|(t, q)| (*t, q.values())), total, &mut acc);
    Ok(QualityVector::from_values(acc))
}

/// Accumulates `Σ tᵢ·qᵢ / total` into `out`, clamped to the input envelope so
/// rounding never pushes a blend outside its components.
pub(crate) fn blend_into<'a>(parcels: impl Iterator<Item = (f64, &'a [f64])> + Clone, total: f64, out: &mut [f64]) {
    let n = out.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    out.iter_mut().for_each(|v| *v = 0.0);
    for (t, q) in parcels {
        if t <= 0.0 {
            continue;
        }
        for a in 0..n {
            out[a] += t * q[a];
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    for a in 0..n {
        out[a] = (out[a] / total).clamp(lo[a], hi[a]);
    }
}

/// Washes `feed_tonnes` of `rom` at `cut`. Only ash and tonnage change.
pub fn wash_parcel(
    registry: &AttributeRegistry,
    rom: &RomParcel,
    quality: &QualityVector,
    feed_tonnes: f64,
    cut: CutPoint,
) -> Result<(f64, QualityVector), ModelError> {
    match cut {
        CutPoint::Bypass => {
            if let Some(curve) = &rom.curve {
                if !curve.bypass_allowed {
                    return Err(ModelError::BypassNotAllowed(rom.id.clone()));
                }
            }
            Ok((feed_tonnes, quality.clone()))
        }
        CutPoint::Density(d) => {
            let curve = rom.curve.as_ref().ok_or_else(|| ModelError::NoWashCurve(rom.id.clone()))?;
            let ash = registry.ash_index().ok_or(ModelError::NoAshAttribute)?;
            let (product_ash, yield_fraction) = curve.interpolate(d)?;
            let mut q = quality.clone();
            q.set(ash, product_ash);
            Ok((feed_tonnes * yield_fraction, q))
        }
    }
}

/// Applies linear, capped drift for `age_days`, then clamps to unit bounds.
pub fn degrade_quality(
    registry: &AttributeRegistry,
    quality: &QualityVector,
    age_days: i64,
    model: &DegradationModel,
) -> QualityVector {
    let mut out = quality.clone();
    degrade_into(registry, quality.values(), age_days.max(0), model, out.values_mut());
    out
}

pub(crate) fn degrade_into(
    registry: &AttributeRegistry,
    quality: &[f64],
    age_days: i64,
    model: &DegradationModel,
    out: &mut [f64],
) {
    for a in 0..quality.len() {
        let rate = model.rate_per_day.get(a).copied().unwrap_or(0.0);
        let value = quality[a];
        if rate == 0.0 || age_days == 0 {
            out[a] = value;
            continue;
        }
        let cap = model.cap.get(a).copied().unwrap_or(0.0);
        let drift = (rate * age_days as f64).clamp(-cap, cap);
        let (lo, hi) = registry.get(a).unit.bounds();
        out[a] = (value + drift).clamp(lo, hi);
    }
}

#![allow(dead_code)]

use blendforge_core::space::enumerate_plans;
use blendforge_core::{
    evaluate_plan, Allotment, AshYieldCurve, AttributeRegistry, BlendPlan, CutAssignment, CutPoint, DegradationModel,
    Knot, LogisticsConstraints, MarketModel, ProductSpec, QualityRange, QualityVector, Rehandle, RomParcel, Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rom(id: &str, ash: f64, available: Vec<f64>) -> RomParcel {
    RomParcel {
        id: id.into(),
        pit: "pit".into(),
        excavation_day: 0,
        available_tonnes: available,
        quality: QualityVector::from_values(vec![ash]),
        curve: None,
        degradation: DegradationModel::none(1),
        haul_hours_per_tonne: 0.0,
        staging_haul_hours_per_tonne: 0.0,
    }
}

pub fn product(id: &str, ash_max: f64, price: Vec<f64>, contract: Vec<f64>, target: Vec<f64>) -> ProductSpec {
    ProductSpec {
        id: id.into(),
        ranges: vec![QualityRange { attribute: 0, min: 0.0, max: ash_max }],
        adjustments: Vec::new(),
        base_price: price,
        contract_min_tonnes: contract,
        tonnage_target: target,
    }
}

/// Ash-only scenario with 1000 t lots and no logistics limits.
pub fn scenario(horizon: usize, roms: Vec<RomParcel>, products: Vec<ProductSpec>) -> Scenario {
    Scenario {
        horizon_periods: horizon,
        days_per_period: 30,
        registry: AttributeRegistry::ash_only(),
        roms,
        products,
        logistics: LogisticsConstraints::default(),
        market: MarketModel::default(),
    }
}

pub fn curve(knots: &[(f64, f64, f64)], bypass: bool) -> AshYieldCurve {
    AshYieldCurve::new(knots.iter().map(|&(d, a, y)| Knot::new(d, a, y)).collect(), bypass).unwrap()
}

/// Knot densities of every curve, the cut grid used by enumeration oracles.
pub fn knot_grid(s: &Scenario) -> Vec<f64> {
    s.roms.iter().filter_map(|r| r.curve.as_ref()).flat_map(|c| c.knots.iter().map(|k| k.density)).collect()
}

/// Best feasible NPV over every enumerable plan, by brute force.
pub fn enumerated_optimum(s: &Scenario, limit: u64) -> Option<(f64, BlendPlan)> {
    let mut best: Option<(f64, BlendPlan)> = None;
    for plan in enumerate_plans(s, &knot_grid(s), limit).expect("space small enough to list") {
        let report = evaluate_plan(s, &plan).unwrap();
        if report.is_feasible() && best.as_ref().is_none_or(|(v, _)| report.npv > *v) {
            best = Some((report.npv, plan));
        }
    }
    best
}

/// Random small scenario: a few ROMs, one or two products, tight enough
/// ash limits that some blends fail spec, and optional wash curves.
pub fn generated(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.random_range(1..=2);
    let n_roms = rng.random_range(3..=4);
    let n_products = rng.random_range(1..=2);
    let roms = (0..n_roms)
        .map(|i| {
            let ash = rng.random_range(6.0..18.0);
            let avail = (0..horizon).map(|_| rng.random_range(2..=8) as f64 * 1000.0).collect();
            let mut r = rom(&format!("R{i}"), ash, avail);
            if rng.random_bool(0.5) {
                let lo = (ash * 0.55).max(3.0);
                let mid = (ash * 0.75).max(lo + 0.5);
                r.curve = Some(curve(&[(1.4, lo, 0.62), (1.6, mid, 0.8), (1.8, ash, 0.95)], rng.random_bool(0.7)));
            }
            r.haul_hours_per_tonne = rng.random_range(0.0..0.02);
            r.staging_haul_hours_per_tonne = r.haul_hours_per_tonne;
            r
        })
        .collect();
    let products = (0..n_products)
        .map(|j| {
            let price: Vec<f64> = (0..horizon).map(|_| rng.random_range(60.0..120.0)).collect();
            let target: Vec<f64> = (0..horizon).map(|_| rng.random_range(3..=6) as f64 * 1000.0).collect();
            let contract = target.iter().map(|t| if rng.random_bool(0.3) { (t / 2000.0).floor() * 1000.0 } else { 0.0 }).collect();
            product(&format!("P{j}"), rng.random_range(9.0..13.0), price, contract, target)
        })
        .collect();
    let mut s = scenario(horizon, roms, products);
    s.logistics.haul_cost_per_hour = 150.0;
    s.logistics.wash_variable_cost_per_tonne = rng.random_range(1.0..4.0);
    s.logistics.wash_fixed_cost_per_period = rng.random_range(0.0..5000.0);
    s.market.discount_rate_per_period = 0.01;
    s
}

/// Arbitrary plan over `s`: up to `max_lots` per cell, cut-points anywhere on
/// each curve, and the odd rehandle. Often infeasible.
pub fn random_plan(s: &Scenario, rng: &mut ChaCha8Rng, max_lots: u32) -> BlendPlan {
    let mut plan = BlendPlan::empty();
    for t in 0..s.horizon_periods {
        for p in &s.products {
            for r in &s.roms {
                if rng.random_bool(0.5) {
                    let lots = rng.random_range(1..=max_lots.max(1));
                    plan.allotments.push(Allotment { period: t, product: p.id.clone(), rom: r.id.clone(), lots });
                }
            }
        }
        for r in &s.roms {
            if let Some(c) = &r.curve {
                let cut = if c.bypass_allowed && rng.random_bool(0.3) {
                    CutPoint::Bypass
                } else {
                    CutPoint::Density(rng.random_range(c.min_density()..=c.max_density()))
                };
                plan.cut_points.push(CutAssignment { period: t, rom: r.id.clone(), cut });
            }
            if rng.random_bool(0.1) {
                plan.rehandles.push(Rehandle { period: t, rom: r.id.clone(), tonnes: rng.random_range(0.0..3000.0) });
            }
        }
    }
    plan
}

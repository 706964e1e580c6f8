mod common;

use blendforge_core::{
    blend_quality, evaluate_plan, npv, price_blend, wash_parcel, Adjustment, AshYieldCurve, AttributeRegistry, Knot,
    PlanGrid, QualityVector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ATTRS: usize = 3;

fn parcel() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (1.0f64..50_000.0, prop::collection::vec(0.0f64..100.0, ATTRS))
}

fn parcels() -> impl Strategy<Value = Vec<(f64, Vec<f64>)>> {
    prop::collection::vec(parcel(), 1..8)
}

fn blend(ps: &[(f64, Vec<f64>)]) -> QualityVector {
    let qs: Vec<QualityVector> = ps.iter().map(|(_, q)| QualityVector::from_values(q.clone())).collect();
    let refs: Vec<(f64, &QualityVector)> = ps.iter().zip(&qs).map(|((t, _), q)| (*t, q)).collect();
    blend_quality(&refs).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// A curve satisfying the type invariants: rising densities, and ash and
/// yield that never fall.
fn curve() -> impl Strategy<Value = AshYieldCurve> {
    prop::collection::vec((0.01f64..0.2, 0.0f64..3.0, 0.0f64..0.2), 2..6).prop_flat_map(|steps| {
        (1.2f64..1.5, 2.0f64..8.0, 0.3f64..0.6, any::<bool>()).prop_map(move |(d0, a0, y0, bypass)| {
            let (mut d, mut a, mut y) = (d0, a0, y0);
            let knots = steps
                .iter()
                .map(|(dd, da, dy)| {
                    let k = Knot::new(d, a, y.min(1.0));
                    d += dd;
                    a += da;
                    y += dy;
                    k
                })
                .collect();
            AshYieldCurve::new(knots, bypass).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn blend_stays_within_inputs(ps in parcels()) {
        let q = blend(&ps);
        for a in 0..ATTRS {
            let lo = ps.iter().map(|(_, v)| v[a]).fold(f64::INFINITY, f64::min);
            let hi = ps.iter().map(|(_, v)| v[a]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= q.get(a) && q.get(a) <= hi, "{} not in [{}, {}]", q.get(a), lo, hi);
        }
    }

    #[test]
    fn blend_ignores_order_and_lot_splits(ps in parcels(), rot in 0usize..8, pick in 0usize..8, frac in 0.01f64..0.99) {
        let base = blend(&ps);
        let mut turned = ps.clone();
        turned.rotate_left(rot % ps.len());
        turned.reverse();
        let mut split = ps.clone();
        let i = pick % ps.len();
        let (t, q) = split[i].clone();
        split[i].0 = t * frac;
        split.push((t * (1.0 - frac), q));
        let (a, b) = (blend(&turned), blend(&split));
        for k in 0..ATTRS {
            prop_assert!(close(base.get(k), a.get(k)), "permuted {} vs {}", base.get(k), a.get(k));
            prop_assert!(close(base.get(k), b.get(k)), "split {} vs {}", base.get(k), b.get(k));
        }
    }

    #[test]
    fn washing_is_monotone_in_cut_point(c in curve()) {
        let registry = AttributeRegistry::ash_only();
        let mut rom = common::rom("R", 20.0, vec![1000.0]);
        rom.curve = Some(c.clone());
        let (lo, hi) = (c.min_density(), c.max_density());
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for i in 0..=200 {
            let d = if i == 200 { hi } else { lo + (hi - lo) * i as f64 / 200.0 };
            let (tonnes, q) = wash_parcel(&registry, &rom, &rom.quality, 1000.0, blendforge_core::CutPoint::Density(d)).unwrap();
            let now = (q.get(0), tonnes / 1000.0);
            prop_assert!(now.0 >= prev.0 - 1e-12 && now.1 >= prev.1 - 1e-12, "at {d}: {now:?} after {prev:?}");
            prop_assert!(now.1 > 0.0 && now.1 <= 1.0);
            prev = now;
        }
    }

    #[test]
    fn adjustment_vanishes_exactly_on_target(
        targets in prop::collection::vec(1.0f64..20.0, 2),
        offsets in prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 2),
        rates in prop::collection::vec((0.5f64..5.0, -5.0f64..-0.5), 2),
    ) {
        let mut spec = common::product("P", 100.0, vec![100.0], vec![0.0], vec![1000.0]);
        spec.ranges.clear();
        spec.adjustments = (0..2)
            .map(|a| Adjustment { attribute: a, target: targets[a], rate_below: rates[a].0, rate_above: rates[a].1 })
            .collect();
        let q = QualityVector::from_values((0..2).map(|a| targets[a] + offsets[a]).collect());
        let (_, adj) = price_blend(&q, 1000.0, &spec, 0).unwrap();
        let on_target = offsets.iter().all(|o| *o == 0.0);
        prop_assert_eq!(adj == 0.0, on_target, "adjustment {} for offsets {:?}", adj, offsets);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn npv_recomputes_from_report_rows(seed in 0u64..200, plan_seed in any::<u64>()) {
        let s = common::generated(seed);
        let plan = common::random_plan(&s, &mut ChaCha8Rng::seed_from_u64(plan_seed), 4);
        let report = evaluate_plan(&s, &plan).unwrap();
        let flows: Vec<f64> = report.periods.iter().map(|p| p.net_cashflow).collect();
        prop_assert_eq!(report.npv.to_bits(), npv(&flows, s.market.discount_rate_per_period).to_bits());
        let rows: f64 = report.periods.iter().map(|p| p.revenue).sum();
        prop_assert!(close(rows, report.total_revenue));
        for p in &report.periods {
            prop_assert!(close(p.net_cashflow, p.revenue - p.haul_cost - p.wash_cost - p.rehandle_cost));
        }
    }

    #[test]
    fn product_tonnes_equal_washed_feed(seed in 0u64..200, plan_seed in any::<u64>()) {
        let s = common::generated(seed);
        let plan = common::random_plan(&s, &mut ChaCha8Rng::seed_from_u64(plan_seed), 4);
        let report = evaluate_plan(&s, &plan).unwrap();
        let grid = PlanGrid::bind(&s, &plan).unwrap();
        let lot = s.logistics.lot_size_tonnes;
        for t in 0..s.horizon_periods {
            for (p, spec) in s.products.iter().enumerate() {
                let mut want = 0.0;
                for (r, rom) in s.roms.iter().enumerate() {
                    let feed = grid.lots(t, p, r) as f64 * lot;
                    if feed > 0.0 {
                        let (out, _) = wash_parcel(&s.registry, rom, &rom.quality, feed, grid.cut(t, r)).unwrap();
                        prop_assert!(out <= feed);
                        want += out;
                    }
                }
                let row = report.blend(t, &spec.id).unwrap();
                prop_assert!(close(row.tonnes, want), "{} vs {}", row.tonnes, want);
                prop_assert_eq!(row.feed_tonnes, grid.blend_lots(t, p) as f64 * lot);
            }
        }
    }
}

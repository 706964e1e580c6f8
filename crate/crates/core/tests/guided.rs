mod common;

use std::sync::Arc;

use blendforge_core::guided::{
    compile_directives, guided_reoptimize, open_session, plan_delta, replay_history, Directive, GuidedOutcome,
    NEAR_BEST_FRACTION,
};
use blendforge_core::io::load_scenario;
use blendforge_core::optimizer::{optimize, RunControl, Strategy, StrategyKind};
use blendforge_core::space::enumerate_plans;
use blendforge_core::{evaluate_plan, BlendPlan, Scenario};

fn docs(name: &str) -> Scenario {
    let path = format!("{}/../../docs/scenarios/{name}.scenario", env!("CARGO_MANIFEST_DIR"));
    load_scenario(&std::fs::read(path).unwrap()).unwrap()
}

fn strategy() -> Strategy {
    let mut s = Strategy::seeded(StrategyKind::Anneal, 42).with_budget(20_000).with_restarts(4);
    s.cut_subdivisions = 1;
    s
}

fn ash_delta(product: &str, delta: f64) -> Directive {
    Directive::QualityDelta { product: product.into(), attribute: "ash".into(), delta, from_period: 0, to_period: None }
}

fn blend_ash(s: &Scenario, plan: &BlendPlan, product: &str) -> f64 {
    evaluate_plan(s, plan).unwrap().blend(0, product).unwrap().quality.as_ref().unwrap()["ash"]
}

#[test]
fn quality_delta_compiles_to_an_absolute_bound() {
    // an incumbent blending to exactly 9.5% ash
    let s = common::scenario(
        1,
        vec![common::rom("A", 9.0, vec![10_000.0]), common::rom("B", 10.0, vec![10_000.0])],
        vec![common::product("P", 12.0, vec![80.0], vec![0.0], vec![10_000.0])],
    );
    let plan = BlendPlan {
        allotments: vec![
            blendforge_core::Allotment { period: 0, product: "P".into(), rom: "A".into(), lots: 1 },
            blendforge_core::Allotment { period: 0, product: "P".into(), rom: "B".into(), lots: 1 },
        ],
        ..BlendPlan::empty()
    };
    let set = compile_directives(&[ash_delta("P", -2.0)], &s, &plan).unwrap();
    assert_eq!(set.quality_bounds.len(), 1);
    assert_eq!(set.quality_bounds[0].max, Some(7.5));
    assert_eq!(set.quality_bounds[0].min, None);

    let more = compile_directives(
        &[Directive::TonnageDelta { product: "P".into(), period: 0, delta_tonnes: 10_000.0 }],
        &s,
        &plan,
    )
    .unwrap();
    assert_eq!(more.tonnage_bounds[0].min_tonnes, Some(12_000.0));
    assert!(compile_directives(&[], &s, &plan).unwrap().is_empty());
}

#[test]
fn lower_ash_directive_is_met_on_the_toy() {
    let s = Arc::new(docs("directive-toy"));
    let mut session = open_session("toy", s.clone(), strategy()).unwrap();
    let before = blend_ash(&s, session.incumbent(), "P");
    let bound = before - 2.0;
    // an enumerated plan meets the bound, so the request is satisfiable
    let exists = enumerate_plans(&s, &[], 1_000_000)
        .unwrap()
        .filter(|p| evaluate_plan(&s, p).unwrap().is_feasible())
        .any(|p| evaluate_plan(&s, &p).unwrap().blend(0, "P").unwrap().quality.as_ref().is_some_and(|q| q["ash"] <= bound));
    assert!(exists);

    let outcome = guided_reoptimize(&mut session, &[ash_delta("P", -2.0)]).unwrap();
    let GuidedOutcome::Applied(result) = outcome else { panic!("{outcome:?}") };
    assert!(result.feasible);
    let after = blend_ash(&s, &result.plan, "P");
    assert!(after <= before - 2.0 + 1e-9, "{after} vs {before}");
    assert_eq!(session.incumbent(), &result.plan);
    assert_eq!(session.history().len(), 2);
    // bounds re-checked independently of the search
    assert!(session.constraints().check(&s, &result.plan).unwrap().is_empty());
}

#[test]
fn impossible_ash_leaves_the_incumbent_alone() {
    let s = Arc::new(docs("directive-toy"));
    let mut session = open_session("toy", s.clone(), strategy()).unwrap();
    let incumbent = session.incumbent().clone();
    let before = blend_ash(&s, &incumbent, "P");
    // every ROM is at least 6% ash
    let outcome = guided_reoptimize(&mut session, &[ash_delta("P", 5.9 - before)]).unwrap();
    let GuidedOutcome::Infeasible(inf) = outcome else { panic!("expected infeasible") };
    assert!(inf.binding.contains("quality-delta"), "{}", inf.binding);
    assert_eq!(session.incumbent(), &incumbent);
    assert_eq!(session.history().len(), 1);
    assert!(session.directives().is_empty());
}

#[test]
fn contradictory_directives_name_both() {
    let s = Arc::new(docs("directive-toy"));
    let mut session = open_session("toy", s, strategy()).unwrap();
    let pin = Directive::PinAllotment { period: 0, product: "P".into(), rom: "L".into(), lots: 3 };
    let exclude = Directive::ExcludeRom { rom: "L".into(), product: "P".into(), from_period: 0, to_period: None };
    let err = guided_reoptimize(&mut session, &[pin, exclude]).unwrap_err();
    let (a, b) = err.conflict().expect("a conflict pair");
    assert!(a.contains("pin-allotment") && b.contains("exclude-rom"), "{a} / {b}");
    assert_eq!(session.history().len(), 1);
}

#[test]
fn pins_survive_verbatim() {
    let s = Arc::new(common::generated(3));
    let mut session = open_session("g", s.clone(), strategy()).unwrap();
    let rom = s.roms[0].id.clone();
    let product = s.products[0].id.clone();
    let current = session.incumbent().lots_of(0, &product, &rom);
    let lots = if current == 0 { 1 } else { current - 1 };
    let pin = Directive::PinAllotment { period: 0, product: product.clone(), rom: rom.clone(), lots };
    let outcome = guided_reoptimize(&mut session, &[pin]).unwrap();
    let GuidedOutcome::Applied(r) = outcome else { panic!("{outcome:?}") };
    assert_eq!(r.plan.lots_of(0, &product, &rom), lots);
    // later runs keep honouring it
    let again = guided_reoptimize(&mut session, &[]).unwrap();
    assert_eq!(again.result().expect("applied").plan.lots_of(0, &product, &rom), lots);
}

#[test]
fn empty_directives_do_not_lose_value() {
    for seed in [2, 5, 9] {
        let s = Arc::new(common::generated(seed));
        let mut session = open_session("g", s, strategy()).unwrap();
        let before = session.incumbent_result().objective;
        let outcome = guided_reoptimize(&mut session, &[]).unwrap();
        let r = outcome.result().expect("no directives cannot be infeasible");
        assert!(r.objective >= before - NEAR_BEST_FRACTION * before.abs(), "seed {seed}");
    }
}

#[test]
fn history_grows_in_order_and_replays() {
    let s = Arc::new(docs("directive-toy"));
    let mut session = open_session("toy", s.clone(), strategy()).unwrap();
    assert_eq!(session.history().len(), 1);
    let steps = [
        vec![ash_delta("P", -0.5)],
        vec![Directive::ReserveRom { rom: "H".into(), tonnes: 2000.0, until_period: 0 }],
        vec![ash_delta("P", -0.5)],
    ];
    for step in &steps {
        assert!(guided_reoptimize(&mut session, step).unwrap().result().is_some());
    }
    assert_eq!(session.history().len(), 4);
    for (entry, step) in session.history()[1..].iter().zip(&steps) {
        assert_eq!(&entry.directives, step);
    }
    let replayed = replay_history("again", s, strategy(), session.history()).unwrap();
    assert_eq!(replayed.incumbent(), session.incumbent());
    assert_eq!(replayed.history(), session.history());
}

#[test]
fn sessions_open_to_the_plain_optimum() {
    let s = Arc::new(common::generated(11));
    let a = open_session("a", s.clone(), strategy()).unwrap();
    let b = open_session("b", s.clone(), strategy()).unwrap();
    assert_eq!(a.incumbent(), b.incumbent());
    assert_eq!(a.incumbent(), &optimize(&s, &strategy(), None).unwrap().plan);

    let empty = Arc::new(common::scenario(1, vec![common::rom("R", 9.0, vec![0.0])], vec![]));
    assert_eq!(open_session("e", empty, strategy()).unwrap().incumbent(), &BlendPlan::empty());
}

#[test]
fn previews_do_not_touch_the_session() {
    let s = Arc::new(docs("directive-toy"));
    let session = open_session("toy", s, strategy()).unwrap();
    let snapshot = format!("{session:?}");
    for d in [-1.0, -2.0, -9.0] {
        session.preview(&[ash_delta("P", d)], &RunControl::new()).unwrap();
    }
    assert_eq!(format!("{session:?}"), snapshot);
}

/// Over every feasible plan meeting the directives, the chosen one must be
/// near-best and no near-best plan may be closer to the incumbent.
#[test]
fn guided_choice_is_the_closest_near_best_plan() {
    let cases: Vec<(Scenario, Vec<Directive>)> = vec![
        (docs("directive-toy"), vec![ash_delta("P", -1.0)]),
        (docs("sweetener"), vec![Directive::ReserveRom { rom: "A".into(), tonnes: 2000.0, until_period: 0 }]),
        (common::generated(2), vec![]),
        (common::generated(5), vec![]),
    ];
    for (scenario, directives) in cases {
        let s = Arc::new(scenario);
        let mut session = open_session("h", s.clone(), strategy()).unwrap();
        let incumbent = session.incumbent().clone();
        let constraints = session.compile(&directives).unwrap();
        let outcome = guided_reoptimize(&mut session, &directives).unwrap();
        let GuidedOutcome::Applied(result) = outcome else { panic!("{outcome:?}") };

        let cells = |p: &BlendPlan| -> Vec<u32> {
            let mut v = Vec::new();
            for t in 0..s.horizon_periods {
                for prod in &s.products {
                    for rom in &s.roms {
                        v.push(p.lots_of(t, &prod.id, &rom.id));
                    }
                }
            }
            v
        };
        let distance = |p: &BlendPlan| cells(p).iter().zip(cells(&incumbent)).filter(|(a, b)| **a != *b).count();
        let feasible: Vec<(f64, usize)> = enumerate_plans(&s, &common::knot_grid(&s), 1_000_000)
            .unwrap()
            .filter_map(|p| {
                let report = evaluate_plan(&s, &p).unwrap();
                let ok = report.is_feasible() && constraints.check(&s, &p).unwrap().is_empty();
                ok.then(|| (report.npv, distance(&p)))
            })
            .collect();
        let best = feasible.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
        let floor = best - NEAR_BEST_FRACTION * best.abs();
        let closest = feasible.iter().filter(|f| f.0 >= floor).map(|f| f.1).min().unwrap();
        assert!(result.objective >= floor, "{} below {floor}", result.objective);
        assert_eq!(distance(&result.plan), closest);
    }
}

#[test]
fn plan_delta_reports_changed_cells() {
    let s = Arc::new(docs("directive-toy"));
    let mut session = open_session("toy", s.clone(), strategy()).unwrap();
    let before = session.incumbent_result().clone();
    let GuidedOutcome::Applied(after) = guided_reoptimize(&mut session, &[ash_delta("P", -2.0)]).unwrap() else {
        panic!()
    };
    let delta = plan_delta(
        &s,
        (&before.plan, &before.report, before.objective),
        (&after.plan, &after.report, after.objective),
    )
    .unwrap();
    assert_eq!(delta.objective_delta, after.objective - before.objective);
    assert!(!delta.changed_cells.is_empty());
    for c in &delta.changed_cells {
        assert_eq!(before.plan.lots_of(c.period, &c.product, &c.rom), c.from_lots);
        assert_eq!(after.plan.lots_of(c.period, &c.product, &c.rom), c.to_lots);
    }
    let ash = delta.blends[0].quality_delta["ash"];
    assert!(ash <= -2.0 + 1e-9);
}

#[test]
fn directives_round_trip_through_json() {
    let ds = vec![
        ash_delta("P", -2.0),
        Directive::TonnageDelta { product: "P".into(), period: 0, delta_tonnes: 10_000.0 },
        Directive::ExcludeRom { rom: "L".into(), product: "P".into(), from_period: 0, to_period: Some(0) },
        Directive::ReserveRom { rom: "H".into(), tonnes: 500.0, until_period: 0 },
        Directive::PinAllotment { period: 0, product: "P".into(), rom: "H".into(), lots: 2 },
    ];
    let text = serde_json::to_string(&ds).unwrap();
    let back: Vec<Directive> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, ds);
    assert!(serde_json::from_str::<Directive>(r#"{"kind":"exclude-rom","rom":"L","product":"P","bogus":1}"#).is_err());
}

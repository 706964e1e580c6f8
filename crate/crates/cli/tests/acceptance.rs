//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Reference values come from brute-force oracles in `support`.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use blendforge_core::guided::{guided_reoptimize, open_session, Directive, GuidedOutcome};
use blendforge_core::io::{from_document, load_scenario, save_scenario, to_document};
use blendforge_core::optimizer::{compare_strategies, optimize, repair, Strategy, StrategyKind};
use blendforge_core::space::{count_blend_space, SpaceSummary};
use blendforge_core::{
    blend_quality, evaluate_plan, npv, wash_parcel, AshYieldCurve, AttributeRegistry, BlendPlan, CutPoint, Knot,
    QualityVector, Scenario,
};
use blendforge_server::{router, AppState, RunHandle};
use http_body_util::BodyExt;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use support::{docs, enumerable, feasible_plans, generated, lex_best, random_plan};
use tower::ServiceExt;

// Tolerances and sizes.
const COUNT_SECONDS: f64 = 1.0;
const ORACLE_SCENARIOS: usize = 8;
const ORACLE_SEEDS: u64 = 20;
const ORACLE_FRACTION: f64 = 0.99;
const ORACLE_PASS_RATE: f64 = 0.95;
const ORACLE_SECONDS: f64 = 120.0;
const ENUMERATION_LIMIT: u64 = 200_000;
const UTILIZATION_GAP: f64 = 0.01;
const DIRECTIVE_TOLERANCE: f64 = 1e-9;
const PROPERTY_CASES: u64 = 1000;
const REL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL * a.abs().max(b.abs()).max(1.0)
}

/// Lattice-path count of `k`-tuples of non-negative integers summing to `n`.
fn lattice(n: usize, k: usize) -> BigUint {
    let mut ways = vec![BigUint::from(0u32); n + 1];
    ways[0] = BigUint::from(1u32);
    for _ in 0..k {
        for m in 1..=n {
            let prev = ways[m - 1].clone();
            ways[m] += prev;
        }
    }
    ways[n].clone()
}

fn combinatorics() -> Verdict {
    let s = docs("five-rom-two-product");
    let started = Instant::now();
    let n = count_blend_space(&SpaceSummary::of_scenario(&s));
    let secs = started.elapsed().as_secs_f64();
    let single = lattice(100, 5);
    let in_range = n >= BigUint::from(10u64.pow(13)) && n < BigUint::from(10u64.pow(14));
    verdict(
        single == BigUint::from(4_598_126u32) && n == &single * &single && in_range && secs < COUNT_SECONDS,
        format!("count {n}, oracle {single}^2, {secs:.4}s"),
    )
}

fn oracle_strategy(seed: u64) -> Strategy {
    let mut s = Strategy::seeded(StrategyKind::Anneal, seed).with_budget(50_000).with_restarts(10);
    s.cut_subdivisions = 1;
    s
}

fn oracle_optimality() -> Verdict {
    let started = Instant::now();
    let mut picked = Vec::new();
    let mut seed = 0;
    while picked.len() < ORACLE_SCENARIOS && seed < 500 {
        let s = generated(seed);
        if enumerable(&s, ENUMERATION_LIMIT) {
            picked.push((seed, s));
        }
        seed += 1;
    }
    let optima: Vec<(u64, Scenario, f64)> = picked
        .into_par_iter()
        .filter_map(|(seed, s)| {
            let best = feasible_plans(&s, ENUMERATION_LIMIT).into_iter().map(|(_, r)| r.npv).reduce(f64::max)?;
            Some((seed, s, best))
        })
        .collect();
    let runs: Vec<(u64, u64, bool, f64)> = optima
        .par_iter()
        .flat_map(|(scenario_seed, s, best)| {
            (0..ORACLE_SEEDS).into_par_iter().map(move |run_seed| {
                let started = Instant::now();
                let r = optimize(s, &oracle_strategy(run_seed), None).unwrap();
                let ok = r.feasible && r.objective >= best - (1.0 - ORACLE_FRACTION) * best.abs();
                (*scenario_seed, run_seed, ok, started.elapsed().as_secs_f64())
            })
        })
        .collect();
    let slowest = runs.iter().map(|r| r.3).fold(0.0, f64::max);
    let mut worst = 1.0f64;
    for (seed, ..) in &optima {
        let mine: Vec<_> = runs.iter().filter(|r| r.0 == *seed).collect();
        worst = worst.min(mine.iter().filter(|r| r.2).count() as f64 / mine.len() as f64);
    }
    let total = started.elapsed().as_secs_f64();
    verdict(
        optima.len() >= 5 && worst >= ORACLE_PASS_RATE && total < ORACLE_SECONDS,
        format!(
            "{} scenarios x {ORACLE_SEEDS} seeds, worst scenario {:.0}% within {:.0}%, slowest run {slowest:.1}s, {total:.1}s total",
            optima.len(),
            worst * 100.0,
            ORACLE_FRACTION * 100.0
        ),
    )
}

fn heuristic_kinds() -> [StrategyKind; 3] {
    [StrategyKind::GreedyProfitFirst, StrategyKind::AvgValue, StrategyKind::MaxTonnes]
}

/// Heuristic names ordered by the NPV of each one's own best plan.
fn oracle_ranking(s: &Scenario) -> Vec<(String, f64)> {
    let plans = feasible_plans(s, 5_000_000);
    let mut order: Vec<&str> = s.products.iter().map(|p| p.id.as_str()).collect();
    order.sort_by(|a, b| {
        let price = |id: &str| s.products.iter().find(|p| p.id == id).unwrap().mean_price();
        price(b).total_cmp(&price(a)).then_with(|| a.cmp(b))
    });
    let sold = |r: &blendforge_core::EvaluationReport, id: &str| -> f64 {
        r.blends.iter().filter(|b| b.product == id && b.in_spec).map(|b| b.tonnes).sum()
    };
    let mut rows: Vec<(String, f64)> = heuristic_kinds()
        .iter()
        .map(|k| {
            let best = match k {
                StrategyKind::GreedyProfitFirst => lex_best(&plans, |r| {
                    let mut keys: Vec<f64> = order.iter().map(|id| sold(r, id)).collect();
                    keys.push(r.npv);
                    keys
                }),
                StrategyKind::AvgValue => lex_best(&plans, |r| vec![r.kpis.avg_revenue_per_tonne, r.npv]),
                _ => lex_best(&plans, |r| vec![r.kpis.total_sold_tonnes, r.npv]),
            };
            (k.to_string(), best.map_or(f64::NEG_INFINITY, |(_, r)| r.npv))
        })
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

fn no_free_lunch() -> Verdict {
    let mut detail = Vec::new();
    let mut pass = true;
    let mut tops = Vec::new();
    for name in ["heuristics-a", "heuristics-b"] {
        let s = docs(name);
        let oracle = oracle_ranking(&s);
        let strategies: Vec<Strategy> =
            heuristic_kinds().iter().map(|k| Strategy::new(*k).with_budget(50_000).with_restarts(10)).collect();
        let ranked = compare_strategies(&s, &strategies).unwrap();
        pass &= ranked[0].strategy == oracle[0].0 && oracle[0].1 > oracle[1].1;
        detail.push(format!("{name}: oracle top {} ({:.0}), optimizer top {}", oracle[0].0, oracle[0].1, ranked[0].strategy));
        tops.push(oracle[0].0.clone());
    }
    pass &= tops[0] == "greedy-profit-first" && tops[1] != tops[0];
    verdict(pass, detail.join("; "))
}

/// Lots of ROM A sent to (export, premium).
fn a_split(plan: &BlendPlan) -> (u32, u32) {
    (plan.lots_of(0, "export", "A"), plan.lots_of(0, "premium", "A"))
}

fn sweetener_flip() -> Verdict {
    let base = docs("sweetener");
    let mut cheap = base.clone();
    let export = cheap.product_index("export").unwrap();
    cheap.products[export].base_price = vec![30.0];
    let mut strategy = Strategy::seeded(StrategyKind::Anneal, 1).with_budget(200_000);
    strategy.cut_subdivisions = 1;
    let mut pass = true;
    let mut detail = Vec::new();
    let mut oracle_splits = Vec::new();
    for (label, s) in [("export at 70", &base), ("export at 30", &cheap)] {
        let plans = feasible_plans(s, 1_000_000);
        let (plan, report) = lex_best(&plans, |r| vec![r.npv]).unwrap();
        // the optimal allocation must be unique for the flip to mean anything
        let unique = plans.iter().filter(|(_, r)| close(r.npv, report.npv)).all(|(p, _)| a_split(p) == a_split(plan));
        let found = optimize(s, &strategy, None).unwrap();
        let (want, got) = (a_split(plan), a_split(&found.plan));
        pass &= unique && want == got && close(found.objective, report.npv);
        detail.push(format!("{label}: A export/premium oracle {}/{} optimizer {}/{}", want.0, want.1, got.0, got.1));
        oracle_splits.push(want);
    }
    // most of A goes to export at the wide spread and none of it at the narrow one
    pass &= oracle_splits[0].0 > oracle_splits[0].1 && oracle_splits[1].0 == 0 && oracle_splits[1].1 > 0;
    verdict(pass, detail.join("; "))
}

fn utilization() -> Verdict {
    let s = docs("utilization");
    let top = s.roms[0].curve.as_ref().unwrap().max_density();
    let plans = feasible_plans(&s, 1_000_000);
    let at_top = |p: &BlendPlan| p.cut_points.iter().all(|c| c.cut == CutPoint::Density(top));
    let throughput = plans.iter().filter(|(p, _)| at_top(p)).map(|(_, r)| r.npv).fold(f64::NEG_INFINITY, f64::max);
    let oracle = plans.iter().map(|(_, r)| r.npv).fold(f64::NEG_INFINITY, f64::max);
    let found = optimize(&s, &Strategy::seeded(StrategyKind::Anneal, 1), None).unwrap();
    let gap = (found.objective - throughput) / found.objective.abs();
    verdict(
        found.feasible && gap >= UTILIZATION_GAP && found.objective >= oracle - REL * oracle.abs(),
        format!("max-throughput NPV {throughput:.0}, optimized {:.0}, gap {:.1}%", found.objective, gap * 100.0),
    )
}

fn ash_of(s: &Scenario, plan: &BlendPlan) -> f64 {
    evaluate_plan(s, plan).unwrap().blend(0, "P").unwrap().quality.as_ref().unwrap()["ash"]
}

fn ash_delta(delta: f64) -> Directive {
    Directive::QualityDelta { product: "P".into(), attribute: "ash".into(), delta, from_period: 0, to_period: None }
}

fn directives() -> Verdict {
    let s = Arc::new(docs("directive-toy"));
    let mut strategy = Strategy::seeded(StrategyKind::Anneal, 42).with_budget(20_000).with_restarts(4);
    strategy.cut_subdivisions = 1;
    let mut session = open_session("toy", s.clone(), strategy.clone()).unwrap();
    let before = ash_of(&s, session.incumbent());
    let lowered = match guided_reoptimize(&mut session, &[ash_delta(-2.0)]).unwrap() {
        GuidedOutcome::Applied(r) => r.feasible && ash_of(&s, &r.plan) <= before - 2.0 + DIRECTIVE_TOLERANCE,
        GuidedOutcome::Infeasible(_) => false,
    };

    let mut fresh = open_session("toy", s.clone(), strategy).unwrap();
    let incumbent = fresh.incumbent().clone();
    let lowest = s.roms.iter().map(|r| r.quality.get(0)).fold(f64::INFINITY, f64::min);
    let refused = matches!(
        guided_reoptimize(&mut fresh, &[ash_delta(lowest - 0.1 - before)]).unwrap(),
        GuidedOutcome::Infeasible(_)
    ) && fresh.incumbent() == &incumbent
        && fresh.history().len() == 1;
    verdict(lowered && refused, format!("ash {before:.3} lowered by 2: {lowered}; below {lowest}% refused: {refused}"))
}

fn random_parcels(rng: &mut ChaCha8Rng) -> Vec<(f64, QualityVector)> {
    (0..rng.random_range(1..8))
        .map(|_| (rng.random_range(1.0..50_000.0), QualityVector::from_values((0..3).map(|_| rng.random_range(0.0..100.0)).collect())))
        .collect()
}

fn blend(ps: &[(f64, QualityVector)]) -> QualityVector {
    let refs: Vec<(f64, &QualityVector)> = ps.iter().map(|(t, q)| (*t, q)).collect();
    blend_quality(&refs).unwrap()
}

fn random_curve(rng: &mut ChaCha8Rng) -> AshYieldCurve {
    let (mut d, mut a, mut y) = (rng.random_range(1.2..1.5), rng.random_range(2.0..8.0), rng.random_range(0.3..0.6));
    let knots = (0..rng.random_range(2..6))
        .map(|_| {
            let k = Knot::new(d, a, f64::min(y, 1.0));
            d += rng.random_range(0.01..0.2);
            a += rng.random_range(0.0..3.0);
            y += rng.random_range(0.0..0.2);
            k
        })
        .collect();
    AshYieldCurve::new(knots, rng.random_bool(0.5)).unwrap()
}

/// Failure descriptions from every property sweep.
fn property_failures() -> Vec<String> {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..PROPERTY_CASES {
        let ps = random_parcels(&mut rng);
        let q = blend(&ps);
        let mut turned = ps.clone();
        turned.reverse();
        let mut split = ps.clone();
        let i = rng.random_range(0..ps.len());
        let frac = rng.random_range(0.01..0.99);
        let (t, part) = split[i].clone();
        split[i].0 = t * frac;
        split.push((t * (1.0 - frac), part));
        let (a, b) = (blend(&turned), blend(&split));
        for k in 0..3 {
            let lo = ps.iter().map(|(_, v)| v.get(k)).fold(f64::INFINITY, f64::min);
            let hi = ps.iter().map(|(_, v)| v.get(k)).fold(f64::NEG_INFINITY, f64::max);
            if !(lo <= q.get(k) && q.get(k) <= hi) || !close(q.get(k), a.get(k)) || !close(q.get(k), b.get(k)) {
                failures.push(format!("blend case {case}"));
            }
        }

        let c = random_curve(&mut rng);
        let registry = AttributeRegistry::ash_only();
        let mut rom = generated(0).roms[0].clone();
        rom.quality = QualityVector::from_values(vec![20.0]);
        rom.curve = Some(c.clone());
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for j in 0..=200 {
            let d = if j == 200 { c.max_density() } else { c.min_density() + (c.max_density() - c.min_density()) * j as f64 / 200.0 };
            let (tonnes, wq) = wash_parcel(&registry, &rom, &rom.quality, 1000.0, CutPoint::Density(d)).unwrap();
            let now = (wq.get(0), tonnes / 1000.0);
            if now.0 < prev.0 - 1e-12 || now.1 < prev.1 - 1e-12 {
                failures.push(format!("wash case {case} at {d}"));
                break;
            }
            prev = now;
        }

        let s = generated(case % 200);
        let plan = random_plan(&s, &mut rng, 3);
        let report = evaluate_plan(&s, &plan).unwrap();
        if !close(report.npv, npv(&report.net_cashflows(), s.market.discount_rate_per_period)) {
            failures.push(format!("npv case {case}"));
        }
        let once = repair(&s, &plan).unwrap().plan;
        if repair(&s, &once).unwrap().plan != once {
            failures.push(format!("repair case {case}"));
        }
    }
    failures
}

async fn call(app: &axum::Router, method: Method, uri: &str, body: String) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn server_result(scenario_text: String, strategy: &Strategy) -> String {
    let app = router(AppState::new(2, None));
    let (status, _) = call(&app, Method::PUT, "/scenarios/s", scenario_text).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body) = call(&app, Method::POST, "/scenarios/s/optimize", to_document(strategy)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let handle: RunHandle = from_document(body.as_bytes()).unwrap();
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let (_, body) = call(&app, Method::GET, &format!("/runs/{}", handle.run_id), String::new()).await;
        let now: RunHandle = from_document(body.as_bytes()).unwrap();
        if now.state.is_finished() {
            break;
        }
        assert!(Instant::now() < deadline, "run never finished");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    call(&app, Method::GET, &format!("/runs/{}/result", handle.run_id), String::new()).await.1
}

/// Library, CLI and server produce the same result document for one seed.
fn determinism_failures() -> Vec<String> {
    let path = format!("{}/../../docs/scenarios/heuristics-b.scenario", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap();
    let s = load_scenario(text.as_bytes()).unwrap();
    let strategy = Strategy::seeded(StrategyKind::Anneal, 11).with_budget(5000).with_restarts(2);
    let library = to_document(&optimize(&s, &strategy, None).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.plan");
    let status = Command::new(env!("CARGO_BIN_EXE_blendforge"))
        .args(["optimize", "--scenario", &path, "--seed", "11", "--budget", "5000", "--restarts", "2", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    let cli = std::fs::read_to_string(out.with_extension("result")).unwrap_or_default();

    let runtime = tokio::runtime::Runtime::new().unwrap();
    let served = runtime.block_on(server_result(save_scenario(&s), &strategy));

    let mut failures = Vec::new();
    if !status.success() || cli != library {
        failures.push("CLI result differs from library".to_string());
    }
    if served != library {
        failures.push("server result differs from library".to_string());
    }
    failures
}

fn properties() -> Verdict {
    let mut failures = property_failures();
    failures.extend(determinism_failures());
    let shown: Vec<&String> = failures.iter().take(3).collect();
    verdict(
        failures.is_empty(),
        format!("{PROPERTY_CASES} cases each of blend, wash, NPV and repair, plus library/CLI/server bytes; failures {shown:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("combinatorics", combinatorics),
        ("oracle optimality", oracle_optimality),
        ("heuristic ranking inversion", no_free_lunch),
        ("sweetener allocation flip", sweetener_flip),
        ("cut-point versus throughput", utilization),
        ("directive satisfaction", directives),
        ("property suites", properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failed += 1;
        }
        println!("{} {name} ({:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, started.elapsed().as_secs_f64(), v.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

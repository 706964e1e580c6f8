use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blendforge_core::analytics::{analyze, AnalyticsOptions};
use blendforge_core::io::{load_scenario, save_plan, to_document};
use blendforge_core::optimizer::{optimize, Strategy, StrategyKind};

fn docs(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios").join(format!("{name}.scenario"))
}

fn blendforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blendforge")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const INFEASIBLE: &str = r#"schema_version = 1
horizon_periods = 1
days_per_period = 30

[[roms]]
id = "A"
available_tonnes = [3000.0]
quality = { ash = 8.0 }

[[products]]
id = "P"
base_price_per_tonne = [80.0]
tonnage_target_tonnes = [5000.0]
contract_min_tonnes = [5000.0]
range = { ash = { min = 0.0, max = 10.0 } }
"#;

#[test]
fn count_prints_the_exact_size() {
    let o = blendforge(&["count", "--scenario", arg(&docs("five-rom-two-product"))]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "21142762711876 (~2.11e13)");
}

#[test]
fn count_of_a_scenario_without_products_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.scenario");
    std::fs::write(&path, "schema_version = 1\nhorizon_periods = 1\ndays_per_period = 30\n\n[[roms]]\nid = \"A\"\navailable_tonnes = [5000.0]\nquality = { ash = 9.0 }\n").unwrap();
    let o = blendforge(&["count", "--scenario", arg(&path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "1 (~1.00e0)");
}

#[test]
fn exit_codes_separate_bad_input_from_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(&bad, "schema_version = 1\nhorizon_periods = 0\n").unwrap();
    let o = blendforge(&["count", "--scenario", arg(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid scenario"));

    let o = blendforge(&["count", "--scenario", arg(&dir.path().join("nope.scenario"))]);
    assert_eq!(o.status.code(), Some(3));

    let out = dir.path().join("p.plan");
    let o = blendforge(&["optimize", "--scenario", arg(&docs("sweetener")), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2), "anneal without a seed");
    let o = blendforge(&["optimize", "--scenario", arg(&docs("sweetener")), "--strategy", "tabu", "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn optimize_is_reproducible_and_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.plan"));
        let o = blendforge(&[
            "optimize", "--scenario", arg(&docs("heuristics-b")), "--seed", "7", "--budget", "4000", "--restarts", "2",
            "--out", arg(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(out.with_extension("result")).unwrap())
    };
    let first = run("one");
    assert_eq!(first, run("two"));

    let s = load_scenario(&std::fs::read(docs("heuristics-b")).unwrap()).unwrap();
    let r = optimize(&s, &Strategy::seeded(StrategyKind::Anneal, 7).with_budget(4000).with_restarts(2), None).unwrap();
    assert_eq!(first.0, save_plan(&r.plan));
    assert_eq!(first.1, to_document(&r));
}

#[test]
fn infeasible_result_exits_one_but_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("short.scenario");
    std::fs::write(&scenario, INFEASIBLE).unwrap();
    let out = dir.path().join("short.plan");
    let result = dir.path().join("elsewhere.toml");
    let o = blendforge(&[
        "optimize", "--scenario", arg(&scenario), "--strategy", "max-tonnes", "--budget", "500", "--out", arg(&out),
        "--result", arg(&result),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.exists() && result.exists());
    assert!(stdout(&o).contains("ContractMin"), "{}", stdout(&o));
}

fn ranking(name: &str) -> Vec<String> {
    let o = blendforge(&["compare", "--scenario", arg(&docs(name)), "--budget", "50000", "--restarts", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o).lines().skip(1).map(|l| l.split_whitespace().nth(1).unwrap().to_string()).collect()
}

#[test]
fn compare_ranks_the_rules_of_thumb_differently_per_scenario() {
    let a = ranking("heuristics-a");
    let b = ranking("heuristics-b");
    assert_eq!(a.len(), 3);
    assert_eq!(a[0], "greedy-profit-first");
    assert_ne!(b[0], "greedy-profit-first");
}

#[test]
fn analyze_lists_violations_of_an_empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("empty.plan");
    std::fs::write(&plan, "schema_version = 1\n").unwrap();
    let out = dir.path().join("analytics.toml");
    let scenario = docs("sweetener");
    let o = blendforge(&["analyze", "--scenario", arg(&scenario), "--plan", arg(&plan), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("no violations") && text.contains("marginal value per tonne"), "{text}");

    let s = load_scenario(&std::fs::read(&scenario).unwrap()).unwrap();
    let library = analyze(
        &s,
        &blendforge_core::BlendPlan::empty(),
        &Strategy::seeded(StrategyKind::Anneal, 1),
        &AnalyticsOptions { marginal_budget: 2000, ..AnalyticsOptions::default() },
    )
    .unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), to_document(&library));

    let o = blendforge(&["analyze", "--scenario", arg(&docs("five-rom-two-product")), "--plan", arg(&plan), "--marginal-budget", "200"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("violations:") && text.contains("ContractMin"), "{text}");
}

//! Satisficing starting plan, built the way a planner fills a blend sheet by
//! hand: contracts first, then spare capacity, best-priced product first.

use crate::eval::{evaluate_grid, Outcome, ViolationCode};
use crate::model::Scenario;
use crate::plan::{BlendPlan, CutPoint, PlanGrid};

use super::{repair_grid, Compiled};

pub fn initial_plan(scenario: &Scenario) -> BlendPlan {
    initial_grid(&Compiled::unconstrained(scenario)).to_plan(scenario)
}

/// Violations that adding one more lot must not increase. Shortfalls
/// (contracts, tonnage floors, lots below the per-ROM minimum) are expected
/// while a blend is still being filled.
fn hard_violations(compiled: &Compiled, outcome: &Outcome) -> usize {
    let scenario_hard = outcome
        .violations
        .iter()
        .filter(|v| !matches!(v.code, ViolationCode::ContractMin | ViolationCode::MinLots))
        .count();
    let bound_hard = compiled
        .bound_violations(outcome)
        .iter()
        .filter(|(label, _)| !compiled.has_lower_tonnage(*label))
        .count();
    scenario_hard + bound_hard
}

pub(crate) fn initial_grid(compiled: &Compiled) -> PlanGrid {
    let scenario = &compiled.scenario;
    let mut grid = PlanGrid::empty(scenario);
    compiled.apply_fixed(&mut grid);
    let mut roms: Vec<usize> = (0..scenario.roms.len()).collect();
    roms.sort_by(|a, b| scenario.roms[*a].id.cmp(&scenario.roms[*b].id));

    let products = scenario.products.len();
    let mut baseline = hard_violations(compiled, &evaluate_grid(scenario, &grid));
    for t in 0..scenario.horizon_periods {
        let mut order: Vec<usize> = (0..products).collect();
        order.sort_by(|a, b| {
            let (pa, pb) = (&scenario.products[*a], &scenario.products[*b]);
            pb.base_price[t].total_cmp(&pa.base_price[t]).then_with(|| pa.id.cmp(&pb.id))
        });
        for fill_contracts in [true, false] {
            for &p in &order {
                let cap = scenario.max_lots(p, t);
                let target = if fill_contracts { scenario.contract_lots(p, t).min(cap) } else { cap };
                for &r in &roms {
                    let cell = grid.cell(t, p, r);
                    if compiled.is_fixed(cell) {
                        continue;
                    }
                    while grid.blend_lots(t, p) < target {
                        grid.lots[cell] += 1;
                        let outcome = evaluate_grid(scenario, &grid);
                        let hard = hard_violations(compiled, &outcome);
                        if hard <= baseline && outcome.blend(products, t, p).in_spec {
                            baseline = hard;
                            continue;
                        }
                        // a sharper cut may bring the lot into spec
                        match recut(compiled, &mut grid, t, p, r, baseline, others_in_spec(&outcome, products, t, p)) {
                            Some(hard) => baseline = hard,
                            None => {
                                grid.lots[cell] -= 1;
                                break;
                            }
                        }
                    }
                }
            }
        }
    }
    repair_grid(compiled, &mut grid);
    grid
}

/// In-spec blends other than `(t, p)`.
fn others_in_spec(outcome: &Outcome, products: usize, t: usize, p: usize) -> usize {
    let skip = t * products + p;
    outcome.blends.iter().enumerate().filter(|(i, b)| *i != skip && b.in_spec).count()
}

/// Tries the ROM's other knot densities, highest first, and keeps the first
/// that puts blend `(t, p)` in spec without breaking anything else. Returns
/// the new hard-violation count.
fn recut(compiled: &Compiled, grid: &mut PlanGrid, t: usize, p: usize, r: usize, baseline: usize, others: usize) -> Option<usize> {
    let scenario = &compiled.scenario;
    let curve = scenario.roms[r].curve.as_ref()?;
    let original = grid.cut(t, r);
    let products = scenario.products.len();
    for knot in curve.knots.iter().rev() {
        let cut = CutPoint::Density(knot.density);
        if cut == original {
            continue;
        }
        grid.set_cut(t, r, cut);
        let outcome = evaluate_grid(scenario, grid);
        let hard = hard_violations(compiled, &outcome);
        if hard <= baseline && outcome.blend(products, t, p).in_spec && others_in_spec(&outcome, products, t, p) >= others {
            return Some(hard);
        }
    }
    grid.set_cut(t, r, original);
    None
}

//! Drop-based feasibility repair.
//!
//! Structural constraints (tonnage caps, blend cardinality, minimum lots,
//! availability, rehandle stock, haul and wash capacity) are restored by
//! removing lots, cheapest first, until none is broken. Repair never adds a
//! lot and never touches a held cell.

use crate::error::PlanError;
use crate::eval::{cost_sheet, washed_states, Subject, ViolationCode};
use crate::model::Scenario;
use crate::plan::{BlendPlan, PlanGrid};

use super::Compiled;

#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub plan: BlendPlan,
    /// False when some structural violation could not be removed.
    pub feasible: bool,
}

/// Repairs `plan` against `scenario`.
pub fn repair(scenario: &Scenario, plan: &BlendPlan) -> Result<Repaired, PlanError> {
    let mut grid = PlanGrid::bind(scenario, plan)?;
    let compiled = Compiled::unconstrained(scenario);
    let feasible = repair_grid(&compiled, &mut grid);
    Ok(Repaired { plan: grid.to_plan(scenario), feasible })
}

/// Net value of one feed tonne per cell: price times yield less haul and
/// variable wash cost. Lower values are dropped first.
fn cell_values(scenario: &Scenario, grid: &PlanGrid) -> Vec<f64> {
    let (yields, _) = washed_states(scenario, grid);
    let log = &scenario.logistics;
    let roms = grid.roms();
    let mut values = vec![0.0; grid.lots.len()];
    for (cell, v) in values.iter_mut().enumerate() {
        let (t, p, r) = grid.coords(cell);
        let rom = &scenario.roms[r];
        let wash = if grid.cut(t, r).is_bypass() { 0.0 } else { log.wash_variable_cost_per_tonne };
        *v = scenario.products[p].base_price[t] * yields[t * roms + r]
            - rom.haul_hours_per_tonne * log.haul_cost_per_hour
            - wash;
    }
    values
}

struct Dropper<'a> {
    compiled: &'a Compiled,
    /// Cells sorted by value, then by (period, product, rom).
    order: Vec<usize>,
}

impl Dropper<'_> {
    /// Removes one lot from the cheapest droppable cell matching `filter`.
    fn drop_one(&self, grid: &mut PlanGrid, filter: impl Fn(usize, usize, usize) -> bool) -> bool {
        for &cell in &self.order {
            if grid.lots[cell] == 0 || self.compiled.is_fixed(cell) {
                continue;
            }
            let (t, p, r) = grid.coords(cell);
            if filter(t, p, r) {
                grid.lots[cell] -= 1;
                return true;
            }
        }
        false
    }
}

/// Repairs `grid` in place against the compiled scenario. Returns whether
/// every structural constraint now holds.
pub(crate) fn repair_grid(compiled: &Compiled, grid: &mut PlanGrid) -> bool {
    let scenario = &compiled.scenario;
    compiled.apply_fixed(grid);
    let values = cell_values(scenario, grid);
    let mut order: Vec<usize> = (0..grid.lots.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]).then(a.cmp(b)));
    let dropper = Dropper { compiled, order };
    let log = &scenario.logistics;
    let lot = log.lot_size_tonnes;

    loop {
        let mut changed = false;
        for t in 0..grid.periods() {
            for p in 0..grid.products() {
                let cap = scenario.max_lots(p, t);
                while grid.blend_lots(t, p) > cap && dropper.drop_one(grid, |tt, pp, _| tt == t && pp == p) {
                    changed = true;
                }
                loop {
                    let used: Vec<usize> = (0..grid.roms()).filter(|&r| grid.lots(t, p, r) > 0).collect();
                    if used.len() as u32 <= log.max_rom_types_per_blend {
                        break;
                    }
                    let victim = used
                        .iter()
                        .copied()
                        .filter(|&r| !compiled.is_fixed(grid.cell(t, p, r)))
                        .min_by(|&a, &b| {
                            let (ca, cb) = (grid.cell(t, p, a), grid.cell(t, p, b));
                            grid.lots[ca].cmp(&grid.lots[cb]).then(values[ca].total_cmp(&values[cb])).then(a.cmp(&b))
                        });
                    let Some(r) = victim else { break };
                    grid.set_lots(t, p, r, 0);
                    changed = true;
                }
            }
        }
        for cell in 0..grid.lots.len() {
            let lots = grid.lots[cell];
            if lots > 0 && lots < log.min_lots_per_used_rom && !compiled.is_fixed(cell) {
                grid.lots[cell] = 0;
                changed = true;
            }
        }
        if changed {
            continue;
        }

        // Stock and capacity: fix the earliest broken slack that can be fixed.
        let sheet = cost_sheet(scenario, grid);
        let mut broken: Vec<_> = sheet.slacks.iter().filter(|s| s.slack < 0.0).collect();
        broken.sort_by_key(|s| (s.period, s.code));
        let mut progressed = false;
        for s in broken {
            let t = s.period;
            let washed: Vec<bool> = (0..grid.roms()).map(|r| !grid.cut(t, r).is_bypass()).collect();
            progressed = match (s.code, s.subject) {
                (ViolationCode::RehandleStock, Subject::Rom(r)) => {
                    grid.set_rehandle(t, r, s.limit.max(0.0));
                    true
                }
                (ViolationCode::Availability, Subject::Rom(r)) => {
                    let lots = ((-s.slack / lot) - 1e-9).ceil().max(1.0) as u32;
                    let mut done = 0;
                    while done < lots
                        && (dropper.drop_one(grid, |tt, _, rr| tt == t && rr == r)
                            || dropper.drop_one(grid, |tt, _, rr| tt < t && rr == r))
                    {
                        done += 1;
                    }
                    done > 0
                }
                (ViolationCode::HaulCapacity, _) => dropper.drop_one(grid, |tt, _, r| {
                    let rom = &scenario.roms[r];
                    tt == t && rom.haul_hours_per_tonne.max(rom.staging_haul_hours_per_tonne) > 0.0
                }),
                (ViolationCode::WashCapacity, _) => dropper.drop_one(grid, |tt, _, r| tt == t && washed[r]),
                _ => false,
            };
            if progressed {
                break;
            }
        }
        if !progressed {
            break;
        }
    }
    structurally_feasible(compiled, grid)
}

pub(crate) fn structurally_feasible(compiled: &Compiled, grid: &PlanGrid) -> bool {
    let scenario = &compiled.scenario;
    let log = &scenario.logistics;
    for t in 0..grid.periods() {
        for p in 0..grid.products() {
            if grid.blend_lots(t, p) > scenario.max_lots(p, t) {
                return false;
            }
            let mut used = 0;
            for r in 0..grid.roms() {
                let lots = grid.lots(t, p, r);
                if lots > 0 {
                    used += 1;
                    if lots < log.min_lots_per_used_rom {
                        return false;
                    }
                }
            }
            if used > log.max_rom_types_per_blend {
                return false;
            }
        }
    }
    cost_sheet(scenario, grid).slacks.iter().all(|s| s.slack >= 0.0)
}

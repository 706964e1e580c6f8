//! Neighbourhood moves. Each move perturbs a plan slightly and the result is
//! always passed through repair.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::PlanError;
use crate::model::{AshYieldCurve, Scenario};
use crate::plan::{BlendPlan, CutPoint, PlanGrid};

use super::{repair_grid, Compiled, Strategy};

/// Cut-points the search steps through for one curve: the knot densities
/// with each interval split into `subdivisions` equal steps, then bypass
/// when allowed (no separation at all sits above the highest density).
pub fn cut_ladder(curve: &AshYieldCurve, subdivisions: u32) -> Vec<CutPoint> {
    let mut out = Vec::new();
    let s = subdivisions.max(1);
    for pair in curve.knots.windows(2) {
        let (a, b) = (pair[0].density, pair[1].density);
        for j in 0..s {
            out.push(CutPoint::Density(a + (b - a) * j as f64 / s as f64));
        }
    }
    out.push(CutPoint::Density(curve.max_density()));
    if curve.bypass_allowed {
        out.push(CutPoint::Bypass);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MoveKind {
    MoveLot,
    AddLot,
    DropLot,
    SwapLots,
    AdjustCut,
    ToggleRehandle,
}

const WEIGHTS: [(MoveKind, u32); 6] = [
    (MoveKind::MoveLot, 30),
    (MoveKind::AddLot, 20),
    (MoveKind::DropLot, 15),
    (MoveKind::SwapLots, 15),
    (MoveKind::AdjustCut, 15),
    (MoveKind::ToggleRehandle, 5),
];

pub(crate) struct MoveSet {
    /// Cut ladder per ROM; empty for ROMs without a curve.
    ladders: Vec<Vec<CutPoint>>,
    /// ROMs for which staging is cheaper to haul from than the pit.
    rehandle_roms: Vec<usize>,
    jitter: f64,
}

impl MoveSet {
    pub fn new(scenario: &Scenario, strategy: &Strategy) -> Self {
        let ladders = scenario
            .roms
            .iter()
            .map(|r| r.curve.as_ref().map_or_else(Vec::new, |c| cut_ladder(c, strategy.cut_subdivisions)))
            .collect();
        let rehandle_roms = scenario
            .roms
            .iter()
            .enumerate()
            .filter(|(_, r)| r.staging_haul_hours_per_tonne < r.haul_hours_per_tonne)
            .map(|(i, _)| i)
            .collect();
        Self { ladders, rehandle_roms, jitter: strategy.cut_jitter }
    }

    fn applicable(&self, kind: MoveKind) -> bool {
        match kind {
            MoveKind::AdjustCut => self.ladders.iter().any(|l| l.len() > 1) || self.jitter > 0.0,
            MoveKind::ToggleRehandle => !self.rehandle_roms.is_empty(),
            _ => true,
        }
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

/// Applies one random move to `grid`, then repairs it. Returns `None` when no
/// move changes anything.
pub(crate) fn propose(compiled: &Compiled, moves: &MoveSet, grid: &PlanGrid, rng: &mut ChaCha8Rng) -> Option<PlanGrid> {
    let has_lots = grid.lots.iter().any(|l| *l > 0);
    let kinds: Vec<(MoveKind, u32)> = WEIGHTS
        .iter()
        .copied()
        .filter(|(k, _)| moves.applicable(*k))
        .filter(|(k, _)| has_lots || matches!(k, MoveKind::AddLot | MoveKind::AdjustCut | MoveKind::ToggleRehandle))
        .collect();
    if kinds.is_empty() {
        return None;
    }
    let total: u32 = kinds.iter().map(|(_, w)| w).sum();
    // repeated attempts so that an inapplicable draw (no swap partner, say)
    // does not end the search
    for _ in 0..64 {
        let mut roll = rng.random_range(0..total);
        let mut kind = kinds[0].0;
        for (k, w) in &kinds {
            if roll < *w {
                kind = *k;
                break;
            }
            roll -= w;
        }
        let mut next = grid.clone();
        if apply(compiled, moves, kind, &mut next, rng) {
            repair_grid(compiled, &mut next);
            return Some(next);
        }
    }
    None
}

fn apply(compiled: &Compiled, moves: &MoveSet, kind: MoveKind, grid: &mut PlanGrid, rng: &mut ChaCha8Rng) -> bool {
    let scenario = &compiled.scenario;
    let (periods, products, roms) = (grid.periods(), grid.products(), grid.roms());
    if grid.lots.is_empty() && !matches!(kind, MoveKind::AdjustCut | MoveKind::ToggleRehandle) {
        return false;
    }
    let free = |cell: usize| !compiled.is_fixed(cell);
    let occupied: Vec<usize> = (0..grid.lots.len()).filter(|&c| grid.lots[c] > 0 && free(c)).collect();
    match kind {
        MoveKind::MoveLot => {
            let Some(src) = pick(rng, &occupied) else { return false };
            let (t, p, r) = grid.coords(src);
            let mut axes = Vec::with_capacity(3);
            if roms > 1 {
                axes.push(0);
            }
            if products > 1 {
                axes.push(1);
            }
            if periods > 1 {
                axes.push(2);
            }
            let Some(axis) = pick(rng, &axes) else { return false };
            let other = |n: usize, cur: usize, rng: &mut ChaCha8Rng| {
                let v = rng.random_range(0..n - 1);
                if v >= cur {
                    v + 1
                } else {
                    v
                }
            };
            let dst = match axis {
                0 => grid.cell(t, p, other(roms, r, rng)),
                1 => grid.cell(t, other(products, p, rng), r),
                _ => grid.cell(other(periods, t, rng), p, r),
            };
            if !free(dst) {
                return false;
            }
            grid.lots[src] -= 1;
            grid.lots[dst] += 1;
            true
        }
        MoveKind::AddLot => {
            let open: Vec<usize> = (0..grid.lots.len())
                .filter(|&c| {
                    let (t, p, _) = grid.coords(c);
                    free(c) && grid.blend_lots(t, p) < scenario.max_lots(p, t)
                })
                .collect();
            let Some(cell) = pick(rng, &open) else { return false };
            grid.lots[cell] += 1;
            true
        }
        MoveKind::DropLot => {
            let Some(cell) = pick(rng, &occupied) else { return false };
            grid.lots[cell] -= 1;
            true
        }
        MoveKind::SwapLots => {
            let Some(a) = pick(rng, &occupied) else { return false };
            let (t, p1, r1) = grid.coords(a);
            let partners: Vec<usize> = occupied
                .iter()
                .copied()
                .filter(|&b| {
                    let (tb, p2, r2) = grid.coords(b);
                    tb == t && p2 != p1 && r2 != r1 && free(grid.cell(t, p1, r2)) && free(grid.cell(t, p2, r1))
                })
                .collect();
            let Some(b) = pick(rng, &partners) else { return false };
            let (_, p2, r2) = grid.coords(b);
            // each blend keeps its size and each ROM its total feed
            grid.lots[a] -= 1;
            grid.lots[b] -= 1;
            let (c1, c2) = (grid.cell(t, p1, r2), grid.cell(t, p2, r1));
            grid.lots[c1] += 1;
            grid.lots[c2] += 1;
            true
        }
        MoveKind::AdjustCut => {
            let slots: Vec<(usize, usize)> = (0..periods)
                .flat_map(|t| (0..roms).map(move |r| (t, r)))
                .filter(|&(_, r)| moves.ladders[r].len() > 1 || (moves.jitter > 0.0 && !moves.ladders[r].is_empty()))
                .collect();
            let Some((t, r)) = pick(rng, &slots) else { return false };
            let ladder = &moves.ladders[r];
            let cur = grid.cut(t, r);
            if moves.jitter > 0.0 && rng.random_bool(0.5) {
                if let (CutPoint::Density(d), Some(curve)) = (cur, &scenario.roms[r].curve) {
                    let step = rng.random_range(-moves.jitter..=moves.jitter);
                    let next = (d + step).clamp(curve.min_density(), curve.max_density());
                    if next != d {
                        grid.set_cut(t, r, CutPoint::Density(next));
                        return true;
                    }
                    return false;
                }
            }
            if ladder.len() < 2 {
                return false;
            }
            let pos = nearest(ladder, cur);
            let next = if pos == 0 {
                1
            } else if pos == ladder.len() - 1 || rng.random_bool(0.5) {
                pos - 1
            } else {
                pos + 1
            };
            grid.set_cut(t, r, ladder[next]);
            true
        }
        MoveKind::ToggleRehandle => {
            let Some(r) = pick(rng, &moves.rehandle_roms) else { return false };
            let t = rng.random_range(0..periods);
            if grid.rehandle(t, r) > 0.0 {
                grid.set_rehandle(t, r, 0.0);
            } else {
                let log = &scenario.logistics;
                let feed = grid.rom_lots(t, r).max(1) as f64 * log.lot_size_tonnes;
                grid.set_rehandle(t, r, feed / (1.0 - log.rehandle_loss_fraction));
            }
            true
        }
    }
}

fn nearest(ladder: &[CutPoint], cut: CutPoint) -> usize {
    match cut {
        CutPoint::Bypass => ladder.iter().position(|c| c.is_bypass()).unwrap_or(0),
        CutPoint::Density(d) => ladder
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.density().map(|x| (i, (x - d).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(i, _)| i),
    }
}

/// One random neighbour of `plan`, repaired. The plan is returned unchanged
/// when it has no neighbour.
pub fn neighbors(scenario: &Scenario, plan: &BlendPlan, rng: &mut ChaCha8Rng) -> Result<BlendPlan, PlanError> {
    let grid = PlanGrid::bind(scenario, plan)?;
    let compiled = Compiled::unconstrained(scenario);
    let moves = MoveSet::new(scenario, &Strategy::new(super::StrategyKind::LocalSearch));
    Ok(propose(&compiled, &moves, &grid, rng).unwrap_or(grid).to_plan(scenario))
}

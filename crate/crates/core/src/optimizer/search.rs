//! The annealing engine shared by every strategy.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{evaluate_grid, Outcome};
use crate::plan::PlanGrid;

use super::moves::{propose, MoveSet};
use super::{Compiled, Objective, RunControl, Strategy, StrategyKind, TracePoint};

/// Plans are ranked by violation count, then total violation magnitude, then
/// `keys` (larger is better, compared in order).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Score {
    pub violations: usize,
    pub magnitude: f64,
    pub keys: Vec<f64>,
    pub objective: f64,
}

impl Score {
    pub fn feasible(&self) -> bool {
        self.violations == 0
    }

    /// `Greater` when `self` ranks above `other`.
    pub fn rank(&self, other: &Score) -> Ordering {
        other
            .violations
            .cmp(&self.violations)
            .then_with(|| other.magnitude.total_cmp(&self.magnitude))
            .then_with(|| {
                for (a, b) in self.keys.iter().zip(&other.keys) {
                    match a.total_cmp(b) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            })
    }

    /// The same ranking restricted to the objective itself.
    pub fn rank_by_objective(&self, other: &Score) -> Ordering {
        other
            .violations
            .cmp(&self.violations)
            .then_with(|| other.magnitude.total_cmp(&self.magnitude))
            .then_with(|| self.objective.total_cmp(&other.objective))
    }
}

pub(crate) fn score(compiled: &Compiled, strategy: &Strategy, grid: &PlanGrid) -> (Score, Outcome) {
    let scenario = &compiled.scenario;
    let outcome = evaluate_grid(scenario, grid);
    let bounds = compiled.bound_violations(&outcome);
    let violations = outcome.violations.len() + bounds.len();
    let magnitude = outcome.violation_magnitude() + bounds.iter().map(|(_, m)| m.abs()).sum::<f64>();
    let objective = match strategy.objective {
        Objective::Npv => outcome.npv,
        Objective::Revenue => outcome.total_revenue,
    };
    let products = scenario.products.len();
    let keys = match strategy.name {
        StrategyKind::LocalSearch | StrategyKind::Anneal => vec![objective],
        StrategyKind::GreedyProfitFirst => {
            // sold tonnes of each product, most valuable product first
            let mut order: Vec<usize> = (0..products).collect();
            order.sort_by(|a, b| {
                let (pa, pb) = (&scenario.products[*a], &scenario.products[*b]);
                pb.mean_price().total_cmp(&pa.mean_price()).then_with(|| pa.id.cmp(&pb.id))
            });
            let mut keys: Vec<f64> = order
                .iter()
                .map(|&p| (0..scenario.horizon_periods).map(|t| outcome.blend(products, t, p).sold_tonnes()).sum())
                .collect();
            keys.push(objective);
            keys
        }
        StrategyKind::AvgValue => {
            let avg = if outcome.sold_tonnes > 0.0 { outcome.total_revenue / outcome.sold_tonnes } else { 0.0 };
            vec![avg, objective]
        }
        StrategyKind::MaxTonnes => vec![outcome.sold_tonnes, objective],
    };
    (Score { violations, magnitude, keys, objective }, outcome)
}

#[derive(Debug, Clone)]
pub(crate) struct SearchOutput {
    pub best: PlanGrid,
    pub trace: Vec<TracePoint>,
    pub evaluations: u64,
    pub cancelled: bool,
    /// Feasible plans seen within 0.1% of the best feasible objective.
    pub elite: Vec<(PlanGrid, f64)>,
}

const ELITE_FRACTION: f64 = 1e-3;
const ELITE_CAP: usize = 512;
const CALIBRATION_SAMPLES: u64 = 30;
const VIOLATION_STEP: f64 = 2.0;

struct Search<'a> {
    compiled: &'a Compiled,
    strategy: &'a Strategy,
    control: &'a RunControl,
    moves: MoveSet,
    rng: ChaCha8Rng,
    evaluations: u64,
    best: PlanGrid,
    best_score: Score,
    trace: Vec<TracePoint>,
    elite: Vec<(PlanGrid, f64)>,
    elite_floor: f64,
    magnitude_scale: f64,
}

impl Search<'_> {
    fn budget_left(&self) -> bool {
        self.evaluations < self.strategy.budget_evaluations
    }

    fn evaluate(&mut self, grid: &PlanGrid) -> Score {
        self.evaluations += 1;
        self.control.tick();
        let (s, _) = score(self.compiled, self.strategy, grid);
        self.offer(grid, &s);
        s
    }

    fn offer(&mut self, grid: &PlanGrid, s: &Score) {
        if s.feasible() {
            self.offer_elite(grid, s.objective);
        }
        if s.rank(&self.best_score) == Ordering::Greater {
            self.best = grid.clone();
            self.best_score = s.clone();
            if s.feasible() {
                self.trace.push(TracePoint { evaluation: self.evaluations, objective: s.keys[0] });
            }
        }
    }

    fn offer_elite(&mut self, grid: &PlanGrid, objective: f64) {
        let top = self.elite.iter().map(|(_, o)| *o).fold(objective, f64::max);
        let floor = top - ELITE_FRACTION * top.abs();
        if floor > self.elite_floor {
            self.elite_floor = floor;
            self.elite.retain(|(_, o)| *o >= floor);
        }
        if objective < self.elite_floor || self.elite.iter().any(|(g, _)| g == grid) {
            return;
        }
        if self.elite.len() < ELITE_CAP {
            self.elite.push((grid.clone(), objective));
        } else if let Some((i, _)) =
            self.elite.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).filter(|(_, (_, o))| *o < objective)
        {
            self.elite[i] = (grid.clone(), objective);
        }
    }

    /// Whether to move from `current` to `candidate` at temperature `t`.
    fn accept(&mut self, candidate: &Score, current: &Score, t: f64, scales: &[f64]) -> bool {
        match candidate.violations.cmp(&current.violations) {
            Ordering::Greater => {
                // brief excursions through infeasible plans, only while hot
                let d = (candidate.violations - current.violations) as f64;
                return t > 0.0 && self.rng.random::<f64>() < (-VIOLATION_STEP * d / t).exp();
            }
            Ordering::Less => return true,
            Ordering::Equal => {}
        }
        if current.violations > 0 {
            let d = candidate.magnitude - current.magnitude;
            if d < 0.0 {
                return true;
            }
            if d > 0.0 {
                // infeasible plans anneal on how far off they are
                return t > 0.0 && self.rng.random::<f64>() < (-d / self.magnitude_scale / t).exp();
            }
        }
        for (i, (a, b)) in candidate.keys.iter().zip(&current.keys).enumerate() {
            let d = a - b;
            if d == 0.0 {
                continue;
            }
            if d > 0.0 {
                return true;
            }
            if t <= 0.0 {
                return false;
            }
            return self.rng.random::<f64>() < (d / scales[i] / t).exp();
        }
        true
    }
}

/// Runs the strategy from `initial`, which should already be repaired.
pub(crate) fn run_search(compiled: &Compiled, strategy: &Strategy, initial: PlanGrid, control: &RunControl) -> SearchOutput {
    let (initial_score, _) = score(compiled, strategy, &initial);
    let mut search = Search {
        compiled,
        strategy,
        control,
        moves: MoveSet::new(&compiled.scenario, strategy),
        rng: ChaCha8Rng::seed_from_u64(strategy.rng_seed()),
        evaluations: 0,
        best: initial.clone(),
        best_score: initial_score.clone(),
        trace: Vec::new(),
        elite: Vec::new(),
        elite_floor: f64::NEG_INFINITY,
        magnitude_scale: 1.0,
    };
    if initial_score.feasible() {
        search.trace.push(TracePoint { evaluation: 0, objective: initial_score.keys[0] });
        search.offer_elite(&initial, initial_score.objective);
    }
    let mut cancelled = false;

    // Typical key change per move, so that temperatures are unit-free.
    let mut sums = vec![0.0; initial_score.keys.len()];
    let mut counts = vec![0u32; initial_score.keys.len()];
    let (mut mag_sum, mut mag_count) = (0.0, 0u32);
    let samples = CALIBRATION_SAMPLES.min(strategy.budget_evaluations / 10);
    for _ in 0..samples {
        if control.is_cancelled() {
            cancelled = true;
            break;
        }
        let Some(cand) = propose(compiled, &search.moves, &initial, &mut search.rng) else { break };
        let s = search.evaluate(&cand);
        let dm = (s.magnitude - initial_score.magnitude).abs();
        if dm > 0.0 && dm.is_finite() {
            mag_sum += dm;
            mag_count += 1;
        }
        for (i, (a, b)) in s.keys.iter().zip(&initial_score.keys).enumerate() {
            let d = (a - b).abs();
            if d > 0.0 && d.is_finite() {
                sums[i] += d;
                counts[i] += 1;
            }
        }
    }
    let scales: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| if *c > 0 { s / *c as f64 } else { 1.0 }).collect();
    if mag_count > 0 {
        search.magnitude_scale = mag_sum / mag_count as f64;
    }

    let t0 = if strategy.name == StrategyKind::LocalSearch { 0.0 } else { strategy.initial_temperature };
    let restarts = strategy.restarts.max(1) as u64;
    let start = (initial.clone(), initial_score.clone());
    let mut current = initial;
    let mut current_score = initial_score;
    'restarts: for restart in 0..restarts {
        let left = strategy.budget_evaluations.saturating_sub(search.evaluations);
        let steps = left / (restarts - restart);
        if steps == 0 {
            continue;
        }
        if restart > 0 {
            // alternate between intensifying around the best and starting over
            (current, current_score) =
                if restart % 2 == 1 { (search.best.clone(), search.best_score.clone()) } else { start.clone() };
            if t0 == 0.0 {
                // hill climbing restarts from a perturbed best
                for _ in 0..3 {
                    if let Some(k) = propose(compiled, &search.moves, &current, &mut search.rng) {
                        current = k;
                    }
                }
                current_score = search.evaluate(&current);
            }
        }
        let alpha = strategy.cooling_factor.unwrap_or_else(|| 1e-3f64.powf(1.0 / steps as f64));
        let mut temperature = t0;
        for _ in 0..steps {
            if control.is_cancelled() {
                cancelled = true;
                break 'restarts;
            }
            if !search.budget_left() {
                break 'restarts;
            }
            let Some(cand) = propose(compiled, &search.moves, &current, &mut search.rng) else { break 'restarts };
            let s = search.evaluate(&cand);
            if search.accept(&s, &current_score, temperature, &scales) {
                current = cand;
                current_score = s;
            }
            temperature *= alpha;
        }
    }

    let Search { mut best, best_score, trace, elite, evaluations, .. } = search;
    // A rule of thumb may rank plans differently from the objective; it must
    // still never return less than the plan it started from.
    if strategy.name.is_heuristic() && start.1.rank_by_objective(&best_score) == Ordering::Greater {
        best = start.0;
    }
    SearchOutput { best, trace, evaluations, cancelled, elite }
}

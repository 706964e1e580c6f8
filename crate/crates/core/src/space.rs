//! Counting and exhaustive enumeration of the blend decision space.
//!
//! A blend is a composition of its lot count over the ROM types that may feed
//! it. Each product-period is one [`BlendSlot`] whose lot count may range from
//! the contract minimum up to the tonnage target. Slots in the same period are
//! coupled only through per-ROM availability caps.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::model::Scenario;
use crate::plan::{BlendPlan, CutPoint, PlanGrid};

/// Number of non-negative integer `k`-tuples summing to `n`, i.e. C(n+k-1, k-1).
pub fn count_compositions(n: u32, k: u32) -> BigUint {
    if k == 0 {
        return if n == 0 { BigUint::one() } else { BigUint::zero() };
    }
    let top = n as u64 + k as u64 - 1;
    let r = (k as u64 - 1).min(n as u64);
    let mut acc = BigUint::one();
    for i in 0..r {
        acc *= top - i;
        acc /= i + 1;
    }
    acc
}

/// Compositions of every lot count in `lo..=hi`.
fn count_range(lo: u32, hi: u32, k: u32) -> BigUint {
    if lo > hi {
        return BigUint::zero();
    }
    // Σ_{m ≤ hi} C(m+k-1, k-1) = C(hi+k, k)
    let upto = |m: u32| count_compositions(m, k + 1);
    let below = if lo == 0 { BigUint::zero() } else { upto(lo - 1) };
    upto(hi) - below
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlendSlot {
    pub min_lots: u32,
    pub max_lots: u32,
    /// The blend may draw on ROMs `0..rom_count`.
    pub rom_count: u32,
}

impl BlendSlot {
    pub fn exact(lots: u32, rom_count: u32) -> Self {
        Self { min_lots: lots, max_lots: lots, rom_count }
    }
}

/// Blend slots of one period and the per-ROM lot caps they share.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotGroup {
    pub slots: Vec<BlendSlot>,
    /// Lots available per ROM index; `None` when availability never binds.
    pub caps: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpaceSummary {
    pub groups: Vec<SlotGroup>,
}

impl SpaceSummary {
    /// Independent products, each blending exactly `n` lots from `k` ROMs.
    pub fn products(per_product: &[(u32, u32)]) -> Self {
        let slots = per_product.iter().map(|&(n, k)| BlendSlot::exact(n, k)).collect();
        Self { groups: vec![SlotGroup { slots, caps: None }] }
    }

    /// One group per period. Each product's slot spans
    /// `[ceil(contract/lot), floor(target/lot)]` feed lots; ROM caps are the
    /// cumulative availability to date, kept only where they can bind.
    pub fn of_scenario(scenario: &Scenario) -> Self {
        let k = scenario.roms.len() as u32;
        let groups = (0..scenario.horizon_periods)
            .map(|t| {
                let slots: Vec<BlendSlot> = (0..scenario.products.len())
                    .map(|p| {
                        let hi = scenario.max_lots(p, t);
                        let lo = scenario.contract_lots(p, t).min(hi);
                        BlendSlot { min_lots: lo, max_lots: hi, rom_count: k }
                    })
                    .collect();
                let demand: u64 = slots.iter().map(|s| s.max_lots as u64).sum();
                let caps: Vec<u32> = (0..scenario.roms.len()).map(|r| scenario.cumulative_rom_lots(r, t)).collect();
                let binding = caps.iter().any(|&c| (c as u64) < demand);
                SlotGroup { slots, caps: binding.then_some(caps) }
            })
            .collect();
        Self { groups }
    }
}

/// Exact number of lot assignments described by `summary`.
pub fn count_blend_space(summary: &SpaceSummary) -> BigUint {
    summary.groups.iter().map(count_group).product()
}

/// `n` in scientific notation with three significant digits, e.g. `2.11e13`.
pub fn scientific(n: &BigUint) -> String {
    let digits = n.to_string();
    if digits.len() <= 3 {
        let lead = &digits[..1];
        let rest = format!("{:0<2}", &digits[1..]);
        return format!("{lead}.{rest}e{}", digits.len() - 1);
    }
    let mut exp = digits.len() - 1;
    let scale = BigUint::from(10u32).pow(digits.len() as u32 - 3);
    let (mut q, r) = (n / &scale, n % &scale);
    if r * 2u32 >= scale {
        q += 1u32;
    }
    let mut q = q.to_string();
    if q.len() > 3 {
        // rounded up to the next power of ten
        q.truncate(3);
        exp += 1;
    }
    format!("{}.{}e{exp}", &q[..1], &q[1..])
}

fn count_group(group: &SlotGroup) -> BigUint {
    match &group.caps {
        None => group.slots.iter().map(|s| count_range(s.min_lots, s.max_lots, s.rom_count)).product(),
        Some(caps) => count_capped(&group.slots, caps),
    }
}

/// DP over ROMs; the state is the lots assigned so far to each slot.
fn count_capped(slots: &[BlendSlot], caps: &[u32]) -> BigUint {
    if slots.iter().any(|s| s.min_lots > s.max_lots) {
        return BigUint::zero();
    }
    let roms = slots.iter().map(|s| s.rom_count as usize).max().unwrap_or(0);
    let mut states: HashMap<Vec<u32>, BigUint> = HashMap::new();
    states.insert(vec![0; slots.len()], BigUint::one());
    for r in 0..roms {
        let cap = caps.get(r).copied().unwrap_or(0);
        let mut next: HashMap<Vec<u32>, BigUint> = HashMap::new();
        for (state, ways) in &states {
            let mut add = vec![0u32; slots.len()];
            loop {
                let mut s = state.clone();
                for (i, a) in add.iter().enumerate() {
                    s[i] += a;
                }
                *next.entry(s).or_insert_with(BigUint::zero) += ways;
                if !advance(&mut add, |i, a| {
                    let slot = &slots[i];
                    (r as u32) < slot.rom_count && state[i] + a <= slot.max_lots
                }, cap)
                {
                    break;
                }
            }
        }
        states = next;
    }
    states
        .into_iter()
        .filter(|(s, _)| s.iter().zip(slots).all(|(v, slot)| *v >= slot.min_lots))
        .map(|(_, w)| w)
        .sum()
}

/// Next vector in odometer order such that each entry passes `ok` and the
/// entries sum to at most `budget`. Returns false once exhausted.
fn advance(v: &mut [u32], ok: impl Fn(usize, u32) -> bool, budget: u32) -> bool {
    for i in (0..v.len()).rev() {
        v[i] += 1;
        let total: u64 = v.iter().map(|x| *x as u64).sum();
        if ok(i, v[i]) && total <= budget as u64 {
            return true;
        }
        v[i] = 0;
    }
    false
}

/// Cut-point choices per `(period, rom)`: grid densities inside the ROM's
/// curve range, with bypass first when allowed. A ROM without a curve has
/// only bypass; a washable ROM with no grid point in range keeps its default.
pub fn cut_options(scenario: &Scenario, cut_grid: &[f64]) -> Vec<Vec<CutPoint>> {
    let mut grid: Vec<f64> = cut_grid.iter().copied().filter(|d| d.is_finite()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut out = Vec::with_capacity(scenario.horizon_periods * scenario.roms.len());
    for _ in 0..scenario.horizon_periods {
        for rom in &scenario.roms {
            let options = match &rom.curve {
                None => vec![CutPoint::Bypass],
                Some(c) => {
                    let mut o: Vec<CutPoint> = Vec::new();
                    if c.bypass_allowed {
                        o.push(CutPoint::Bypass);
                    }
                    o.extend(
                        grid.iter()
                            .filter(|d| **d >= c.min_density() && **d <= c.max_density())
                            .map(|d| CutPoint::Density(*d)),
                    );
                    if o.is_empty() {
                        o.push(CutPoint::Density(c.max_density()));
                    }
                    o
                }
            };
            out.push(options);
        }
    }
    out
}

/// Number of distinct plans [`enumerate_plans`] would yield.
pub fn plan_count(scenario: &Scenario, cut_grid: &[f64]) -> BigUint {
    let cuts: BigUint = cut_options(scenario, cut_grid).iter().map(|o| BigUint::from(o.len())).product();
    count_blend_space(&SpaceSummary::of_scenario(scenario)) * cuts
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceTooLarge {
    pub count: BigUint,
    pub limit: u64,
}

impl fmt::Display for SpaceTooLarge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "plan space has {} plans, limit is {}", self.count, self.limit)
    }
}

impl std::error::Error for SpaceTooLarge {}

/// Iterator over every plan of an enumerable scenario as dense grids.
pub struct GridEnumerator {
    template: PlanGrid,
    /// Per period: every admissible lot layout, `products × roms` each.
    layouts: Vec<Vec<Vec<u32>>>,
    cuts: Vec<Vec<CutPoint>>,
    digits: Vec<usize>,
    radix: Vec<usize>,
    remaining: u64,
}

impl GridEnumerator {
    pub fn len(&self) -> u64 {
        self.remaining
    }

    pub fn is_empty(&self) -> bool {
        self.remaining == 0
    }
}

impl Iterator for GridEnumerator {
    type Item = PlanGrid;

    fn next(&mut self) -> Option<PlanGrid> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut grid = self.template.clone();
        let periods = self.layouts.len();
        let width = grid.products() * grid.roms();
        for (t, options) in self.layouts.iter().enumerate() {
            grid.lots[t * width..(t + 1) * width].copy_from_slice(&options[self.digits[t]]);
        }
        for (i, options) in self.cuts.iter().enumerate() {
            grid.cuts[i] = options[self.digits[periods + i]];
        }
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < self.radix[i] {
                break;
            }
            self.digits[i] = 0;
        }
        Some(grid)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining.min(usize::MAX as u64) as usize;
        (n, Some(n))
    }
}

/// All lot vectors of length `roms` with entries only below `k` and a sum
/// in `lo..=hi`, in lexicographic order.
fn compositions(lo: u32, hi: u32, k: usize, roms: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, left: u32, k: usize, lo_left: u32, out: &mut Vec<Vec<u32>>, roms: usize) {
        if prefix.len() == k {
            if lo_left == 0 {
                let mut v = prefix.clone();
                v.resize(roms, 0);
                out.push(v);
            }
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(prefix, left - a, k, lo_left.saturating_sub(a), out, roms);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if lo <= hi {
        rec(&mut Vec::with_capacity(k), hi, k.min(roms), lo, &mut out, roms);
    }
    out
}

fn period_layouts(group: &SlotGroup, roms: usize) -> Vec<Vec<u32>> {
    let per_slot: Vec<Vec<Vec<u32>>> =
        group.slots.iter().map(|s| compositions(s.min_lots, s.max_lots, s.rom_count as usize, roms)).collect();
    let mut layouts: Vec<Vec<u32>> = vec![Vec::new()];
    for options in &per_slot {
        let mut next = Vec::with_capacity(layouts.len() * options.len());
        for prefix in &layouts {
            for o in options {
                let mut v = prefix.clone();
                v.extend_from_slice(o);
                next.push(v);
            }
        }
        layouts = next;
    }
    if let Some(caps) = &group.caps {
        let products = group.slots.len();
        layouts.retain(|v| (0..roms).all(|r| (0..products).map(|p| v[p * roms + r]).sum::<u32>() <= caps[r]));
    }
    layouts
}

/// Dense-grid enumeration of every plan; refuses when the space exceeds `limit`.
pub fn enumerate_grids(scenario: &Scenario, cut_grid: &[f64], limit: u64) -> Result<GridEnumerator, SpaceTooLarge> {
    let count = plan_count(scenario, cut_grid);
    let total = match count.to_u64() {
        Some(n) if n <= limit => n,
        _ => return Err(SpaceTooLarge { count, limit }),
    };
    let summary = SpaceSummary::of_scenario(scenario);
    let roms = scenario.roms.len();
    let layouts: Vec<Vec<Vec<u32>>> = summary.groups.iter().map(|g| period_layouts(g, roms)).collect();
    let cuts = cut_options(scenario, cut_grid);
    let radix: Vec<usize> = layouts.iter().map(Vec::len).chain(cuts.iter().map(Vec::len)).collect();
    debug_assert_eq!(radix.iter().map(|r| *r as u64).product::<u64>(), total);
    Ok(GridEnumerator {
        template: PlanGrid::empty(scenario),
        digits: vec![0; radix.len()],
        layouts,
        cuts,
        radix,
        remaining: total,
    })
}

/// Every structurally valid plan exactly once, in a fixed order.
pub fn enumerate_plans<'a>(
    scenario: &'a Scenario,
    cut_grid: &[f64],
    limit: u64,
) -> Result<impl Iterator<Item = BlendPlan> + 'a, SpaceTooLarge> {
    Ok(enumerate_grids(scenario, cut_grid, limit)?.map(move |g| g.to_plan(scenario)))
}

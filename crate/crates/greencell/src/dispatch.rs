//! Day-ahead unit commitment of the local coal fleet, coal and CO2
//! accounting, and differential carbon attribution for the mobile network.
//!
//! The model: minimize generation plus startup/shutdown cost subject to
//! load balance with transmission losses, per-unit output bounds, a
//! committed-capacity reserve requirement, minimum up/down times, and the
//! startup/shutdown state logic. Binary commitments are solved exactly by
//! depth-first branch and bound over per-slot unit subsets; the continuous
//! dispatch inside each subset is a merit-order fill, which is optimal for
//! this box-constrained single-balance LP. Units start the horizon off.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ioutil;

pub const COAL_RATE_LARGE_T_PER_MWH: f64 = 0.3007;
pub const COAL_RATE_SMALL_T_PER_MWH: f64 = 0.3357;
pub const LARGE_UNIT_THRESHOLD_MW: f64 = 300.0;

/// Balance/bound slack in MW for floating-point comparisons.
pub const BALANCE_TOL_MW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerUnit {
    pub id: u32,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub cost_per_mwh: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub min_up_slots: usize,
    pub min_down_slots: usize,
    pub coal_rate_t_per_mwh: f64,
}

impl PowerUnit {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        p_min_mw: f64,
        p_max_mw: f64,
        cost_per_mwh: f64,
        startup_cost: f64,
        shutdown_cost: f64,
        min_up_slots: usize,
        min_down_slots: usize,
    ) -> Result<PowerUnit> {
        if !(p_min_mw > 0.0 && p_min_mw <= p_max_mw) {
            return Err(Error::invalid(format!(
                "unit {id}: need 0 < p_min <= p_max, got [{p_min_mw}, {p_max_mw}]"
            )));
        }
        if min_up_slots == 0 || min_down_slots == 0 {
            return Err(Error::invalid(format!("unit {id}: min up/down must be >= 1 slot")));
        }
        if !(cost_per_mwh >= 0.0 && startup_cost >= 0.0 && shutdown_cost >= 0.0) {
            return Err(Error::invalid(format!("unit {id}: costs must be >= 0")));
        }
        let coal_rate_t_per_mwh = if p_max_mw > LARGE_UNIT_THRESHOLD_MW {
            COAL_RATE_LARGE_T_PER_MWH
        } else {
            COAL_RATE_SMALL_T_PER_MWH
        };
        Ok(PowerUnit {
            id,
            p_min_mw,
            p_max_mw,
            cost_per_mwh,
            startup_cost,
            shutdown_cost,
            min_up_slots,
            min_down_slots,
            coal_rate_t_per_mwh,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchInstance {
    pub units: Vec<PowerUnit>,
    pub p_load_mw: Vec<f64>,
    pub p_outside_mw: Vec<f64>,
    pub p_res_mw: Vec<f64>,
    pub r_loss: f64,
}

impl DispatchInstance {
    pub fn n_slots(&self) -> usize {
        self.p_load_mw.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(Error::invalid("instance has no units"));
        }
        for w in self.units.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::invalid("unit ids must be unique and sorted"));
            }
        }
        if !(0.0..1.0).contains(&self.r_loss) {
            return Err(Error::invalid(format!("r_loss must be in [0, 1), got {}", self.r_loss)));
        }
        let n = self.p_load_mw.len();
        if n == 0 {
            return Err(Error::invalid("instance has no slots"));
        }
        if self.p_outside_mw.len() != n || self.p_res_mw.len() != n {
            return Err(Error::invalid("load, outside, and reserve series must align"));
        }
        for t in 0..n {
            for (name, v) in [
                ("p_load", self.p_load_mw[t]),
                ("p_outside", self.p_outside_mw[t]),
                ("p_res", self.p_res_mw[t]),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("{name}[{t}] = {v} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Local generation required at slot `t` after losses and imports.
    pub fn net_demand_mw(&self, t: usize) -> f64 {
        self.p_load_mw[t] / (1.0 - self.r_loss) - self.p_outside_mw[t]
    }

    /// Same instance with extra load added per slot.
    pub fn with_added_load(&self, extra_mw: &[f64]) -> Result<DispatchInstance> {
        if extra_mw.len() != self.n_slots() {
            return Err(Error::invalid(format!(
                "extra load has {} slots, instance has {}",
                extra_mw.len(),
                self.n_slots()
            )));
        }
        let mut out = self.clone();
        for (t, &e) in extra_mw.iter().enumerate() {
            if !(e >= 0.0) {
                return Err(Error::invalid(format!("extra load at slot {t} is negative: {e}")));
            }
            out.p_load_mw[t] += e;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchSolution {
    /// `power_mw[i][t]`, unit-major.
    pub power_mw: Vec<Vec<f64>>,
    pub on: Vec<Vec<bool>>,
    pub up: Vec<Vec<bool>>,
    pub down: Vec<Vec<bool>>,
    pub objective: f64,
    pub feasible: bool,
    /// False when the deadline forced the priority-list fallback.
    pub optimal: bool,
}

impl DispatchSolution {
    pub fn total_generation_mwh(&self) -> f64 {
        self.power_mw
            .iter()
            .map(|row| row.iter().sum::<f64>() * 0.5)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SolverOpts {
    pub deadline: Option<Duration>,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            deadline: Some(Duration::from_secs(30)),
        }
    }
}

/// Merit-order economic dispatch of one slot for a committed subset.
/// Every committed unit runs at least p_min; the remainder fills cheapest
/// first. Returns per-unit output and the half-hour generation cost.
fn merit_dispatch(
    units: &[PowerUnit],
    merit_order: &[usize],
    committed: u32,
    demand_mw: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut p_min_sum = 0.0;
    let mut p_max_sum = 0.0;
    for (i, u) in units.iter().enumerate() {
        if committed & (1 << i) != 0 {
            p_min_sum += u.p_min_mw;
            p_max_sum += u.p_max_mw;
        }
    }
    if demand_mw < p_min_sum - BALANCE_TOL_MW || demand_mw > p_max_sum + BALANCE_TOL_MW {
        return None;
    }
    let mut power = vec![0.0; units.len()];
    let mut rem = (demand_mw - p_min_sum).max(0.0);
    for (i, u) in units.iter().enumerate() {
        if committed & (1 << i) != 0 {
            power[i] = u.p_min_mw;
        }
    }
    for &i in merit_order {
        if committed & (1 << i) == 0 {
            continue;
        }
        let headroom = units[i].p_max_mw - units[i].p_min_mw;
        let take = rem.min(headroom);
        power[i] += take;
        rem -= take;
        if rem <= 0.0 {
            break;
        }
    }
    if rem > BALANCE_TOL_MW {
        return None;
    }
    let cost = power
        .iter()
        .zip(units)
        .map(|(&p, u)| 0.5 * u.cost_per_mwh * p)
        .sum();
    Some((power, cost))
}

/// Candidate commitments for one slot, cheapest dispatch first.
struct SlotCandidates {
    /// (dispatch_cost, subset) sorted ascending by cost then subset.
    entries: Vec<(f64, u32)>,
}

fn slot_candidates(
    units: &[PowerUnit],
    merit_order: &[usize],
    demand_mw: f64,
    reserve_mw: f64,
) -> SlotCandidates {
    let n = units.len();
    let mut entries = Vec::new();
    for subset in 0u32..(1 << n) {
        let cap: f64 = units
            .iter()
            .enumerate()
            .filter(|(i, _)| subset & (1 << i) != 0)
            .map(|(_, u)| u.p_max_mw)
            .sum();
        if cap < reserve_mw - BALANCE_TOL_MW {
            continue;
        }
        if let Some((_, cost)) = merit_dispatch(units, merit_order, subset, demand_mw) {
            entries.push((cost, subset));
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    SlotCandidates { entries }
}

struct SearchCtx<'a> {
    inst: &'a DispatchInstance,
    candidates: Vec<SlotCandidates>,
    /// Cheapest dispatch cost per remaining slot, suffix-summed.
    future_lb: Vec<f64>,
    best_cost: f64,
    best_plan: Option<Vec<u32>>,
    /// Deepest slot any branch reached; names the blocking slot when the
    /// up/down coupling makes the whole horizon infeasible.
    max_depth: usize,
    deadline: Option<Instant>,
    expired: bool,
}

#[derive(Clone)]
struct UnitState {
    on: bool,
    /// Slots (inclusive) until which the unit is pinned by min up/down.
    locked_on_until: isize,
    locked_off_until: isize,
}

impl<'a> SearchCtx<'a> {
    fn dfs(&mut self, t: usize, states: &mut Vec<UnitState>, cost_so_far: f64, plan: &mut Vec<u32>) {
        if self.expired {
            return;
        }
        if let Some(deadline) = self.deadline {
            if Instant::now() >= deadline {
                self.expired = true;
                return;
            }
        }
        let n_slots = self.inst.n_slots();
        self.max_depth = self.max_depth.max(t);
        if t == n_slots {
            if cost_so_far < self.best_cost {
                self.best_cost = cost_so_far;
                self.best_plan = Some(plan.clone());
            }
            return;
        }
        let future = self.future_lb[t + 1];
        let t_i = t as isize;
        let slot_entries: Vec<(f64, u32)> = self.candidates[t].entries.clone();
        for (dispatch_cost, subset) in slot_entries {
            // Candidates are sorted by dispatch cost; once even a free
            // transition cannot beat the incumbent, none of the rest can.
            if cost_so_far + dispatch_cost + future >= self.best_cost {
                break;
            }
            // Min up/down pins.
            let mut legal = true;
            for (i, st) in states.iter().enumerate() {
                let want_on = subset & (1 << i) != 0;
                if st.locked_on_until >= t_i && !want_on {
                    legal = false;
                    break;
                }
                if st.locked_off_until >= t_i && want_on {
                    legal = false;
                    break;
                }
            }
            if !legal {
                continue;
            }
            let mut transition_cost = 0.0;
            for (i, st) in states.iter().enumerate() {
                let want_on = subset & (1 << i) != 0;
                if want_on && !st.on {
                    transition_cost += self.inst.units[i].startup_cost;
                } else if !want_on && st.on {
                    transition_cost += self.inst.units[i].shutdown_cost;
                }
            }
            let node_cost = cost_so_far + dispatch_cost + transition_cost;
            if node_cost + future >= self.best_cost {
                continue;
            }
            let saved: Vec<UnitState> = states.clone();
            for (i, st) in states.iter_mut().enumerate() {
                let want_on = subset & (1 << i) != 0;
                if want_on && !st.on {
                    st.locked_on_until = t_i + self.inst.units[i].min_up_slots as isize - 1;
                } else if !want_on && st.on {
                    st.locked_off_until = t_i + self.inst.units[i].min_down_slots as isize - 1;
                }
                st.on = want_on;
            }
            plan.push(subset);
            self.dfs(t + 1, states, node_cost, plan);
            plan.pop();
            *states = saved;
            if self.expired {
                return;
            }
        }
    }
}

fn solution_from_plan(inst: &DispatchInstance, plan: &[u32], optimal: bool) -> DispatchSolution {
    let n = inst.units.len();
    let n_slots = inst.n_slots();
    let merit_order = merit_order(&inst.units);
    let mut power_mw = vec![vec![0.0; n_slots]; n];
    let mut on = vec![vec![false; n_slots]; n];
    let mut up = vec![vec![false; n_slots]; n];
    let mut down = vec![vec![false; n_slots]; n];
    let mut objective = 0.0;
    let mut prev_on = vec![false; n];
    for (t, &subset) in plan.iter().enumerate() {
        let demand = inst.net_demand_mw(t);
        let (power, cost) = merit_dispatch(&inst.units, &merit_order, subset, demand)
            .expect("plan slots are feasible by construction");
        objective += cost;
        for i in 0..n {
            let is_on = subset & (1 << i) != 0;
            power_mw[i][t] = power[i];
            on[i][t] = is_on;
            up[i][t] = is_on && !prev_on[i];
            down[i][t] = !is_on && prev_on[i];
            if up[i][t] {
                objective += inst.units[i].startup_cost;
            }
            if down[i][t] {
                objective += inst.units[i].shutdown_cost;
            }
            prev_on[i] = is_on;
        }
    }
    DispatchSolution {
        power_mw,
        on,
        up,
        down,
        objective,
        feasible: true,
        optimal,
    }
}

fn merit_order(units: &[PowerUnit]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        units[a]
            .cost_per_mwh
            .partial_cmp(&units[b].cost_per_mwh)
            .unwrap()
            .then(units[a].id.cmp(&units[b].id))
    });
    order
}

/// Priority-list fallback: commit units in merit order until demand and
/// reserve are covered, then widen short on/off runs until the min up/down
/// constraints hold.
fn priority_list_plan(inst: &DispatchInstance, candidates: &[SlotCandidates]) -> Result<Vec<u32>> {
    let n_slots = inst.n_slots();
    let n = inst.units.len();
    let order = merit_order(&inst.units);
    let mut plan: Vec<u32> = Vec::with_capacity(n_slots);
    for t in 0..n_slots {
        let demand = inst.net_demand_mw(t);
        let mut subset = 0u32;
        let mut cap = 0.0;
        for &i in &order {
            let enough = cap >= inst.p_res_mw[t] - BALANCE_TOL_MW
                && merit_dispatch(&inst.units, &order, subset, demand).is_some();
            if enough {
                break;
            }
            subset |= 1 << i;
            cap += inst.units[i].p_max_mw;
        }
        plan.push(subset);
    }
    // Repair: extend any on-run or off-run shorter than the unit minimum by
    // keeping the previous state until the run is long enough, then fall back
    // to the slot's cheapest legal candidate if the patched subset no longer
    // dispatches.
    for _ in 0..4 {
        let mut changed = false;
        for i in 0..n {
            let bit = 1u32 << i;
            let mut t = 0usize;
            while t < n_slots {
                let state = plan[t] & bit != 0;
                let mut run = 1usize;
                while t + run < n_slots && (plan[t + run] & bit != 0) == state {
                    run += 1;
                }
                let need = if state {
                    inst.units[i].min_up_slots
                } else {
                    inst.units[i].min_down_slots
                };
                // Runs that reach the horizon end are legal (truncated window).
                if run < need && t + run < n_slots {
                    for tau in t + run..(t + need).min(n_slots) {
                        if state {
                            plan[tau] |= bit;
                        } else {
                            plan[tau] &= !bit;
                        }
                    }
                    changed = true;
                }
                t += run;
            }
        }
        if !changed {
            break;
        }
    }
    // Re-dispatchability check; swap in the cheapest candidate consistent
    // with the pinned bits when a patched subset cannot serve the demand.
    for t in 0..n_slots {
        if merit_dispatch(&inst.units, &order, plan[t], inst.net_demand_mw(t)).is_none() {
            let fixed = plan[t];
            let found = candidates[t]
                .entries
                .iter()
                .find(|(_, s)| s & fixed == fixed)
                .map(|&(_, s)| s);
            match found {
                Some(s) => plan[t] = s,
                None => {
                    return Err(Error::DispatchInfeasible {
                        slot: t,
                        reason: "priority-list repair failed".into(),
                    })
                }
            }
        }
    }
    Ok(plan)
}

/// Exact solver: branch and bound over per-slot commitments with merit-order
/// dispatch. Falls back to the priority list when the deadline expires
/// without an incumbent.
pub fn solve_unit_commitment(inst: &DispatchInstance, opts: &SolverOpts) -> Result<DispatchSolution> {
    inst.validate()?;
    let n = inst.units.len();
    if n > 16 {
        return Err(Error::invalid(format!("exact solver handles at most 16 units, got {n}")));
    }
    let n_slots = inst.n_slots();
    let order = merit_order(&inst.units);

    let mut candidates = Vec::with_capacity(n_slots);
    for t in 0..n_slots {
        let d = inst.net_demand_mw(t);
        if d < -BALANCE_TOL_MW {
            return Err(Error::DispatchInfeasible {
                slot: t,
                reason: format!("imports exceed losses-adjusted load by {} MW", -d),
            });
        }
        let d = d.max(0.0);
        let cands = slot_candidates(&inst.units, &order, d, inst.p_res_mw[t]);
        if cands.entries.is_empty() {
            let cap: f64 = inst.units.iter().map(|u| u.p_max_mw).sum();
            return Err(Error::DispatchInfeasible {
                slot: t,
                reason: format!(
                    "no commitment serves demand {d} MW under reserve {} MW (fleet capacity {cap} MW)",
                    inst.p_res_mw[t]
                ),
            });
        }
        candidates.push(cands);
    }
    let mut future_lb = vec![0.0; n_slots + 1];
    for t in (0..n_slots).rev() {
        future_lb[t] = future_lb[t + 1] + candidates[t].entries[0].0;
    }

    let mut ctx = SearchCtx {
        inst,
        candidates,
        future_lb,
        best_cost: f64::INFINITY,
        best_plan: None,
        max_depth: 0,
        deadline: opts.deadline.map(|d| Instant::now() + d),
        expired: false,
    };
    let mut states = vec![
        UnitState {
            on: false,
            locked_on_until: -1,
            locked_off_until: -1,
        };
        n
    ];
    let mut plan = Vec::with_capacity(n_slots);
    ctx.dfs(0, &mut states, 0.0, &mut plan);

    let expired = ctx.expired;
    match ctx.best_plan {
        Some(plan) => Ok(solution_from_plan(inst, &plan, !expired)),
        // The search exhausted the space: the minimum up/down coupling makes
        // the horizon infeasible even though every slot is coverable alone.
        None if !expired => Err(Error::DispatchInfeasible {
            slot: ctx.max_depth,
            reason: "no commitment sequence satisfies the minimum up/down constraints".into(),
        }),
        None => {
            let plan = priority_list_plan(inst, &ctx.candidates)?;
            let sol = solution_from_plan(inst, &plan, false);
            let violations = check_solution(inst, &sol, BALANCE_TOL_MW);
            match violations.first() {
                None => Ok(sol),
                Some(v) => Err(Error::DispatchInfeasible {
                    slot: v.slot.unwrap_or(0),
                    reason: format!("deadline expired and the fallback plan fails: {v}"),
                }),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub unit: Option<u32>,
    pub slot: Option<usize>,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(u) = self.unit {
            write!(f, " unit {u}")?;
        }
        if let Some(t) = self.slot {
            write!(f, " slot {t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Independent constraint checker. Direct translation of the model
/// constraints, sharing no code with the solver.
pub fn check_solution(inst: &DispatchInstance, sol: &DispatchSolution, tol_mw: f64) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = inst.units.len();
    let n_slots = inst.n_slots();
    let shape_ok = sol.power_mw.len() == n
        && sol.on.len() == n
        && sol.up.len() == n
        && sol.down.len() == n
        && sol
            .power_mw
            .iter()
            .chain(sol.power_mw.iter())
            .all(|row| row.len() == n_slots);
    if !shape_ok {
        violations.push(Violation {
            constraint: "shape",
            unit: None,
            slot: None,
            detail: "solution arrays do not match the instance".into(),
        });
        return violations;
    }

    for t in 0..n_slots {
        // Balance with losses.
        let gen: f64 = (0..n).map(|i| sol.power_mw[i][t]).sum();
        let rhs = inst.p_load_mw[t] / (1.0 - inst.r_loss);
        if (gen + inst.p_outside_mw[t] - rhs).abs() > tol_mw {
            violations.push(Violation {
                constraint: "balance",
                unit: None,
                slot: Some(t),
                detail: format!("generation {gen} + imports {} != {rhs}", inst.p_outside_mw[t]),
            });
        }
        // Reserve.
        let committed_cap: f64 = (0..n)
            .filter(|&i| sol.on[i][t])
            .map(|i| inst.units[i].p_max_mw)
            .sum();
        if committed_cap < inst.p_res_mw[t] - tol_mw {
            violations.push(Violation {
                constraint: "reserve",
                unit: None,
                slot: Some(t),
                detail: format!("committed capacity {committed_cap} < reserve {}", inst.p_res_mw[t]),
            });
        }
        for i in 0..n {
            let u = &inst.units[i];
            let p = sol.power_mw[i][t];
            // Output bounds tied to commitment.
            let (lo, hi) = if sol.on[i][t] { (u.p_min_mw, u.p_max_mw) } else { (0.0, 0.0) };
            if p < lo - tol_mw || p > hi + tol_mw {
                violations.push(Violation {
                    constraint: "bounds",
                    unit: Some(u.id),
                    slot: Some(t),
                    detail: format!("power {p} outside [{lo}, {hi}]"),
                });
            }
            if p < -tol_mw {
                violations.push(Violation {
                    constraint: "nonnegative",
                    unit: Some(u.id),
                    slot: Some(t),
                    detail: format!("power {p} < 0"),
                });
            }
            // Startup/shutdown exclusivity.
            if sol.up[i][t] && sol.down[i][t] {
                violations.push(Violation {
                    constraint: "up-down-exclusive",
                    unit: Some(u.id),
                    slot: Some(t),
                    detail: "startup and shutdown in the same slot".into(),
                });
            }
            // State logic against the previous slot (initial state: off).
            let prev = if t == 0 { false } else { sol.on[i][t - 1] };
            let delta = (sol.on[i][t] as i8) - (prev as i8);
            let updown = (sol.up[i][t] as i8) - (sol.down[i][t] as i8);
            if delta != updown {
                violations.push(Violation {
                    constraint: "state-logic",
                    unit: Some(u.id),
                    slot: Some(t),
                    detail: format!("up - down = {updown} but on(t) - on(t-1) = {delta}"),
                });
            }
            // Min up: a startup pins the unit on for the (truncated) window.
            if sol.up[i][t] {
                let end = (t + u.min_up_slots).min(n_slots);
                let held = (t..end).filter(|&tau| sol.on[i][tau]).count();
                if held < end - t {
                    violations.push(Violation {
                        constraint: "min-up",
                        unit: Some(u.id),
                        slot: Some(t),
                        detail: format!("on for {held} of {} required slots", end - t),
                    });
                }
            }
            // Min down, symmetric.
            if sol.down[i][t] {
                let end = (t + u.min_down_slots).min(n_slots);
                let held = (t..end).filter(|&tau| !sol.on[i][tau]).count();
                if held < end - t {
                    violations.push(Violation {
                        constraint: "min-down",
                        unit: Some(u.id),
                        slot: Some(t),
                        detail: format!("off for {held} of {} required slots", end - t),
                    });
                }
            }
        }
    }
    violations
}

/// Total thermal coal burned by a solution, in tonnes.
pub fn coal_consumption_t(inst: &DispatchInstance, sol: &DispatchSolution) -> f64 {
    inst.units
        .iter()
        .zip(&sol.power_mw)
        .map(|(u, row)| row.iter().map(|&p| 0.5 * u.coal_rate_t_per_mwh * p).sum::<f64>())
        .sum()
}

/// Per-slot coal burned, in tonnes.
pub fn coal_per_slot_t(inst: &DispatchInstance, sol: &DispatchSolution) -> Vec<f64> {
    let n_slots = inst.n_slots();
    (0..n_slots)
        .map(|t| {
            inst.units
                .iter()
                .zip(&sol.power_mw)
                .map(|(u, row)| 0.5 * u.coal_rate_t_per_mwh * row[t])
                .sum()
        })
        .collect()
}

pub const OXIDIZATION_RATE: f64 = 0.99;
pub const HEATING_VALUE_GJ_PER_T: f64 = 20.95;
pub const CARBON_CONTENT_TC_PER_TJ: f64 = 26.59;
pub const CO2_PER_CARBON: f64 = 3.67;

/// Emission factor of thermal coal in tCO2 per tonne:
/// oxidization * heating value (TJ/t) * carbon content * CO2/C mass ratio.
pub fn emission_factor(o: f64, h_gj_per_t: f64, alpha_tc_per_tj: f64) -> Result<f64> {
    if !(o >= 0.0 && h_gj_per_t >= 0.0 && alpha_tc_per_tj >= 0.0) {
        return Err(Error::invalid("emission factor inputs must be >= 0"));
    }
    Ok(o * (h_gj_per_t / 1000.0) * alpha_tc_per_tj * CO2_PER_CARBON)
}

/// The shipped default: China's thermal coal, about 2.02 tCO2/t.
pub fn default_emission_factor() -> f64 {
    emission_factor(OXIDIZATION_RATE, HEATING_VALUE_GJ_PER_T, CARBON_CONTENT_TC_PER_TJ)
        .expect("constants are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarbonAttribution {
    pub coal_t: f64,
    pub co2_t: f64,
    pub coal_per_slot_t: Vec<f64>,
    pub with_bs: DispatchSolution,
    pub without_bs: DispatchSolution,
}

/// Carbon attributed to the mobile network: dispatch with and without the
/// base-station load, difference the coal, convert with the emission factor.
pub fn attribute_mobile_carbon(
    inst_base: &DispatchInstance,
    p_bs_mw: &[f64],
    opts: &SolverOpts,
) -> Result<CarbonAttribution> {
    let inst_with = inst_base.with_added_load(p_bs_mw)?;
    let with_bs = solve_unit_commitment(&inst_with, opts)?;
    let without_bs = solve_unit_commitment(inst_base, opts)?;
    let coal_with = coal_per_slot_t(&inst_with, &with_bs);
    let coal_without = coal_per_slot_t(inst_base, &without_bs);
    let coal_per_slot_t: Vec<f64> = coal_with
        .iter()
        .zip(&coal_without)
        .map(|(w, wo)| w - wo)
        .collect();
    let coal_t: f64 = coal_per_slot_t.iter().sum();
    Ok(CarbonAttribution {
        coal_t,
        co2_t: default_emission_factor() * coal_t,
        coal_per_slot_t,
        with_bs,
        without_bs,
    })
}

/// Net base-station load after on-site PV: `max(0, demand - pv)` per slot.
pub fn net_bs_load_after_pv(p_hat_mw: &[f64], pv_mw: &[f64]) -> Result<Vec<f64>> {
    if p_hat_mw.len() != pv_mw.len() {
        return Err(Error::invalid("load and PV series must have equal length"));
    }
    p_hat_mw
        .iter()
        .zip(pv_mw)
        .enumerate()
        .map(|(t, (&p, &pv))| {
            if !(p >= 0.0) || !(pv >= 0.0) {
                return Err(Error::invalid(format!("slot {t}: negative load or PV")));
            }
            Ok((p - pv).max(0.0))
        })
        .collect()
}

/// Average grid emission factor implied by a solution, tCO2/MWh.
pub fn grid_emission_factor(inst: &DispatchInstance, sol: &DispatchSolution) -> Result<f64> {
    let energy = sol.total_generation_mwh();
    if !(energy > 0.0) {
        return Err(Error::invalid("solution generates no energy"));
    }
    Ok(default_emission_factor() * coal_consumption_t(inst, sol) / energy)
}

/// Three local plants with a double-peak residential and industrial load
/// curve over 48 half-hours.
pub fn default_city_instance() -> DispatchInstance {
    let units = vec![
        PowerUnit::new(0, 60.0, 300.0, 320.0, 800.0, 400.0, 4, 4).unwrap(),
        PowerUnit::new(1, 50.0, 250.0, 340.0, 600.0, 300.0, 4, 2).unwrap(),
        PowerUnit::new(2, 80.0, 400.0, 300.0, 1200.0, 600.0, 6, 4).unwrap(),
    ];
    let bump = |t: f64, mu: f64, sigma: f64| (-((t - mu) * (t - mu)) / (2.0 * sigma * sigma)).exp();
    let r_loss = 0.05;
    let p_load_mw: Vec<f64> = (0..48)
        .map(|t| {
            let t = t as f64;
            340.0 + 150.0 * bump(t, 21.0, 5.0) + 190.0 * bump(t, 39.0, 5.5)
        })
        .collect();
    let p_outside_mw = vec![0.0; 48];
    let p_res_mw: Vec<f64> = p_load_mw
        .iter()
        .map(|&l| 1.05 * (l / (1.0 - r_loss)))
        .collect();
    DispatchInstance {
        units,
        p_load_mw,
        p_outside_mw,
        p_res_mw,
        r_loss,
    }
}

// ---------------------------------------------------------------------------
// File formats: dispatch.csv (units), loads.csv (series), solution CSV.
// ---------------------------------------------------------------------------

pub fn write_units_csv(units: &[PowerUnit], path: &Path) -> Result<()> {
    let rows: Vec<String> = units
        .iter()
        .map(|u| {
            format!(
                "{},{},{},{},{},{},{},{}",
                u.id,
                u.p_min_mw,
                u.p_max_mw,
                u.cost_per_mwh,
                u.startup_cost,
                u.shutdown_cost,
                u.min_up_slots,
                u.min_down_slots
            )
        })
        .collect();
    ioutil::write_csv(
        path,
        "id,p_min_mw,p_max_mw,c_power,c_up,c_down,t_up_slots,t_down_slots",
        &rows,
    )
}

pub fn read_units_csv(path: &Path) -> Result<Vec<PowerUnit>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut units = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        let line = ioutil::record_line(&rec);
        let unit = PowerUnit::new(
            ioutil::parse_field(&rec, 0, path, "id")?,
            ioutil::parse_field(&rec, 1, path, "p_min_mw")?,
            ioutil::parse_field(&rec, 2, path, "p_max_mw")?,
            ioutil::parse_field(&rec, 3, path, "c_power")?,
            ioutil::parse_field(&rec, 4, path, "c_up")?,
            ioutil::parse_field(&rec, 5, path, "c_down")?,
            ioutil::parse_field(&rec, 6, path, "t_up_slots")?,
            ioutil::parse_field(&rec, 7, path, "t_down_slots")?,
        )
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
        units.push(unit);
    }
    units.sort_by_key(|u| u.id);
    Ok(units)
}

pub fn write_loads_csv(inst: &DispatchInstance, path: &Path) -> Result<()> {
    let rows: Vec<String> = (0..inst.n_slots())
        .map(|t| {
            format!(
                "{},{},{},{}",
                t, inst.p_load_mw[t], inst.p_outside_mw[t], inst.p_res_mw[t]
            )
        })
        .collect();
    ioutil::write_csv(path, "slot,p_orig_mw,p_outside_mw,p_res_mw", &rows)
}

pub fn read_instance(dir: &Path, r_loss: f64) -> Result<DispatchInstance> {
    let units = read_units_csv(&dir.join("dispatch.csv"))?;
    let loads_path = dir.join("loads.csv");
    let mut reader = ioutil::open_csv(&loads_path)?;
    let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, &loads_path)? {
        rows.push((
            ioutil::parse_field(&rec, 0, &loads_path, "slot")?,
            ioutil::parse_field(&rec, 1, &loads_path, "p_orig_mw")?,
            ioutil::parse_field(&rec, 2, &loads_path, "p_outside_mw")?,
            ioutil::parse_field(&rec, 3, &loads_path, "p_res_mw")?,
        ));
    }
    rows.sort_by_key(|&(t, ..)| t);
    let inst = DispatchInstance {
        units,
        p_load_mw: rows.iter().map(|r| r.1).collect(),
        p_outside_mw: rows.iter().map(|r| r.2).collect(),
        p_res_mw: rows.iter().map(|r| r.3).collect(),
        r_loss,
    };
    inst.validate()?;
    Ok(inst)
}

pub fn write_solution_csv(inst: &DispatchInstance, sol: &DispatchSolution, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (i, u) in inst.units.iter().enumerate() {
        for t in 0..inst.n_slots() {
            rows.push(format!(
                "{},{},{},{},{},{}",
                u.id,
                t,
                sol.on[i][t] as u8,
                sol.power_mw[i][t],
                sol.up[i][t] as u8,
                sol.down[i][t] as u8
            ));
        }
    }
    ioutil::write_csv(path, "unit_id,slot,on,power_mw,up,down", &rows)
}

pub fn read_solution_csv(inst: &DispatchInstance, path: &Path) -> Result<DispatchSolution> {
    let n = inst.units.len();
    let n_slots = inst.n_slots();
    let mut sol = DispatchSolution {
        power_mw: vec![vec![0.0; n_slots]; n],
        on: vec![vec![false; n_slots]; n],
        up: vec![vec![false; n_slots]; n],
        down: vec![vec![false; n_slots]; n],
        objective: 0.0,
        feasible: true,
        optimal: false,
    };
    let mut reader = ioutil::open_csv(path)?;
    for rec in ioutil::csv_records(&mut reader, path)? {
        let line = ioutil::record_line(&rec);
        let unit_id: u32 = ioutil::parse_field(&rec, 0, path, "unit_id")?;
        let t: usize = ioutil::parse_field(&rec, 1, path, "slot")?;
        let i = inst
            .units
            .iter()
            .position(|u| u.id == unit_id)
            .ok_or_else(|| Error::parse(path, line, format!("unknown unit {unit_id}")))?;
        if t >= n_slots {
            return Err(Error::parse(path, line, format!("slot {t} out of range")));
        }
        let on: u8 = ioutil::parse_field(&rec, 2, path, "on")?;
        sol.on[i][t] = on != 0;
        sol.power_mw[i][t] = ioutil::parse_field(&rec, 3, path, "power_mw")?;
        let up: u8 = ioutil::parse_field(&rec, 4, path, "up")?;
        sol.up[i][t] = up != 0;
        let down: u8 = ioutil::parse_field(&rec, 5, path, "down")?;
        sol.down[i][t] = down != 0;
    }
    Ok(sol)
}

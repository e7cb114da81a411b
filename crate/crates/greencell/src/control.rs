//! Sleep-mode controllers and the shared machinery they sit on: the
//! schedule matrix, the grid feasibility checker, intra-grid traffic
//! redistribution, and schedule evaluation.
//!
//! A schedule is feasible when, in every grid and slot, the awake cells'
//! combined capacity covers the grid's offered traffic. Awake cells then
//! carry the grid total proportionally to their capacities.

use std::ops::Range;
use std::path::Path;

use crate::energy::{self, rru_power_w};
use crate::error::{Error, Result};
use crate::ioutil;
use crate::metrics;
use crate::scenario::{CellId, LoadMatrix, Scenario};

/// Per-cell, per-slot sleep flags, cell-major in scenario cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct SleepSchedule {
    n_cells: usize,
    n_slots: usize,
    asleep: Vec<bool>,
}

impl SleepSchedule {
    pub fn all_awake(n_cells: usize, n_slots: usize) -> SleepSchedule {
        SleepSchedule {
            n_cells,
            n_slots,
            asleep: vec![false; n_cells * n_slots],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn is_asleep(&self, cell: usize, slot: usize) -> bool {
        self.asleep[cell * self.n_slots + slot]
    }

    pub fn set_asleep(&mut self, cell: usize, slot: usize, asleep: bool) {
        self.asleep[cell * self.n_slots + slot] = asleep;
    }

    pub fn asleep_count_at(&self, slot: usize) -> usize {
        (0..self.n_cells).filter(|&c| self.is_asleep(c, slot)).count()
    }

    pub fn total_asleep(&self) -> usize {
        self.asleep.iter().filter(|&&a| a).count()
    }

    pub fn write_csv(&self, s: &Scenario, path: &Path) -> Result<()> {
        let mut rows = Vec::with_capacity(self.n_cells * self.n_slots);
        for (idx, cell) in s.cells.iter().enumerate() {
            for t in 0..self.n_slots {
                rows.push(format!("{},{},{}", cell.id, t, self.is_asleep(idx, t) as u8));
            }
        }
        ioutil::write_csv(path, "cell_id,slot,asleep", &rows)
    }

    pub fn read_csv(s: &Scenario, path: &Path) -> Result<SleepSchedule> {
        let mut sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
        let mut reader = ioutil::open_csv(path)?;
        let mut seen = 0usize;
        for rec in ioutil::csv_records(&mut reader, path)? {
            let line = ioutil::record_line(&rec);
            let cell_id = CellId(ioutil::parse_field(&rec, 0, path, "cell_id")?);
            let slot: usize = ioutil::parse_field(&rec, 1, path, "slot")?;
            let flag: u8 = ioutil::parse_field(&rec, 2, path, "asleep")?;
            let idx = s
                .cell_index(cell_id)
                .map_err(|_| Error::parse(path, line, format!("unknown cell {cell_id}")))?;
            if slot >= s.n_slots() {
                return Err(Error::parse(path, line, format!("slot {slot} out of range")));
            }
            sched.set_asleep(idx, slot, flag != 0);
            seen += 1;
        }
        if seen != s.cells.len() * s.n_slots() {
            return Err(Error::parse(
                path,
                0,
                format!("{} rows, expected {}", seen, s.cells.len() * s.n_slots()),
            ));
        }
        Ok(sched)
    }
}

/// Relative slack used when comparing awake capacity against traffic.
const FEASIBILITY_SLACK: f64 = 1e-9;

fn covers(awake_cap: f64, traffic: f64) -> bool {
    awake_cap >= traffic * (1.0 - FEASIBILITY_SLACK)
}

/// Independent service-feasibility check: in every grid and slot the awake
/// capacity must cover the offered traffic.
pub fn check_schedule(s: &Scenario, traffic: &LoadMatrix, sched: &SleepSchedule) -> Result<()> {
    if sched.n_cells() != s.cells.len() || sched.n_slots() != s.n_slots() {
        return Err(Error::invalid("schedule shape does not match scenario"));
    }
    for t in 0..s.n_slots() {
        for grid in &s.grids {
            let mut total = 0.0;
            let mut awake_cap = 0.0;
            for &cid in &grid.cell_ids {
                let idx = s.cell_index(cid)?;
                total += traffic.get(idx, t);
                if !sched.is_asleep(idx, t) {
                    awake_cap += s.cells[idx].capacity_gb;
                }
            }
            if !covers(awake_cap, total) {
                return Err(Error::InfeasibleSchedule {
                    grid: grid.id.0,
                    slot: t,
                    awake_cap_gb: awake_cap,
                    traffic_gb: total,
                });
            }
        }
    }
    Ok(())
}

/// Redistributes one grid-slot: awake cell j carries `total * cap_j / sum(awake caps)`,
/// sleeping cells carry zero.
pub fn redistribute_grid(caps: &[f64], loads: &[f64], asleep: &[bool]) -> Result<Vec<f64>> {
    if caps.len() != loads.len() || caps.len() != asleep.len() {
        return Err(Error::invalid("caps, loads, and flags must have equal length"));
    }
    let total: f64 = loads.iter().sum();
    let awake_cap: f64 = caps
        .iter()
        .zip(asleep)
        .filter(|(_, &a)| !a)
        .map(|(&c, _)| c)
        .sum();
    if total > 0.0 && !covers(awake_cap, total) {
        return Err(Error::InfeasibleSchedule {
            grid: 0,
            slot: 0,
            awake_cap_gb: awake_cap,
            traffic_gb: total,
        });
    }
    Ok(caps
        .iter()
        .zip(asleep)
        .map(|(&cap, &a)| {
            if a || total == 0.0 {
                0.0
            } else {
                total * cap / awake_cap
            }
        })
        .collect())
}

/// Redistributes the whole scenario's traffic under a schedule.
pub fn redistribute(s: &Scenario, traffic: &LoadMatrix, sched: &SleepSchedule) -> Result<LoadMatrix> {
    let mut out = LoadMatrix::zeros(s.cells.len(), s.n_slots());
    for t in 0..s.n_slots() {
        for grid in &s.grids {
            let idxs: Vec<usize> = grid
                .cell_ids
                .iter()
                .map(|&cid| s.cell_index(cid))
                .collect::<Result<_>>()?;
            let caps: Vec<f64> = idxs.iter().map(|&i| s.cells[i].capacity_gb).collect();
            let loads: Vec<f64> = idxs.iter().map(|&i| traffic.get(i, t)).collect();
            let flags: Vec<bool> = idxs.iter().map(|&i| sched.is_asleep(i, t)).collect();
            let shared = redistribute_grid(&caps, &loads, &flags).map_err(|e| match e {
                Error::InfeasibleSchedule { awake_cap_gb, traffic_gb, .. } => {
                    Error::InfeasibleSchedule {
                        grid: grid.id.0,
                        slot: t,
                        awake_cap_gb,
                        traffic_gb,
                    }
                }
                other => other,
            })?;
            for (&i, gb) in idxs.iter().zip(shared) {
                out.set(i, t, gb);
            }
        }
    }
    Ok(out)
}

/// Threshold controller: a cell sleeps when its own normalized load is below
/// theta and the grid stays feasible. Candidates are taken smallest capacity
/// first so the awake set keeps the largest cells; with theta = 1 this sleeps
/// the maximum number of cells a grid can spare.
pub fn threshold_controller(
    s: &Scenario,
    traffic: &LoadMatrix,
    theta: f64,
) -> Result<SleepSchedule> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta must be in [0, 1], got {theta}")));
    }
    let mut sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
    for t in 0..s.n_slots() {
        for grid in &s.grids {
            let idxs: Vec<usize> = grid
                .cell_ids
                .iter()
                .map(|&cid| s.cell_index(cid))
                .collect::<Result<_>>()?;
            let total: f64 = idxs.iter().map(|&i| traffic.get(i, t)).sum();
            let mut awake_cap: f64 = idxs.iter().map(|&i| s.cells[i].capacity_gb).sum();
            let mut candidates: Vec<usize> = idxs
                .iter()
                .copied()
                .filter(|&i| traffic.get(i, t) < theta * s.cells[i].capacity_gb)
                .collect();
            candidates.sort_by(|&a, &b| {
                s.cells[a]
                    .capacity_gb
                    .partial_cmp(&s.cells[b].capacity_gb)
                    .unwrap()
                    .then(s.cells[a].id.cmp(&s.cells[b].id))
            });
            for i in candidates {
                let cap = s.cells[i].capacity_gb;
                if covers(awake_cap - cap, total) {
                    sched.set_asleep(i, t, true);
                    awake_cap -= cap;
                }
            }
        }
    }
    Ok(sched)
}

#[derive(Debug, Clone, Copy)]
pub struct GreedyOpts {
    /// Cells kept awake per grid and slot regardless of traffic.
    pub min_awake: usize,
}

impl Default for GreedyOpts {
    fn default() -> Self {
        GreedyOpts { min_awake: 0 }
    }
}

/// Greedy controller: per grid and slot, cells are ranked by saved RRU power
/// per unit of capacity at their current load and put to sleep one at a time
/// while the remaining awake capacity still covers the grid traffic.
pub fn greedy_controller(
    s: &Scenario,
    traffic: &LoadMatrix,
    opts: GreedyOpts,
) -> Result<SleepSchedule> {
    let mut sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
    for t in 0..s.n_slots() {
        for grid in &s.grids {
            let idxs: Vec<usize> = grid
                .cell_ids
                .iter()
                .map(|&cid| s.cell_index(cid))
                .collect::<Result<_>>()?;
            let total: f64 = idxs.iter().map(|&i| traffic.get(i, t)).sum();
            let mut awake_cap: f64 = idxs.iter().map(|&i| s.cells[i].capacity_gb).sum();
            let mut awake_n = idxs.len();

            let mut ranked: Vec<(f64, usize)> = idxs
                .iter()
                .map(|&i| {
                    let cell = &s.cells[i];
                    let coeffs = s.coeffs.coeffs(cell.kind);
                    let prb = energy::prb_ratio_from_load(traffic.get(i, t), cell.capacity_gb)?;
                    let awake = rru_power_w(coeffs, prb, false)?;
                    Ok(((awake - coeffs.sleep_rru_w) / cell.capacity_gb, i))
                })
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(s.cells[a.1].id.cmp(&s.cells[b.1].id))
            });

            let floor = opts.min_awake.min(idxs.len());
            for (_, i) in ranked {
                if awake_n <= floor {
                    break;
                }
                let cap = s.cells[i].capacity_gb;
                if covers(awake_cap - cap, total) {
                    sched.set_asleep(i, t, true);
                    awake_cap -= cap;
                    awake_n -= 1;
                }
            }
        }
    }
    Ok(sched)
}

/// Deterministic metrics bundle for a feasible schedule.
#[derive(Debug, Clone)]
pub struct ScheduleEval {
    pub energy_mwh: Vec<f64>,
    pub e_max_mwh: Vec<f64>,
    pub load_gb: Vec<f64>,
    pub m: Vec<f64>,
    pub redistributed: LoadMatrix,
}

impl ScheduleEval {
    pub fn total_energy_mwh(&self) -> f64 {
        self.energy_mwh.iter().sum()
    }

    pub fn mean_m(&self) -> f64 {
        if self.m.is_empty() {
            0.0
        } else {
            self.m.iter().sum::<f64>() / self.m.len() as f64
        }
    }

    /// Network power dispatched per slot, in MW.
    pub fn bs_power_mw(&self) -> Vec<f64> {
        self.energy_mwh.iter().map(|e| e / energy::SLOT_HOURS).collect()
    }
}

/// Checks feasibility, redistributes, and evaluates energy and misalignment
/// for every slot of the scenario.
pub fn evaluate_schedule(
    s: &Scenario,
    traffic: &LoadMatrix,
    sched: &SleepSchedule,
) -> Result<ScheduleEval> {
    check_schedule(s, traffic, sched)?;
    let redistributed = redistribute(s, traffic, sched)?;
    let series = energy::network_energy(s, &redistributed, sched, 0..s.n_slots())?;
    let capacity = s.total_capacity_gb();
    let mut load_gb = Vec::with_capacity(s.n_slots());
    let mut m = Vec::with_capacity(s.n_slots());
    for t in 0..s.n_slots() {
        let load = traffic.slot_total(t);
        load_gb.push(load);
        m.push(metrics::misalignment(
            series.energy_mwh[t],
            series.e_max_mwh[t],
            load,
            capacity,
        )?);
    }
    Ok(ScheduleEval {
        energy_mwh: series.energy_mwh,
        e_max_mwh: series.e_max_mwh,
        load_gb,
        m,
        redistributed,
    })
}

/// Mean misalignment over a slot range for the sub-network of stations
/// selected by `keep`, with all cells awake and offered traffic.
pub fn mean_misalignment_for(
    s: &Scenario,
    traffic: &LoadMatrix,
    slots: Range<usize>,
    keep: impl Fn(&crate::scenario::BaseStationSpec) -> bool,
) -> Result<f64> {
    let sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
    let mut ms = Vec::new();
    let selected: Vec<usize> = s
        .base_stations
        .iter()
        .enumerate()
        .filter(|(_, bs)| keep(bs))
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(Error::invalid("no base stations selected"));
    }
    let cell_idxs: Vec<usize> = selected
        .iter()
        .flat_map(|&bi| s.base_stations[bi].cell_ids.iter())
        .map(|&cid| s.cell_index(cid))
        .collect::<Result<_>>()?;
    let capacity: f64 = cell_idxs.iter().map(|&i| s.cells[i].capacity_gb).sum();
    for t in slots {
        let powers = energy::slot_bs_powers(s, traffic, &sched, t)?;
        let temp = s.weather.temp_c(t)?;
        let mut e = 0.0;
        let mut e_max = 0.0;
        for &bi in &selected {
            e += energy::watts_to_mwh_per_slot(powers[bi].p_total_w);
            let ptx = energy::bs_p_tx_max_w(s, s.base_stations[bi].kind);
            e_max += energy::watts_to_mwh_per_slot(ptx + s.cooling.cooling_power_w(ptx, temp));
        }
        let load: f64 = cell_idxs.iter().map(|&i| traffic.get(i, t)).sum();
        ms.push(metrics::misalignment(e, e_max, load, capacity)?);
    }
    Ok(ms.iter().sum::<f64>() / ms.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn tiny_scenario() -> Scenario {
        generate_scenario(&ScenarioConfig::new(3, 2, 1, 1)).unwrap()
    }

    #[test]
    fn redistribute_symmetric_split() {
        let caps = [10.0, 10.0, 10.0];
        let loads = [30.0, 0.0, 0.0];
        let flags = [false, false, false];
        let out = redistribute_grid(&caps, &loads, &flags).unwrap();
        for gb in out {
            assert_abs_diff_eq!(gb, 10.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn redistribute_to_single_awake_cell() {
        let out = redistribute_grid(&[10.0, 10.0], &[4.0, 3.0], &[true, false]).unwrap();
        assert_eq!(out[0], 0.0);
        assert_abs_diff_eq!(out[1], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn redistribute_proportional_to_capacity() {
        let out = redistribute_grid(&[10.0, 30.0], &[12.0, 8.0], &[false, false]).unwrap();
        assert_abs_diff_eq!(out[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 15.0, epsilon = 1e-12);
    }

    #[test]
    fn redistribute_rejects_insufficient_capacity() {
        let err = redistribute_grid(&[10.0, 10.0], &[9.0, 9.0], &[true, false]);
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn redistribution_conserves_traffic(
            caps in proptest::collection::vec(0.5f64..50.0, 1..8),
            fracs in proptest::collection::vec(0.0f64..1.0, 1..8),
            sleep_bits in proptest::collection::vec(any::<bool>(), 1..8),
        ) {
            let n = caps.len().min(fracs.len()).min(sleep_bits.len());
            let caps = &caps[..n];
            let loads: Vec<f64> = caps.iter().zip(&fracs[..n]).map(|(&c, &f)| c * f).collect();
            let mut flags = sleep_bits[..n].to_vec();
            let total: f64 = loads.iter().sum();
            let awake_cap: f64 = caps.iter().zip(&flags).filter(|(_, &a)| !a).map(|(&c, _)| c).sum();
            if total > 0.0 && awake_cap < total {
                // Wake everything: the all-awake split is always feasible.
                flags.iter_mut().for_each(|f| *f = false);
            }
            let out = redistribute_grid(caps, &loads, &flags).unwrap();
            let redist_total: f64 = out.iter().sum();
            prop_assert!((redist_total - total).abs() <= 1e-9 * total.max(1.0));
            for ((&gb, &cap), &asleep) in out.iter().zip(caps).zip(&flags) {
                prop_assert!(gb <= cap * (1.0 + 1e-9));
                if asleep { prop_assert_eq!(gb, 0.0); }
            }
        }
    }

    #[test]
    fn threshold_zero_never_sleeps() {
        let s = tiny_scenario();
        let traffic = s.traffic_matrix();
        let sched = threshold_controller(&s, &traffic, 0.0).unwrap();
        assert_eq!(sched.total_asleep(), 0);
    }

    #[test]
    fn threshold_one_sleeps_maximally() {
        let s = tiny_scenario();
        let traffic = s.traffic_matrix();
        let sched = threshold_controller(&s, &traffic, 1.0).unwrap();
        check_schedule(&s, &traffic, &sched).unwrap();
        // Exhaustive check per grid and slot: no feasible awake subset sleeps
        // more cells than the controller did.
        for t in 0..s.n_slots() {
            for grid in &s.grids {
                let idxs: Vec<usize> = grid
                    .cell_ids
                    .iter()
                    .map(|&cid| s.cell_index(cid).unwrap())
                    .collect();
                if idxs.len() > 5 {
                    continue;
                }
                let total: f64 = idxs.iter().map(|&i| traffic.get(i, t)).sum();
                let slept = idxs.iter().filter(|&&i| sched.is_asleep(i, t)).count();
                let mut best = 0usize;
                for mask in 0u32..(1 << idxs.len()) {
                    let awake_cap: f64 = idxs
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask & (1 << k) == 0)
                        .map(|(_, &i)| s.cells[i].capacity_gb)
                        .sum();
                    if covers(awake_cap, total) {
                        best = best.max(mask.count_ones() as usize);
                    }
                }
                assert_eq!(slept, best, "grid {} slot {t}", grid.id);
            }
        }
    }

    #[test]
    fn threshold_sleeps_more_at_night() {
        let s = generate_scenario(&ScenarioConfig::default_city()).unwrap();
        let traffic = s.traffic_matrix();
        let sched = threshold_controller(&s, &traffic, 0.1).unwrap();
        // Night: 02:00-06:00 (slots 4..12). Day: 12:00-16:00 (slots 24..32).
        let night: usize = (4..12).map(|t| sched.asleep_count_at(t)).sum();
        let day: usize = (24..32).map(|t| sched.asleep_count_at(t)).sum();
        assert!(night > day, "night={night} day={day}");
    }

    #[test]
    fn greedy_sleeps_everything_without_traffic() {
        let s = tiny_scenario();
        let traffic = LoadMatrix::zeros(s.cells.len(), s.n_slots());
        let sched = greedy_controller(&s, &traffic, GreedyOpts::default()).unwrap();
        assert_eq!(sched.total_asleep(), s.cells.len() * s.n_slots());

        let sched = greedy_controller(&s, &traffic, GreedyOpts { min_awake: 1 }).unwrap();
        for t in 0..s.n_slots() {
            for grid in &s.grids {
                let awake = grid
                    .cell_ids
                    .iter()
                    .filter(|&&cid| !sched.is_asleep(s.cell_index(cid).unwrap(), t))
                    .count();
                assert_eq!(awake, 1);
            }
        }
    }

    #[test]
    fn greedy_keeps_everyone_awake_at_full_load() {
        let s = tiny_scenario();
        let mut traffic = LoadMatrix::zeros(s.cells.len(), s.n_slots());
        for (i, cell) in s.cells.iter().enumerate() {
            for t in 0..s.n_slots() {
                traffic.set(i, t, cell.capacity_gb);
            }
        }
        let sched = greedy_controller(&s, &traffic, GreedyOpts::default()).unwrap();
        assert_eq!(sched.total_asleep(), 0);
    }

    #[test]
    fn greedy_beats_threshold_on_equal_capacity_grids() {
        // Equal capacities make total awake RRU power depend only on the
        // number of sleeping cells, so maximal sleeping is optimal.
        let mut cfg = ScenarioConfig::new(17, 2, 1, 1);
        cfg.capacity_jitter = 0.0;
        let s = generate_scenario(&cfg).unwrap();
        let traffic = s.traffic_matrix();
        let greedy = greedy_controller(&s, &traffic, GreedyOpts::default()).unwrap();
        let thresh = threshold_controller(&s, &traffic, 0.1).unwrap();
        let e_greedy = evaluate_schedule(&s, &traffic, &greedy).unwrap().total_energy_mwh();
        let e_thresh = evaluate_schedule(&s, &traffic, &thresh).unwrap().total_energy_mwh();
        assert!(e_greedy <= e_thresh + 1e-12, "{e_greedy} vs {e_thresh}");
    }

    #[test]
    fn evaluate_is_the_check_redistribute_energy_composition() {
        let s = tiny_scenario();
        let traffic = s.traffic_matrix();
        let sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
        let eval = evaluate_schedule(&s, &traffic, &sched).unwrap();
        check_schedule(&s, &traffic, &sched).unwrap();
        let pooled = redistribute(&s, &traffic, &sched).unwrap();
        let series = energy::network_energy(&s, &pooled, &sched, 0..s.n_slots()).unwrap();
        assert_eq!(eval.energy_mwh, series.energy_mwh);
        assert_eq!(eval.e_max_mwh, series.e_max_mwh);
        // Pooling never moves traffic across grids: slot totals are untouched.
        for t in 0..s.n_slots() {
            assert_relative_eq!(pooled.slot_total(t), traffic.slot_total(t), max_relative = 1e-12);
        }
    }

    #[test]
    fn evaluate_conserves_served_traffic() {
        let s = tiny_scenario();
        let traffic = s.traffic_matrix();
        let sched = greedy_controller(&s, &traffic, GreedyOpts::default()).unwrap();
        let eval = evaluate_schedule(&s, &traffic, &sched).unwrap();
        assert_relative_eq!(
            eval.redistributed.total(),
            traffic.total(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn any_feasible_schedule_saves_energy_vs_all_awake() {
        let s = generate_scenario(&ScenarioConfig::new(23, 3, 2, 1)).unwrap();
        let traffic = s.traffic_matrix();
        let all_awake = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
        let base = evaluate_schedule(&s, &traffic, &all_awake).unwrap().total_energy_mwh();
        for (name, sched) in [
            ("threshold", threshold_controller(&s, &traffic, 0.3).unwrap()),
            ("greedy", greedy_controller(&s, &traffic, GreedyOpts::default()).unwrap()),
        ] {
            let e = evaluate_schedule(&s, &traffic, &sched).unwrap().total_energy_mwh();
            assert!(e <= base + 1e-12, "{name}: {e} > {base}");
        }
    }

    #[test]
    fn checker_names_grid_and_slot() {
        let s = tiny_scenario();
        let mut traffic = LoadMatrix::zeros(s.cells.len(), s.n_slots());
        // Saturate one grid, then sleep one of its cells.
        let grid = &s.grids[0];
        for &cid in &grid.cell_ids {
            let i = s.cell_index(cid).unwrap();
            traffic.set(i, 5, s.cells[i].capacity_gb);
        }
        let mut sched = SleepSchedule::all_awake(s.cells.len(), s.n_slots());
        let victim = s.cell_index(grid.cell_ids[0]).unwrap();
        sched.set_asleep(victim, 5, true);
        match check_schedule(&s, &traffic, &sched) {
            Err(Error::InfeasibleSchedule { grid: g, slot, .. }) => {
                assert_eq!(g, grid.id.0);
                assert_eq!(slot, 5);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn schedule_csv_round_trip() {
        let s = tiny_scenario();
        let traffic = s.traffic_matrix();
        let sched = threshold_controller(&s, &traffic, 0.4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schedule.csv");
        sched.write_csv(&s, &path).unwrap();
        let loaded = SleepSchedule::read_csv(&s, &path).unwrap();
        assert_eq!(sched, loaded);
    }
}

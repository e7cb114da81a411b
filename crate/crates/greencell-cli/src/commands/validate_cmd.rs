//! Independent re-verification of a simulate run: scenario invariants,
//! schedule feasibility, redistribution conservation and equality, dispatch
//! constraints for every day with and without the network load, and the
//! stored carbon attribution.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;

use greencell::control::{check_schedule, redistribute, SleepSchedule};
use greencell::dispatch::{
    check_solution, coal_per_slot_t, default_emission_factor, read_instance,
    DispatchInstance, DispatchSolution,
};
use greencell::ioutil;
use greencell::scenario::{load_scenario, CellId, LoadMatrix, Scenario, SLOTS_PER_DAY};

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Simulate run directory.
    #[arg(long)]
    pub run: PathBuf,
}

fn manifest_r_loss(run: &Path) -> Result<f64> {
    let raw = std::fs::read_to_string(run.join("manifest.toml"))
        .with_context(|| format!("reading {}", run.join("manifest.toml").display()))?;
    let value: toml::Value = toml::from_str(&raw).context("parsing manifest.toml")?;
    value
        .get("config")
        .and_then(|c| c.get("r_loss"))
        .and_then(|v| v.as_float())
        .context("manifest.toml lacks config.r_loss")
}

fn read_load_matrix(path: &Path, s: &Scenario) -> Result<LoadMatrix> {
    let mut m = LoadMatrix::zeros(s.cells.len(), s.n_slots());
    let mut reader = ioutil::open_csv(path)?;
    for rec in ioutil::csv_records(&mut reader, path)? {
        let cell_id = CellId(ioutil::parse_field(&rec, 0, path, "cell_id")?);
        let slot: usize = ioutil::parse_field(&rec, 1, path, "slot")?;
        let gb: f64 = ioutil::parse_field(&rec, 2, path, "gb")?;
        let idx = s.cell_index(cell_id)?;
        m.set(idx, slot, gb);
    }
    Ok(m)
}

fn read_series(path: &Path, value_col: &str) -> Result<Vec<f64>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        rows.push((
            ioutil::parse_field(&rec, 0, path, "slot")?,
            ioutil::parse_field(&rec, 1, path, value_col)?,
        ));
    }
    rows.sort_by_key(|&(t, _)| t);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// Splits a combined multi-day solution file into per-day solutions.
fn read_day_solutions(
    path: &Path,
    inst: &DispatchInstance,
    days: usize,
) -> Result<Vec<DispatchSolution>> {
    // Reuse the single-file reader by rewriting slots per day.
    let mut reader = ioutil::open_csv(path)?;
    let mut rows: Vec<(u32, usize, u8, f64, u8, u8)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        rows.push((
            ioutil::parse_field(&rec, 0, path, "unit_id")?,
            ioutil::parse_field(&rec, 1, path, "slot")?,
            ioutil::parse_field(&rec, 2, path, "on")?,
            ioutil::parse_field(&rec, 3, path, "power_mw")?,
            ioutil::parse_field(&rec, 4, path, "up")?,
            ioutil::parse_field(&rec, 5, path, "down")?,
        ));
    }
    let n = inst.units.len();
    let mut days_out = Vec::with_capacity(days);
    for _ in 0..days {
        days_out.push(DispatchSolution {
            power_mw: vec![vec![0.0; SLOTS_PER_DAY]; n],
            on: vec![vec![false; SLOTS_PER_DAY]; n],
            up: vec![vec![false; SLOTS_PER_DAY]; n],
            down: vec![vec![false; SLOTS_PER_DAY]; n],
            objective: 0.0,
            feasible: true,
            optimal: false,
        });
    }
    for (unit_id, abs_slot, on, power, up, down) in rows {
        let day = abs_slot / SLOTS_PER_DAY;
        let k = abs_slot % SLOTS_PER_DAY;
        anyhow::ensure!(day < days, "slot {abs_slot} outside the scenario horizon");
        let i = inst
            .units
            .iter()
            .position(|u| u.id == unit_id)
            .with_context(|| format!("unknown unit {unit_id} in {}", path.display()))?;
        let sol = &mut days_out[day];
        sol.power_mw[i][k] = power;
        sol.on[i][k] = on != 0;
        sol.up[i][k] = up != 0;
        sol.down[i][k] = down != 0;
    }
    Ok(days_out)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn run(args: ValidateArgs) -> Result<ExitCode> {
    let run = &args.run;
    let mut problems: Vec<String> = Vec::new();

    let scenario = load_scenario(&run.join("scenario"))
        .with_context(|| format!("loading {}", run.join("scenario").display()))?;
    let traffic = scenario.traffic_matrix();

    // Schedule feasibility.
    let schedule = SleepSchedule::read_csv(&scenario, &run.join("schedule.csv"))?;
    if let Err(e) = check_schedule(&scenario, &traffic, &schedule) {
        problems.push(format!("schedule: {e}"));
    }

    // Redistribution: stored values must match an independent recomputation
    // and conserve traffic per grid and slot.
    let stored = read_load_matrix(&run.join("redistributed.csv"), &scenario)?;
    match redistribute(&scenario, &traffic, &schedule) {
        Ok(recomputed) => {
            'outer: for (i, cell) in scenario.cells.iter().enumerate() {
                for t in 0..scenario.n_slots() {
                    if !close(stored.get(i, t), recomputed.get(i, t), 1e-9) {
                        problems.push(format!(
                            "redistribution: cell {} slot {t}: stored {} vs recomputed {}",
                            cell.id,
                            stored.get(i, t),
                            recomputed.get(i, t)
                        ));
                        break 'outer;
                    }
                }
            }
        }
        Err(e) => problems.push(format!("redistribution: {e}")),
    }
    for t in 0..scenario.n_slots() {
        for grid in &scenario.grids {
            let offered: f64 = grid
                .cell_ids
                .iter()
                .map(|&cid| traffic.get(scenario.cell_index(cid).unwrap(), t))
                .sum();
            let carried: f64 = grid
                .cell_ids
                .iter()
                .map(|&cid| stored.get(scenario.cell_index(cid).unwrap(), t))
                .sum();
            if !close(offered, carried, 1e-9) {
                problems.push(format!(
                    "conservation: grid {} slot {t}: offered {offered} GB vs carried {carried} GB",
                    grid.id
                ));
            }
        }
    }

    // Dispatch constraints for every day, with and without the network load.
    let r_loss = manifest_r_loss(run)?;
    let instance = read_instance(&run.join("instance"), r_loss)?;
    let p_bs = read_series(&run.join("bs_load.csv"), "p_bs_mw")?;
    anyhow::ensure!(
        p_bs.len() == scenario.n_slots(),
        "bs_load.csv has {} slots, scenario has {}",
        p_bs.len(),
        scenario.n_slots()
    );
    let with_sols = read_day_solutions(&run.join("solutions_with_bs.csv"), &instance, scenario.days)?;
    let without_sols =
        read_day_solutions(&run.join("solutions_without_bs.csv"), &instance, scenario.days)?;
    let mut coal_recomputed = Vec::with_capacity(scenario.n_slots());
    for day in 0..scenario.days {
        let day_load = &p_bs[day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY];
        let inst_with = instance.with_added_load(day_load)?;
        for v in check_solution(&inst_with, &with_sols[day], 1e-6) {
            problems.push(format!("dispatch with-bs day {day}: {v}"));
        }
        for v in check_solution(&instance, &without_sols[day], 1e-6) {
            problems.push(format!("dispatch without-bs day {day}: {v}"));
        }
        let coal_with = coal_per_slot_t(&inst_with, &with_sols[day]);
        let coal_without = coal_per_slot_t(&instance, &without_sols[day]);
        coal_recomputed.extend(coal_with.iter().zip(&coal_without).map(|(w, wo)| w - wo));
    }

    // Stored attribution must equal the recomputed coal difference.
    let stored_coal = read_series(&run.join("attribution.csv"), "coal_t")?;
    let e_coal = default_emission_factor();
    if stored_coal.len() != coal_recomputed.len() {
        problems.push(format!(
            "attribution: {} slots stored, {} recomputed",
            stored_coal.len(),
            coal_recomputed.len()
        ));
    } else {
        for (t, (a, b)) in stored_coal.iter().zip(&coal_recomputed).enumerate() {
            if !close(*a, *b, 1e-9) {
                problems.push(format!(
                    "attribution: slot {t}: stored {a} t coal vs recomputed {b} t"
                ));
                break;
            }
        }
        let _ = e_coal;
    }

    if problems.is_empty() {
        println!("validation passed: {}", run.display());
        Ok(ExitCode::SUCCESS)
    } else {
        for p in &problems {
            eprintln!("violation: {p}");
        }
        eprintln!("validation failed: {} problem(s)", problems.len());
        Ok(ExitCode::FAILURE)
    }
}

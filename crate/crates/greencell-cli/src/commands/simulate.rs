//! End-to-end run: scenario -> controller schedule -> redistribution ->
//! energy -> per-station PV clamp -> per-day dispatch with and without the
//! network load -> carbon attribution -> metrics and summary tables.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::Args;
use serde::Serialize;

use greencell::control::evaluate_schedule;
use greencell::dispatch::{
    attribute_mobile_carbon, default_city_instance, net_bs_load_after_pv, read_instance,
    write_loads_csv, write_units_csv, DispatchInstance, SolverOpts,
};
use greencell::ioutil;
use greencell::metrics::{carbon_efficiency, energy_efficiency, write_metrics_csv, MetricsRow};
use greencell::scenario::{save_scenario, SLOTS_PER_DAY};
use greencell::solar::{pv_generation_w, write_pv_csv, PvConfig, PvRow};

use super::common::{
    build_schedule, require_out, station_power_series_w, write_manifest, Method, ScenarioSource,
};

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: ScenarioSource,

    /// Sleep controller.
    #[arg(long, value_enum, default_value_t = Method::None)]
    pub method: Method,

    /// Threshold controller parameter.
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,

    /// Trained policy checkpoint (required for --method deep).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Dispatch instance directory (dispatch.csv + loads.csv); the built-in
    /// three-plant city when omitted.
    #[arg(long)]
    pub instance: Option<PathBuf>,

    /// Transmission loss rate of the dispatch model.
    #[arg(long, default_value_t = 0.05)]
    pub r_loss: f64,

    /// PV panel area per station, m^2; 0 disables PV.
    #[arg(long, default_value_t = 0.0)]
    pub pv_area_m2: f64,

    #[arg(long, default_value_t = 0.20)]
    pub pv_efficiency: f64,

    #[arg(long, default_value_t = 0.85)]
    pub pv_derate: f64,

    #[arg(long, default_value_t = 28.68)]
    pub latitude_deg: f64,

    /// Day of year of the scenario's first day.
    #[arg(long, default_value_t = 152)]
    pub start_day: usize,
}

pub fn run(args: SimulateArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let scenario = args.source.resolve(seed)?;
    ensure!(
        scenario.n_slots() % SLOTS_PER_DAY == 0,
        "scenario must cover whole days"
    );
    write_manifest(&out, "simulate", seed, &args)?;
    save_scenario(&scenario, &out.join("scenario"))?;

    let traffic = scenario.traffic_matrix();
    let schedule = build_schedule(
        args.method,
        &scenario,
        &traffic,
        args.theta,
        args.checkpoint.as_deref(),
    )?;
    schedule.write_csv(&scenario, &out.join("schedule.csv"))?;

    let eval = evaluate_schedule(&scenario, &traffic, &schedule)?;
    let redistributed_rows: Vec<String> = scenario
        .cells
        .iter()
        .enumerate()
        .flat_map(|(i, cell)| {
            let redistributed = &eval.redistributed;
            (0..scenario.n_slots())
                .map(move |t| format!("{},{},{}", cell.id, t, redistributed.get(i, t)))
        })
        .collect();
    ioutil::write_csv(
        &out.join("redistributed.csv"),
        "cell_id,slot,gb",
        &redistributed_rows,
    )?;

    // Station power, optionally offset per station by PV (grid never absorbs
    // surplus: the clamp keeps the net draw nonnegative).
    let station_w = station_power_series_w(&scenario, &eval.redistributed, &schedule)?;
    let pv_cfg = PvConfig {
        panel_area_m2: args.pv_area_m2,
        efficiency: args.pv_efficiency,
        latitude_deg: args.latitude_deg,
        derate: args.pv_derate,
        cloud_factor: 1.0,
    };
    if args.pv_area_m2 > 0.0 {
        pv_cfg.validate()?;
        let rows: Vec<PvRow> = scenario
            .base_stations
            .iter()
            .map(|bs| PvRow {
                station_id: bs.id,
                panel_area_m2: args.pv_area_m2,
                efficiency: args.pv_efficiency,
                derate: args.pv_derate,
            })
            .collect();
        write_pv_csv(&rows, &out.join("pv.csv"))?;
    }
    let n_slots = scenario.n_slots();
    let pv_mw: Vec<f64> = (0..n_slots)
        .map(|t| {
            if args.pv_area_m2 > 0.0 {
                pv_generation_w(&pv_cfg, args.start_day + t / SLOTS_PER_DAY, t % SLOTS_PER_DAY)
                    / 1e6
            } else {
                0.0
            }
        })
        .collect();
    let mut p_bs_mw = vec![0.0; n_slots];
    for series in &station_w {
        let station_mw: Vec<f64> = series.iter().map(|w| w / 1e6).collect();
        let net = net_bs_load_after_pv(&station_mw, &pv_mw)?;
        for (total, n) in p_bs_mw.iter_mut().zip(net) {
            *total += n;
        }
    }
    let bs_rows: Vec<String> = p_bs_mw
        .iter()
        .enumerate()
        .map(|(t, mw)| format!("{t},{mw}"))
        .collect();
    ioutil::write_csv(&out.join("bs_load.csv"), "slot,p_bs_mw", &bs_rows)?;

    // Per-day dispatch with and without the network load.
    let instance = resolve_instance(&args)?;
    ensure!(
        instance.n_slots() == SLOTS_PER_DAY,
        "dispatch instance must cover {} half-hours, has {}",
        SLOTS_PER_DAY,
        instance.n_slots()
    );
    let inst_dir = out.join("instance");
    write_units_csv(&instance.units, &inst_dir.join("dispatch.csv"))?;
    write_loads_csv(&instance, &inst_dir.join("loads.csv"))?;

    let opts = SolverOpts::default();
    let mut coal_slot_t = Vec::with_capacity(n_slots);
    let mut with_rows: Vec<String> = Vec::new();
    let mut without_rows: Vec<String> = Vec::new();
    let mut total_coal = 0.0;
    for day in 0..scenario.days {
        let day_load = &p_bs_mw[day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY];
        let attr = attribute_mobile_carbon(&instance, day_load, &opts)?;
        total_coal += attr.coal_t;
        coal_slot_t.extend_from_slice(&attr.coal_per_slot_t);
        let inst_with = instance.with_added_load(day_load)?;
        append_solution_rows(&mut with_rows, &inst_with, &attr.with_bs, day);
        append_solution_rows(&mut without_rows, &instance, &attr.without_bs, day);
    }
    ioutil::write_csv(
        &out.join("solutions_with_bs.csv"),
        "unit_id,slot,on,power_mw,up,down",
        &with_rows,
    )?;
    ioutil::write_csv(
        &out.join("solutions_without_bs.csv"),
        "unit_id,slot,on,power_mw,up,down",
        &without_rows,
    )?;

    let e_coal = greencell::dispatch::default_emission_factor();
    let attr_rows: Vec<String> = coal_slot_t
        .iter()
        .enumerate()
        .map(|(t, coal)| format!("{t},{coal},{}", coal * e_coal))
        .collect();
    ioutil::write_csv(&out.join("attribution.csv"), "slot,coal_t,co2_t", &attr_rows)?;

    // Per-slot metrics.
    let mut rows = Vec::with_capacity(n_slots);
    for t in 0..n_slots {
        let co2 = coal_slot_t[t] * e_coal;
        let load = eval.load_gb[t];
        let ce = if co2 > 1e-12 && load > 0.0 {
            carbon_efficiency(load, co2)?
        } else {
            0.0
        };
        rows.push(MetricsRow {
            slot: t,
            load_gb: load,
            energy_mwh: eval.energy_mwh[t],
            m: eval.m[t],
            ee_tb_per_mwh: energy_efficiency(load, eval.energy_mwh[t])?,
            ce_tb_per_tco2: ce,
        });
    }
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;

    let total_load: f64 = eval.load_gb.iter().sum();
    let total_energy = eval.total_energy_mwh();
    let total_co2 = total_coal * e_coal;
    let asleep_fraction =
        schedule.total_asleep() as f64 / (scenario.cells.len() * n_slots) as f64;
    let summary = vec![
        format!("method,{}", args.method.label()),
        format!("total_load_gb,{total_load}"),
        format!("total_energy_mwh,{total_energy}"),
        format!("total_e_max_mwh,{}", eval.e_max_mwh.iter().sum::<f64>()),
        format!("mean_m,{}", eval.mean_m()),
        format!("ee_tb_per_mwh,{}", energy_efficiency(total_load, total_energy)?),
        format!("total_coal_t,{total_coal}"),
        format!("total_co2_t,{total_co2}"),
        format!(
            "ce_tb_per_tco2,{}",
            if total_co2 > 1e-12 { carbon_efficiency(total_load, total_co2)? } else { 0.0 }
        ),
        format!("asleep_fraction,{asleep_fraction}"),
    ];
    ioutil::write_csv(&out.join("summary.csv"), "metric,value", &summary)?;

    println!(
        "simulate [{}]: mean M {:.4}, energy {:.3} MWh, CO2 {:.3} t -> {}",
        args.method.label(),
        eval.mean_m(),
        total_energy,
        total_co2,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn resolve_instance(args: &SimulateArgs) -> Result<DispatchInstance> {
    match &args.instance {
        Some(dir) => read_instance(dir, args.r_loss)
            .with_context(|| format!("loading dispatch instance {}", dir.display())),
        None => Ok(default_city_instance()),
    }
}

fn append_solution_rows(
    rows: &mut Vec<String>,
    inst: &DispatchInstance,
    sol: &greencell::dispatch::DispatchSolution,
    day: usize,
) {
    for (i, u) in inst.units.iter().enumerate() {
        for k in 0..inst.n_slots() {
            rows.push(format!(
                "{},{},{},{},{},{}",
                u.id,
                day * SLOTS_PER_DAY + k,
                sol.on[i][k] as u8,
                sol.power_mw[i][k],
                sol.up[i][k] as u8,
                sol.down[i][k] as u8
            ));
        }
    }
}

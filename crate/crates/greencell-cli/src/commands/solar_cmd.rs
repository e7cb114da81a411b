//! PV sweep: for each panel size (or investment level), offset the
//! station loads with clear-sky PV, re-attribute carbon through the
//! dispatch model, and report offsets, curtailment, net-zero rates, and the
//! levelized cost of carbon abatement, with and without the learned sleep
//! controller.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use greencell::control::evaluate_schedule;
use greencell::dispatch::{
    attribute_mobile_carbon, default_city_instance, read_instance, DispatchInstance, SolverOpts,
};
use greencell::ioutil;
use greencell::scenario::SLOTS_PER_DAY;
use greencell::solar::{
    curtailment_mwh, lcca, net_zero_rate, pv_series_w, read_costs_csv, write_costs_csv, CostModel,
    PvConfig,
};

use super::common::{
    build_schedule, parse_float_list, require_out, station_power_series_w, write_manifest, Method,
    ScenarioSource,
};

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: ScenarioSource,

    /// Panel areas per station to sweep, m^2, comma-separated.
    #[arg(long, default_value = "10,20,40,60")]
    pub areas: String,

    /// Annual-investment levels to sweep (converted to areas through the
    /// cost model), comma-separated. Optional.
    #[arg(long)]
    pub investments: Option<String>,

    /// Trained policy; enables the pv-plus-deep rows.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Dispatch instance directory; built-in city when omitted.
    #[arg(long)]
    pub instance: Option<PathBuf>,

    #[arg(long, default_value_t = 0.05)]
    pub r_loss: f64,

    /// Cost table (item,value); shipped defaults when omitted.
    #[arg(long)]
    pub costs: Option<PathBuf>,

    #[arg(long, default_value_t = 0.20)]
    pub pv_efficiency: f64,

    #[arg(long, default_value_t = 0.85)]
    pub pv_derate: f64,

    #[arg(long, default_value_t = 28.68)]
    pub latitude_deg: f64,

    #[arg(long, default_value_t = 152)]
    pub start_day: usize,
}

struct MethodRun {
    label: &'static str,
    station_w: Vec<Vec<f64>>,
}

fn co2_for_load(inst: &DispatchInstance, p_bs_mw: &[f64], days: usize) -> Result<f64> {
    let opts = SolverOpts::default();
    let mut total = 0.0;
    for day in 0..days {
        let slice = &p_bs_mw[day * SLOTS_PER_DAY..(day + 1) * SLOTS_PER_DAY];
        total += attribute_mobile_carbon(inst, slice, &opts)?.co2_t;
    }
    Ok(total)
}

pub fn run(args: SweepArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let scenario = args.source.resolve(seed)?;
    write_manifest(&out, "solar-sweep", seed, &args)?;

    let costs = match &args.costs {
        Some(path) => read_costs_csv(path)
            .with_context(|| format!("reading cost table {}", path.display()))?,
        None => CostModel::default(),
    };
    write_costs_csv(&costs, &out.join("costs.csv"))?;

    let instance = match &args.instance {
        Some(dir) => read_instance(dir, args.r_loss)?,
        None => default_city_instance(),
    };
    anyhow::ensure!(instance.n_slots() == SLOTS_PER_DAY, "instance must cover one day");

    let traffic = scenario.traffic_matrix();
    let mut method_runs = Vec::new();
    for (method, label) in [(Method::None, "pv-only"), (Method::Deep, "pv+deep")] {
        if method == Method::Deep && args.checkpoint.is_none() {
            continue;
        }
        let sched = build_schedule(method, &scenario, &traffic, 0.1, args.checkpoint.as_deref())?;
        let eval = evaluate_schedule(&scenario, &traffic, &sched)?;
        method_runs.push(MethodRun {
            label,
            station_w: station_power_series_w(&scenario, &eval.redistributed, &sched)?,
        });
    }

    // The net-zero baseline: no saving, no PV.
    let baseline_bs_mw: Vec<f64> = sum_stations_mw(&method_runs[0].station_w, &vec![0.0; scenario.n_slots()]);
    let co2_baseline = co2_for_load(&instance, &baseline_bs_mw, scenario.days)?;
    anyhow::ensure!(co2_baseline > 0.0, "baseline attribution is zero; nothing to offset");

    let mut area_points: Vec<f64> = parse_float_list(&args.areas)?;
    if let Some(raw) = &args.investments {
        let n_bs = scenario.base_stations.len() as f64;
        for inv in parse_float_list(raw)? {
            // investment = capex_per_kw * (area * n_bs) * efficiency
            let area = inv / (costs.capex_per_kw * args.pv_efficiency * n_bs);
            area_points.push(area);
        }
    }
    area_points.retain(|a| *a >= 0.0);
    area_points.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let annualize = 365.0 / scenario.days as f64;
    let mut rows: Vec<String> = Vec::new();
    for run in &method_runs {
        for &area in &area_points {
            let cfg = PvConfig {
                panel_area_m2: area,
                efficiency: args.pv_efficiency,
                latitude_deg: args.latitude_deg,
                derate: args.pv_derate,
                cloud_factor: 1.0,
            };
            if area > 0.0 {
                cfg.validate()?;
            }
            let pv_w = pv_series_w(&cfg, args.start_day, scenario.n_slots());
            let p_bs_mw = sum_stations_mw(&run.station_w, &pv_w);
            let pv_mwh: f64 = pv_w.iter().map(|w| w * 0.5 / 1e6).sum::<f64>()
                * scenario.base_stations.len() as f64;
            let mut curtail = 0.0;
            for series in &run.station_w {
                curtail += curtailment_mwh(&pv_w, series)?;
            }
            let co2 = co2_for_load(&instance, &p_bs_mw, scenario.days)?;
            let nzr = net_zero_rate(co2_baseline, co2)?;
            let investment =
                costs.investment_for_area(area * scenario.base_stations.len() as f64, cfg.efficiency);
            let abated_per_year = (co2_baseline - co2).max(0.0) * annualize;
            let lcca_str = if abated_per_year > 0.0 && investment > 0.0 {
                format!("{}", lcca(&costs, investment, abated_per_year)?)
            } else {
                String::new()
            };
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{}",
                run.label, area, investment, pv_mwh, curtail, co2, co2_baseline, nzr, lcca_str
            ));
        }
    }
    ioutil::write_csv(
        &out.join("sweep.csv"),
        "method,area_m2_per_station,investment,pv_mwh,curtailment_mwh,co2_t,co2_baseline_t,net_zero_rate,lcca",
        &rows,
    )?;
    println!(
        "solar sweep: {} methods x {} sizes -> {}",
        method_runs.len(),
        area_points.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Network draw in MW after clamping each station's load against its panel.
fn sum_stations_mw(station_w: &[Vec<f64>], pv_w: &[f64]) -> Vec<f64> {
    let n_slots = pv_w.len();
    let mut out = vec![0.0; n_slots];
    for series in station_w {
        for (t, total) in out.iter_mut().enumerate() {
            *total += (series[t] - pv_w[t]).max(0.0) / 1e6;
        }
    }
    out
}

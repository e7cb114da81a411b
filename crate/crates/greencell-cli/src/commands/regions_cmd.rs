//! Regional extrapolation: Monte Carlo capacity per region, misalignment
//! from controller-specific lookup curves built on the reference scenario,
//! then energy, carbon, and the additional-CO2 table against the pre-5G
//! baseline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use greencell::ioutil;
use greencell::regional::{
    build_m_curve, monte_carlo_capacity, read_regions_csv, reference_pool_from_scenario,
    regional_energy_and_carbon, trap_comparison, MisalignmentCurve, RegionProfile,
    DEFAULT_GRID_EMISSION_FACTOR, DEFAULT_MC_TRIALS,
};
use greencell::scenario::{filter_stations, Scenario};

use super::common::{build_schedule, parse_float_list, require_out, write_manifest, Method, ScenarioSource};

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: ScenarioSource,

    /// Region table: name,n_4g,n_5g,n_users,area_km2.
    #[arg(long)]
    pub regions: PathBuf,

    /// Controllers to estimate under; repeatable.
    #[arg(long = "controller", value_enum, default_values_t = [Method::None])]
    pub controllers: Vec<Method>,

    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Monte Carlo trials per region.
    #[arg(long, default_value_t = DEFAULT_MC_TRIALS)]
    pub trials: usize,

    /// Grid emission factor, tCO2/MWh.
    #[arg(long, default_value_t = DEFAULT_GRID_EMISSION_FACTOR)]
    pub gamma_co2: f64,

    /// Mobile users served by the reference scenario, for traffic-per-user.
    #[arg(long, default_value_t = 30_000)]
    pub ref_users: u64,

    /// Normalized-load targets for the misalignment lookup curves.
    #[arg(long, default_value = "0.05,0.1,0.2,0.35,0.5")]
    pub targets: String,

    /// Misalignment of the pre-5G (4G only) network for the trap baseline;
    /// derived from the reference scenario when omitted.
    #[arg(long)]
    pub m_pre5g: Option<f64>,
}

fn curve_for(
    method: Method,
    s: &Scenario,
    targets: &[f64],
    theta: f64,
    checkpoint: Option<&std::path::Path>,
) -> Result<MisalignmentCurve> {
    let traffic = s.traffic_matrix();
    let curve = build_m_curve(s, &traffic, targets, |s, tr| {
        build_schedule(method, s, tr, theta, checkpoint)
            .map_err(|e| greencell::Error::InvalidArgument(format!("{e:#}")))
    })?;
    Ok(curve)
}

pub fn run(args: EstimateArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let scenario = args.source.resolve(seed)?;
    write_manifest(&out, "regions-estimate", seed, &args)?;
    let targets = parse_float_list(&args.targets)?;
    let regions = read_regions_csv(&args.regions)
        .with_context(|| format!("reading {}", args.regions.display()))?;

    if args.controllers.contains(&Method::Deep) && args.checkpoint.is_none() {
        anyhow::bail!("--controller deep needs --checkpoint <FILE>");
    }

    let pool = reference_pool_from_scenario(&scenario);
    let daily_traffic_gb = scenario.traffic_matrix().total() / scenario.days as f64;
    let avg_traffic = greencell::regional::avg_traffic_per_user(daily_traffic_gb, 0.0, args.ref_users)?;

    // Misalignment lookup curves per controller, plus the 4G-only baseline.
    let mut curves = Vec::new();
    for &method in &args.controllers {
        let curve = curve_for(method, &scenario, &targets, 0.1, args.checkpoint.as_deref())?;
        curves.push((method, curve));
    }
    let four_g_only = filter_stations(&scenario, |bs| !bs.kind.is_5g()).ok();
    let curve_pre = match (&four_g_only, args.m_pre5g) {
        (_, Some(_)) | (None, None) => None,
        (Some(s4), None) => Some(curve_for(Method::None, s4, &targets, 0.1, None)?),
    };

    let mut estimate_rows: Vec<String> = Vec::new();
    let mut trap_rows: Vec<String> = Vec::new();
    for region in &regions {
        let mc_all = monte_carlo_capacity(region, &pool, args.trials, seed)?;
        let l_p = avg_traffic * region.n_users as f64;

        let mut controller_ms: Vec<(String, f64)> = Vec::new();
        for (method, curve) in &curves {
            let m_p = curve.eval(l_p / mc_all.capacity_gb_day);
            let est = regional_energy_and_carbon(region, &mc_all, avg_traffic, m_p, args.gamma_co2)?;
            estimate_rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                est.name,
                method.label(),
                est.c_p_gb_day,
                est.e_max_p_mwh_day,
                est.l_p_gb_day,
                est.l_tilde,
                est.m_p,
                est.ee_tb_per_mwh,
                est.e_p_mwh_day,
                est.co2_t_day,
                est.co2_ci.0,
                est.co2_ci.1
            ));
            controller_ms.push((method.label().to_string(), m_p));
        }

        // Additional CO2 against the 4G-only network carrying the same traffic.
        if region.n_4g_bs > 0 {
            let pre_region = RegionProfile {
                n_5g_bs: 0,
                ..region.clone()
            };
            let mc_pre = monte_carlo_capacity(&pre_region, &pool, args.trials, seed)?;
            let m_pre = match (args.m_pre5g, &curve_pre) {
                (Some(m), _) => m,
                (None, Some(curve)) => curve.eval(l_p / mc_pre.capacity_gb_day),
                (None, None) => anyhow::bail!("no 4G stations in the reference scenario; pass --m-pre5g"),
            };
            let rows = trap_comparison(
                region,
                &mc_all,
                &mc_pre,
                avg_traffic,
                m_pre,
                args.gamma_co2,
                &controller_ms,
            )?;
            for row in rows {
                trap_rows.push(format!(
                    "{},{},{},{},{},{}",
                    region.name,
                    row.controller,
                    row.m_p,
                    row.e_p_mwh_day,
                    row.co2_t_day,
                    row.additional_co2_t_day
                ));
            }
        }
    }

    ioutil::write_csv(
        &out.join("estimates.csv"),
        "name,controller,c_p_gb_day,e_max_mwh_day,l_p_gb_day,l_tilde,m_p,ee_tb_per_mwh,e_p_mwh_day,co2_t_day,co2_ci_low,co2_ci_high",
        &estimate_rows,
    )?;
    ioutil::write_csv(
        &out.join("trap.csv"),
        "region,controller,m_p,e_p_mwh_day,co2_t_day,additional_co2_t_day",
        &trap_rows,
    )?;

    println!(
        "regions: {} regions x {} controllers -> {}",
        regions.len(),
        args.controllers.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use greencell::dispatch::{
    attribute_mobile_carbon, check_solution, coal_consumption_t, default_emission_factor,
    grid_emission_factor, read_instance, solve_unit_commitment, write_solution_csv, SolverOpts,
};
use greencell::ioutil;

use super::common::{require_out, write_manifest};

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Instance directory holding dispatch.csv and loads.csv.
    #[arg(long)]
    pub instance: PathBuf,

    /// Transmission loss rate.
    #[arg(long, default_value_t = 0.05)]
    pub r_loss: f64,

    /// Optional base-station load series (slot,p_bs_mw); when given, the
    /// instance is solved with and without it and the difference is
    /// attributed to the mobile network.
    #[arg(long)]
    pub bs_load: Option<PathBuf>,
}

fn read_bs_load(path: &PathBuf, n_slots: usize) -> Result<Vec<f64>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        rows.push((
            ioutil::parse_field(&rec, 0, path, "slot")?,
            ioutil::parse_field(&rec, 1, path, "p_bs_mw")?,
        ));
    }
    rows.sort_by_key(|&(t, _)| t);
    anyhow::ensure!(
        rows.len() == n_slots,
        "{} has {} slots, instance has {n_slots}",
        path.display(),
        rows.len()
    );
    Ok(rows.into_iter().map(|(_, mw)| mw).collect())
}

pub fn run(args: SolveArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let instance = read_instance(&args.instance, args.r_loss)
        .with_context(|| format!("loading instance {}", args.instance.display()))?;
    write_manifest(&out, "dispatch-solve", seed, &args)?;

    let opts = SolverOpts::default();
    let base = solve_unit_commitment(&instance, &opts)?;
    let violations = check_solution(&instance, &base, 1e-6);
    anyhow::ensure!(violations.is_empty(), "solver produced violations: {violations:?}");
    write_solution_csv(&instance, &base, &out.join("solution.csv"))?;

    let mut report = vec![
        format!("objective,{}", base.objective),
        format!("optimal,{}", base.optimal),
        format!("generation_mwh,{}", base.total_generation_mwh()),
        format!("coal_t,{}", coal_consumption_t(&instance, &base)),
        format!("grid_emission_factor_t_per_mwh,{}", grid_emission_factor(&instance, &base)?),
    ];

    if let Some(bs_path) = &args.bs_load {
        let p_bs = read_bs_load(bs_path, instance.n_slots())?;
        let attr = attribute_mobile_carbon(&instance, &p_bs, &opts)?;
        let inst_with = instance.with_added_load(&p_bs)?;
        write_solution_csv(&inst_with, &attr.with_bs, &out.join("solution_with_bs.csv"))?;
        let e_coal = default_emission_factor();
        let rows: Vec<String> = attr
            .coal_per_slot_t
            .iter()
            .enumerate()
            .map(|(t, coal)| format!("{t},{coal},{}", coal * e_coal))
            .collect();
        ioutil::write_csv(&out.join("attribution.csv"), "slot,coal_t,co2_t", &rows)?;
        report.push(format!("mobile_coal_t,{}", attr.coal_t));
        report.push(format!("mobile_co2_t,{}", attr.co2_t));
    }
    ioutil::write_csv(&out.join("report.csv"), "metric,value", &report)?;

    println!(
        "dispatch: objective {:.2}, optimal {}, -> {}",
        base.objective,
        base.optimal,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

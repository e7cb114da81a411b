use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Args;

use greencell::scenario::{generate_scenario, save_scenario};

use super::common::{require_out, write_manifest_named, ScenarioSource};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
}

pub fn run(args: GenArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let cfg = args.source.config(seed);
    let scenario = generate_scenario(&cfg)?;
    save_scenario(&scenario, &out)?;
    write_manifest_named(&out, "generation.toml", "scenario-gen", seed, &args.source)?;
    println!(
        "wrote scenario: {} stations, {} cells, {} grids, {} days -> {}",
        scenario.base_stations.len(),
        scenario.cells.len(),
        scenario.grids.len(),
        scenario.days,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

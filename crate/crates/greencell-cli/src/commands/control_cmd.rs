use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use greencell::control::evaluate_schedule;
use greencell::ioutil;
use greencell::metrics::{energy_efficiency, write_metrics_csv, MetricsRow};
use greencell::rl::{self, TrainConfig};

use super::common::{build_schedule, require_out, write_manifest, Method, ScenarioSource};

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: ScenarioSource,

    #[arg(long, value_enum, default_value_t = Method::Threshold)]
    pub method: Method,

    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,

    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

pub fn run_controller(args: RunArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let scenario = args.source.resolve(seed)?;
    write_manifest(&out, "control-run", seed, &args)?;
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
    let rows: Vec<MetricsRow> = (0..scenario.n_slots())
        .map(|t| {
            Ok(MetricsRow {
                slot: t,
                load_gb: eval.load_gb[t],
                energy_mwh: eval.energy_mwh[t],
                m: eval.m[t],
                ee_tb_per_mwh: energy_efficiency(eval.load_gb[t], eval.energy_mwh[t])?,
                ce_tb_per_tco2: 0.0,
            })
        })
        .collect::<Result<_, greencell::Error>>()?;
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    let summary = vec![
        format!("method,{}", args.method.label()),
        format!("mean_m,{}", eval.mean_m()),
        format!("total_energy_mwh,{}", eval.total_energy_mwh()),
        format!(
            "asleep_fraction,{}",
            schedule.total_asleep() as f64 / (scenario.cells.len() * scenario.n_slots()) as f64
        ),
    ];
    ioutil::write_csv(&out.join("summary.csv"), "metric,value", &summary)?;
    println!(
        "control run [{}]: mean M {:.4}, energy {:.3} MWh -> {}",
        args.method.label(),
        eval.mean_m(),
        eval.total_energy_mwh(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: ScenarioSource,

    #[arg(long, default_value_t = 40)]
    pub episodes: usize,

    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
}

pub fn train(args: TrainArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    let out = require_out(out)?;
    let scenario = args.source.resolve(seed)?;
    write_manifest(&out, "control-train", seed, &args)?;
    let cfg = TrainConfig {
        episodes: args.episodes,
        batch_size: args.batch_size,
        lr: args.lr,
        seed,
        ..TrainConfig::default()
    };
    let (policy, log) = rl::train(&scenario, &cfg)?;
    rl::save_policy(&policy, &out.join("checkpoint.bin"))?;
    rl::write_training_log(&out.join("training_log.csv"), &log)?;
    let first = log.first().expect("episodes >= 1");
    let last = log.last().expect("episodes >= 1");
    println!(
        "trained {} episodes: mean reward {:.1} W -> {:.1} W, checkpoint -> {}",
        cfg.episodes,
        first.mean_reward_w,
        last.mean_reward_w,
        out.join("checkpoint.bin").display()
    );
    Ok(ExitCode::SUCCESS)
}

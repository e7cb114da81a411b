use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::Args;
use serde::Serialize;

use greencell::ioutil;
use greencell::metrics::read_metrics_csv;

use super::common::{require_out, write_manifest};

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Simulate run directories to align; at least two.
    #[arg(long = "runs", required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
}

fn read_summary(dir: &PathBuf) -> Result<BTreeMap<String, String>> {
    let path = dir.join("summary.csv");
    let mut reader = ioutil::open_csv(&path)?;
    let mut map = BTreeMap::new();
    for rec in ioutil::csv_records(&mut reader, &path)? {
        let key: String = ioutil::parse_field(&rec, 0, &path, "metric")?;
        let value: String = ioutil::parse_field(&rec, 1, &path, "value")?;
        map.insert(key, value);
    }
    Ok(map)
}

pub fn run(args: CompareArgs, seed: u64, out: Option<PathBuf>) -> Result<ExitCode> {
    ensure!(args.runs.len() >= 2, "compare needs at least two --runs");
    let out = require_out(out)?;
    write_manifest(&out, "compare", seed, &args)?;

    let mut labels = Vec::new();
    let mut all_metrics = Vec::new();
    let mut summaries = Vec::new();
    for (i, dir) in args.runs.iter().enumerate() {
        let rows = read_metrics_csv(&dir.join("metrics.csv"))
            .with_context(|| format!("reading {}", dir.join("metrics.csv").display()))?;
        let summary = read_summary(dir)?;
        let method = summary.get("method").cloned().unwrap_or_else(|| "run".into());
        labels.push(format!("r{i}_{method}"));
        all_metrics.push(rows);
        summaries.push(summary);
    }
    let n_slots = all_metrics[0].len();
    for (i, rows) in all_metrics.iter().enumerate() {
        ensure!(
            rows.len() == n_slots,
            "{} has {} slots, first run has {n_slots}",
            args.runs[i].display(),
            rows.len()
        );
    }

    let mut header = String::from("slot");
    for label in &labels {
        header.push_str(&format!(",m_{label},ee_{label},ce_{label}"));
    }
    let rows: Vec<String> = (0..n_slots)
        .map(|t| {
            let mut line = format!("{t}");
            for rows in &all_metrics {
                let r = &rows[t];
                line.push_str(&format!(",{},{},{}", r.m, r.ee_tb_per_mwh, r.ce_tb_per_tco2));
            }
            line
        })
        .collect();
    ioutil::write_csv(&out.join("compare.csv"), &header, &rows)?;

    // Aggregate table with deltas against the first run.
    let field = |i: usize, key: &str| -> f64 {
        summaries[i]
            .get(key)
            .and_then(|v| v.parse::<f64>().ok())
            .unwrap_or(f64::NAN)
    };
    let mut summary_rows = Vec::new();
    for i in 0..labels.len() {
        let mean_m = field(i, "mean_m");
        let energy = field(i, "total_energy_mwh");
        let co2 = field(i, "total_co2_t");
        let ce = field(i, "ce_tb_per_tco2");
        summary_rows.push(format!(
            "{},{},{},{},{},{},{}",
            labels[i],
            mean_m,
            energy,
            co2,
            ce,
            mean_m - field(0, "mean_m"),
            co2 - field(0, "total_co2_t"),
        ));
    }
    ioutil::write_csv(
        &out.join("summary_compare.csv"),
        "run,mean_m,total_energy_mwh,total_co2_t,ce_tb_per_tco2,delta_m_vs_first,delta_co2_vs_first",
        &summary_rows,
    )?;

    // Controller ordering by mean misalignment, best first.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| field(a, "mean_m").partial_cmp(&field(b, "mean_m")).unwrap());
    let ordering = order.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>().join(" <= ");
    ioutil::write_csv(&out.join("ordering.csv"), "ordering_by_mean_m", &[ordering.clone()])?;

    println!("compare: {} runs, ordering {ordering} -> {}", labels.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

//! Pieces shared by the subcommands: run manifests with config hashes,
//! scenario resolution, controller construction, and per-station power
//! series.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use greencell::control::{greedy_controller, threshold_controller, GreedyOpts, SleepSchedule};
use greencell::energy::slot_bs_powers;
use greencell::ioutil;
use greencell::rl;
use greencell::scenario::{
    generate_scenario, load_scenario, LoadMatrix, Scenario, ScenarioConfig,
};

/// Writes `manifest.toml` for a run: tool version, command, seed, a hash of
/// the serialized config, and the config itself. No timestamps, so reruns
/// are byte-identical.
pub fn write_manifest<C: Serialize>(
    out: &Path,
    command: &str,
    seed: u64,
    config: &C,
) -> Result<String> {
    write_manifest_named(out, "manifest.toml", command, seed, config)
}

/// Same as [`write_manifest`] under a different file name, for runs whose
/// output directory already owns a `manifest.toml` (saved scenarios do).
pub fn write_manifest_named<C: Serialize>(
    out: &Path,
    file_name: &str,
    command: &str,
    seed: u64,
    config: &C,
) -> Result<String> {
    let config_toml = toml::to_string(config).context("serializing run config")?;
    let mut hasher = Sha256::new();
    hasher.update(command.as_bytes());
    hasher.update([0]);
    hasher.update(seed.to_le_bytes());
    hasher.update(config_toml.as_bytes());
    let hash = hex::encode(hasher.finalize());
    let manifest = format!(
        "tool = \"greencell\"\nversion = \"{}\"\ncommand = \"{}\"\nseed = {}\nconfig_hash = \"{}\"\n\n[config]\n{}",
        env!("CARGO_PKG_VERSION"),
        command,
        seed,
        hash,
        config_toml
    );
    ioutil::atomic_write(&out.join(file_name), manifest.as_bytes())?;
    Ok(hash)
}

pub fn require_out(out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.context("--out <DIR> is required for this command")?;
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    Ok(out)
}

/// Generation parameters for commands that can build their own scenario.
#[derive(Debug, Args, Serialize, Clone)]
pub struct ScenarioSource {
    /// Load this scenario directory instead of generating one.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    #[arg(long, default_value_t = 20)]
    pub n_4g: usize,

    #[arg(long, default_value_t = 10)]
    pub n_5g: usize,

    /// Fraction of 5G stations built with six cells.
    #[arg(long, default_value_t = 0.0)]
    pub six_cell_share: f64,

    #[arg(long, default_value_t = 7)]
    pub days: usize,

    /// Daily traffic peak of a 4G cell as a fraction of its capacity.
    #[arg(long, default_value_t = 0.55)]
    pub peak_frac_4g: f64,

    /// Daily traffic peak of a 5G cell as a fraction of its capacity.
    #[arg(long, default_value_t = 0.30)]
    pub peak_frac_5g: f64,

    /// Lognormal traffic noise sigma.
    #[arg(long, default_value_t = 0.15)]
    pub noise_sigma: f64,

    /// Same-generation stations within this distance share a grid (km).
    #[arg(long, default_value_t = 0.5)]
    pub grid_radius_km: f64,
}

impl ScenarioSource {
    pub fn config(&self, seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(seed, self.n_4g, self.n_5g, self.days);
        cfg.six_cell_share = self.six_cell_share;
        cfg.profile.peak_frac_4g = self.peak_frac_4g;
        cfg.profile.peak_frac_5g = self.peak_frac_5g;
        cfg.profile.noise_sigma = self.noise_sigma;
        cfg.grid_radius_km = self.grid_radius_km;
        cfg
    }

    pub fn resolve(&self, seed: u64) -> Result<Scenario> {
        match &self.scenario {
            Some(dir) => {
                load_scenario(dir).with_context(|| format!("loading scenario {}", dir.display()))
            }
            None => Ok(generate_scenario(&self.config(seed))?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    None,
    Threshold,
    Greedy,
    Deep,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Threshold => "threshold",
            Method::Greedy => "greedy",
            Method::Deep => "deep",
        }
    }
}

pub fn build_schedule(
    method: Method,
    s: &Scenario,
    traffic: &LoadMatrix,
    theta: f64,
    checkpoint: Option<&Path>,
) -> Result<SleepSchedule> {
    match method {
        Method::None => Ok(SleepSchedule::all_awake(s.cells.len(), s.n_slots())),
        Method::Threshold => Ok(threshold_controller(s, traffic, theta)?),
        Method::Greedy => Ok(greedy_controller(s, traffic, GreedyOpts::default())?),
        Method::Deep => {
            let Some(path) = checkpoint else {
                bail!(
                    "--method deep needs --checkpoint <FILE>; train one with \
                     `greencell control train --out <DIR>`"
                );
            };
            let policy = rl::load_policy(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            Ok(rl::infer_schedule(&policy.q1, s, traffic)?)
        }
    }
}

/// Per-station total power in watts, `[station][slot]`.
pub fn station_power_series_w(
    s: &Scenario,
    loads: &LoadMatrix,
    sched: &SleepSchedule,
) -> Result<Vec<Vec<f64>>> {
    let n_bs = s.base_stations.len();
    let mut series = vec![vec![0.0; s.n_slots()]; n_bs];
    for t in 0..s.n_slots() {
        let powers = slot_bs_powers(s, loads, sched, t)?;
        for (b, p) in powers.iter().enumerate() {
            series[b][t] = p.p_total_w;
        }
    }
    Ok(series)
}

/// Comma-separated float list for sweep flags.
pub fn parse_float_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{part}` in list"))
        })
        .collect()
}

//! Monte Carlo extrapolation from a reference city to arbitrary regions:
//! capacity and maximum energy by resampling stations, traffic from user
//! counts, energy through the misalignment identity, and carbon through a
//! grid emission factor.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::control::SleepSchedule;
use crate::energy::{self, BsKind};
use crate::error::{Error, Result};
use crate::ioutil;
use crate::scenario::{LoadMatrix, Scenario, SLOTS_PER_DAY};

/// Default grid emission factor, tCO2 per MWh.
pub const DEFAULT_GRID_EMISSION_FACTOR: f64 = 0.68;
pub const DEFAULT_MC_TRIALS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionProfile {
    pub name: String,
    pub n_4g_bs: usize,
    pub n_5g_bs: usize,
    pub n_users: u64,
    pub area_km2: f64,
}

/// One reference station: daily capacity and daily maximum energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationSample {
    pub kind: BsKind,
    pub capacity_gb_day: f64,
    pub e_max_mwh_day: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferencePool {
    pub four_g: Vec<StationSample>,
    pub five_g: Vec<StationSample>,
}

/// Builds the resampling pool from a scenario. Daily maximum energy is taken
/// at reference weather (outdoor = indoor), keeping the pool weather-free.
pub fn reference_pool_from_scenario(s: &Scenario) -> ReferencePool {
    let mut pool = ReferencePool::default();
    for bs in &s.base_stations {
        let capacity_gb_day: f64 = bs
            .cell_ids
            .iter()
            .map(|&cid| {
                let idx = s.cell_index(cid).expect("validated scenario");
                s.cells[idx].capacity_gb * SLOTS_PER_DAY as f64
            })
            .sum();
        let p_tx = energy::bs_p_tx_max_w(s, bs.kind);
        let p_total = p_tx + s.cooling.cooling_power_w(p_tx, s.cooling.t_indoor_c);
        let e_max_mwh_day = energy::watts_to_mwh_per_slot(p_total) * SLOTS_PER_DAY as f64;
        let sample = StationSample {
            kind: bs.kind,
            capacity_gb_day,
            e_max_mwh_day,
        };
        if bs.kind.is_5g() {
            pool.five_g.push(sample);
        } else {
            pool.four_g.push(sample);
        }
    }
    pool
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSums {
    pub capacity_gb_day: f64,
    pub e_max_mwh_day: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub n_trials: usize,
    pub capacity_gb_day: f64,
    pub e_max_mwh_day: f64,
    /// Empirical 2.5/97.5 percentile spread of the trial sums.
    pub spread_capacity: (f64, f64),
    pub spread_e_max: (f64, f64),
    /// 95% confidence interval of the Monte Carlo mean (standard error).
    pub mean_ci_capacity: (f64, f64),
    pub mean_ci_e_max: (f64, f64),
    pub trials: Vec<TrialSums>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Resamples stations with replacement per the region's counts and sums
/// capacity and maximum energy. Trials use independent RNG streams derived
/// from the master seed, so the estimate is deterministic and
/// parallelism-independent.
pub fn monte_carlo_capacity(
    region: &RegionProfile,
    pool: &ReferencePool,
    n_trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_trials < 2 {
        return Err(Error::invalid("n_trials must be >= 2"));
    }
    if region.n_4g_bs > 0 && pool.four_g.is_empty() {
        return Err(Error::invalid("region needs 4G stations but the 4G pool is empty"));
    }
    if region.n_5g_bs > 0 && pool.five_g.is_empty() {
        return Err(Error::invalid("region needs 5G stations but the 5G pool is empty"));
    }
    if region.n_4g_bs + region.n_5g_bs == 0 {
        return Err(Error::invalid("region has no stations"));
    }
    let trials: Vec<TrialSums> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha12Rng::seed_from_u64(
                seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let mut cap = 0.0;
            let mut e_max = 0.0;
            for _ in 0..region.n_4g_bs {
                let s = &pool.four_g[rng.random_range(0..pool.four_g.len())];
                cap += s.capacity_gb_day;
                e_max += s.e_max_mwh_day;
            }
            for _ in 0..region.n_5g_bs {
                let s = &pool.five_g[rng.random_range(0..pool.five_g.len())];
                cap += s.capacity_gb_day;
                e_max += s.e_max_mwh_day;
            }
            TrialSums {
                capacity_gb_day: cap,
                e_max_mwh_day: e_max,
            }
        })
        .collect();

    let caps: Vec<f64> = trials.iter().map(|t| t.capacity_gb_day).collect();
    let emaxs: Vec<f64> = trials.iter().map(|t| t.e_max_mwh_day).collect();
    let mut caps_sorted = caps.clone();
    caps_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut emax_sorted = emaxs.clone();
    emax_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (cap_mean, cap_sd) = mean_and_sd(&caps);
    let (emax_mean, emax_sd) = mean_and_sd(&emaxs);
    let half_cap = 1.96 * cap_sd / (n_trials as f64).sqrt();
    let half_emax = 1.96 * emax_sd / (n_trials as f64).sqrt();
    Ok(McEstimate {
        n_trials,
        capacity_gb_day: cap_mean,
        e_max_mwh_day: emax_mean,
        spread_capacity: (percentile(&caps_sorted, 2.5), percentile(&caps_sorted, 97.5)),
        spread_e_max: (percentile(&emax_sorted, 2.5), percentile(&emax_sorted, 97.5)),
        mean_ci_capacity: (cap_mean - half_cap, cap_mean + half_cap),
        mean_ci_e_max: (emax_mean - half_emax, emax_mean + half_emax),
        trials,
    })
}

/// Average daily traffic per user from the reference city's loads.
pub fn avg_traffic_per_user(l_4g_gb: f64, l_5g_gb: f64, n_users: u64) -> Result<f64> {
    if n_users == 0 {
        return Err(Error::invalid("n_users must be > 0"));
    }
    if !(l_4g_gb >= 0.0 && l_5g_gb >= 0.0) {
        return Err(Error::invalid("traffic loads must be >= 0"));
    }
    Ok((l_4g_gb + l_5g_gb) / n_users as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalEstimate {
    pub name: String,
    pub c_p_gb_day: f64,
    pub e_max_p_mwh_day: f64,
    pub l_p_gb_day: f64,
    pub l_tilde: f64,
    pub m_p: f64,
    pub ee_tb_per_mwh: f64,
    pub e_p_mwh_day: f64,
    pub co2_t_day: f64,
    /// 2.5/97.5 percentile interval of daily CO2 over the Monte Carlo trials.
    pub co2_ci: (f64, f64),
}

/// Regional energy and carbon from the Monte Carlo capacity estimate, the
/// per-user traffic, the misalignment factor, and the grid emission factor.
/// `E_p = E_max,p * (M_p + L~_p)`; CO2 follows with the emission factor.
pub fn regional_energy_and_carbon(
    region: &RegionProfile,
    mc: &McEstimate,
    avg_traffic_gb_per_user: f64,
    m_p: f64,
    gamma_co2_t_per_mwh: f64,
) -> Result<RegionalEstimate> {
    if !(0.0..=1.0).contains(&m_p) {
        return Err(Error::invalid(format!("m_p must be in [0, 1], got {m_p}")));
    }
    if !(gamma_co2_t_per_mwh > 0.0) {
        return Err(Error::invalid("gamma_co2 must be > 0"));
    }
    if !(mc.e_max_mwh_day > 0.0) {
        return Err(Error::invalid("Monte Carlo e_max must be > 0"));
    }
    let l_p = avg_traffic_gb_per_user * region.n_users as f64;
    let per_trial = |cap: f64, e_max: f64| -> Result<(f64, f64)> {
        let l_tilde = l_p / cap;
        if l_tilde > 1.0 {
            return Err(Error::invalid(format!(
                "region {}: traffic {l_p} GB/day exceeds capacity {cap} GB/day",
                region.name
            )));
        }
        let e = e_max * (m_p + l_tilde);
        Ok((l_tilde, e))
    };
    let (l_tilde, e_p) = per_trial(mc.capacity_gb_day, mc.e_max_mwh_day)?;
    let ee = if l_tilde == 0.0 {
        0.0
    } else {
        (mc.capacity_gb_day / 1000.0 / mc.e_max_mwh_day) / (1.0 + m_p / l_tilde)
    };
    let mut co2_trials: Vec<f64> = mc
        .trials
        .iter()
        .map(|t| {
            let (_, e) = per_trial(t.capacity_gb_day, t.e_max_mwh_day)?;
            Ok(e * gamma_co2_t_per_mwh)
        })
        .collect::<Result<_>>()?;
    co2_trials.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(RegionalEstimate {
        name: region.name.clone(),
        c_p_gb_day: mc.capacity_gb_day,
        e_max_p_mwh_day: mc.e_max_mwh_day,
        l_p_gb_day: l_p,
        l_tilde,
        m_p,
        ee_tb_per_mwh: ee,
        e_p_mwh_day: e_p,
        co2_t_day: e_p * gamma_co2_t_per_mwh,
        co2_ci: (
            percentile(&co2_trials, 2.5),
            percentile(&co2_trials, 97.5),
        ),
    })
}

/// Misalignment as a function of normalized load for one controller, built
/// by scaling the reference scenario's traffic and re-running the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MisalignmentCurve {
    /// (normalized load, mean misalignment), sorted by load.
    pub points: Vec<(f64, f64)>,
}

impl MisalignmentCurve {
    pub fn eval(&self, l_tilde: f64) -> f64 {
        let pts = &self.points;
        assert!(!pts.is_empty());
        if l_tilde <= pts[0].0 {
            return pts[0].1;
        }
        if l_tilde >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if l_tilde <= x1 {
                let frac = (l_tilde - x0) / (x1 - x0);
                return y0 + frac * (y1 - y0);
            }
        }
        pts[pts.len() - 1].1
    }
}

/// Scales the scenario's traffic so the network-normalized load hits each
/// target (clipped per cell at capacity), runs the controller, and records
/// the achieved load and mean misalignment.
pub fn build_m_curve<F>(
    s: &Scenario,
    traffic: &LoadMatrix,
    targets: &[f64],
    mut controller: F,
) -> Result<MisalignmentCurve>
where
    F: FnMut(&Scenario, &LoadMatrix) -> Result<SleepSchedule>,
{
    if targets.is_empty() {
        return Err(Error::invalid("need at least one target load"));
    }
    let capacity_total = s.total_capacity_gb() * s.n_slots() as f64;
    let current = traffic.total() / capacity_total;
    if !(current > 0.0) {
        return Err(Error::invalid("reference traffic is empty"));
    }
    let mut points = Vec::with_capacity(targets.len());
    for &target in targets {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::invalid(format!("target load {target} outside [0, 1]")));
        }
        let factor = target / current;
        let mut scaled = LoadMatrix::zeros(traffic.n_cells(), traffic.n_slots());
        for (i, cell) in s.cells.iter().enumerate() {
            for t in 0..traffic.n_slots() {
                scaled.set(i, t, (traffic.get(i, t) * factor).min(cell.capacity_gb));
            }
        }
        let achieved = scaled.total() / capacity_total;
        let sched = controller(s, &scaled)?;
        let eval = crate::control::evaluate_schedule(s, &scaled, &sched)?;
        points.push((achieved, eval.mean_m()));
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(MisalignmentCurve { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapRow {
    pub controller: String,
    pub m_p: f64,
    pub e_p_mwh_day: f64,
    pub co2_t_day: f64,
    /// CO2 above the pre-5G baseline carrying the same traffic, clamped at 0.
    pub additional_co2_t_day: f64,
}

/// Additional CO2 per controller relative to the pre-5G (4G only) network
/// carrying the same traffic.
pub fn trap_comparison(
    region: &RegionProfile,
    mc_all: &McEstimate,
    mc_pre5g: &McEstimate,
    avg_traffic_gb_per_user: f64,
    m_pre5g: f64,
    gamma_co2_t_per_mwh: f64,
    controllers: &[(String, f64)],
) -> Result<Vec<TrapRow>> {
    let pre = regional_energy_and_carbon(
        &RegionProfile {
            n_5g_bs: 0,
            ..region.clone()
        },
        mc_pre5g,
        avg_traffic_gb_per_user,
        m_pre5g,
        gamma_co2_t_per_mwh,
    )?;
    controllers
        .iter()
        .map(|(name, m_p)| {
            let est = regional_energy_and_carbon(
                region,
                mc_all,
                avg_traffic_gb_per_user,
                *m_p,
                gamma_co2_t_per_mwh,
            )?;
            Ok(TrapRow {
                controller: name.clone(),
                m_p: *m_p,
                e_p_mwh_day: est.e_p_mwh_day,
                co2_t_day: est.co2_t_day,
                additional_co2_t_day: (est.co2_t_day - pre.co2_t_day).max(0.0),
            })
        })
        .collect()
}

pub fn read_regions_csv(path: &Path) -> Result<Vec<RegionProfile>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut regions = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        regions.push(RegionProfile {
            name: ioutil::parse_field(&rec, 0, path, "name")?,
            n_4g_bs: ioutil::parse_field(&rec, 1, path, "n_4g")?,
            n_5g_bs: ioutil::parse_field(&rec, 2, path, "n_5g")?,
            n_users: ioutil::parse_field(&rec, 3, path, "n_users")?,
            area_km2: ioutil::parse_field(&rec, 4, path, "area_km2")?,
        });
    }
    Ok(regions)
}

pub fn write_estimates_csv(path: &Path, rows: &[RegionalEstimate]) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.c_p_gb_day,
                r.e_max_p_mwh_day,
                r.l_p_gb_day,
                r.l_tilde,
                r.m_p,
                r.ee_tb_per_mwh,
                r.e_p_mwh_day,
                r.co2_t_day,
                r.co2_ci.0,
                r.co2_ci.1
            )
        })
        .collect();
    ioutil::write_csv(
        path,
        "name,c_p_gb_day,e_max_mwh_day,l_p_gb_day,l_tilde,m_p,ee_tb_per_mwh,e_p_mwh_day,co2_t_day,co2_ci_low,co2_ci_high",
        &lines,
    )
}

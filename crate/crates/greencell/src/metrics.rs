//! Misalignment, energy efficiency, carbon efficiency, and the
//! efficiency-trap accounting.
//!
//! The misalignment factor is the gap between normalized energy and
//! normalized load: `m = E/E_max - L/C`. For the affine power model it sits
//! in [0, 1], is zero when energy tracks traffic exactly, and shrinks as the
//! network fills up.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ioutil;

pub fn gb_to_tb(gb: f64) -> f64 {
    gb / 1000.0
}

/// Misalignment factor `m = energy/e_max - load/capacity`.
pub fn misalignment(energy_mwh: f64, e_max_mwh: f64, load_gb: f64, capacity_gb: f64) -> Result<f64> {
    if !(e_max_mwh > 0.0) {
        return Err(Error::invalid(format!("e_max must be > 0, got {e_max_mwh}")));
    }
    if !(capacity_gb > 0.0) {
        return Err(Error::invalid(format!("capacity must be > 0, got {capacity_gb}")));
    }
    if !(0.0..=e_max_mwh * (1.0 + 1e-9)).contains(&energy_mwh) {
        return Err(Error::invalid(format!(
            "energy {energy_mwh} MWh outside [0, e_max = {e_max_mwh}]"
        )));
    }
    if !(0.0..=capacity_gb * (1.0 + 1e-9)).contains(&load_gb) {
        return Err(Error::invalid(format!(
            "load {load_gb} GB outside [0, capacity = {capacity_gb}]"
        )));
    }
    Ok(energy_mwh / e_max_mwh - load_gb / capacity_gb)
}

/// Energy efficiency in TByte/MWh. Zero load yields zero by convention so
/// that time-series aggregation stays total.
pub fn energy_efficiency(load_gb: f64, energy_mwh: f64) -> Result<f64> {
    if !(energy_mwh > 0.0) {
        return Err(Error::invalid(format!("energy must be > 0, got {energy_mwh}")));
    }
    if load_gb == 0.0 {
        return Ok(0.0);
    }
    if !(load_gb > 0.0) {
        return Err(Error::invalid(format!("load must be >= 0, got {load_gb}")));
    }
    Ok(gb_to_tb(load_gb) / energy_mwh)
}

/// The same efficiency through the identity
/// `eta_desired / (1 + M / L~)` with `eta_desired = C / E_max`.
/// Equal to the direct ratio whenever the load is positive.
pub fn efficiency_via_identity(
    load_gb: f64,
    capacity_gb: f64,
    energy_mwh: f64,
    e_max_mwh: f64,
) -> Result<f64> {
    let m = misalignment(energy_mwh, e_max_mwh, load_gb, capacity_gb)?;
    if load_gb == 0.0 {
        return Ok(0.0);
    }
    let l_tilde = load_gb / capacity_gb;
    let desired = gb_to_tb(capacity_gb) / e_max_mwh;
    Ok(desired / (1.0 + m / l_tilde))
}

/// Carbon efficiency in TByte per tonne of CO2.
pub fn carbon_efficiency(load_gb: f64, co2_t: f64) -> Result<f64> {
    if !(co2_t > 0.0) {
        return Err(Error::invalid(format!("co2 must be > 0, got {co2_t}")));
    }
    if load_gb == 0.0 {
        return Ok(0.0);
    }
    if !(load_gb > 0.0) {
        return Err(Error::invalid(format!("load must be >= 0, got {load_gb}")));
    }
    Ok(gb_to_tb(load_gb) / co2_t)
}

/// Extra CO2 emitted to carry the same traffic while carbon efficiency sits
/// below the baseline: per slot, `max(0, traffic/ce_with - traffic/ce_baseline)`
/// summed over the series. Slots with zero traffic contribute nothing.
pub fn efficiency_trap_area(
    ce_with_series: &[f64],
    ce_baseline_series: &[f64],
    traffic_tb_series: &[f64],
) -> Result<f64> {
    if ce_with_series.len() != ce_baseline_series.len()
        || ce_with_series.len() != traffic_tb_series.len()
    {
        return Err(Error::invalid("trap-area series must have equal length"));
    }
    let mut extra_t = 0.0;
    for (i, ((&ce_with, &ce_base), &tb)) in ce_with_series
        .iter()
        .zip(ce_baseline_series)
        .zip(traffic_tb_series)
        .enumerate()
    {
        if tb == 0.0 {
            continue;
        }
        if !(tb > 0.0) {
            return Err(Error::invalid(format!("slot {i}: traffic {tb} is negative")));
        }
        if !(ce_with > 0.0) || !(ce_base > 0.0) {
            return Err(Error::invalid(format!(
                "slot {i}: carbon efficiency must be > 0 where traffic flows (with={ce_with}, baseline={ce_base})"
            )));
        }
        extra_t += (tb / ce_with - tb / ce_base).max(0.0);
    }
    Ok(extra_t)
}

/// Load, energy, and the derived efficiency figures for one network state.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencySnapshot {
    pub load_gb: f64,
    pub capacity_gb: f64,
    pub energy_mwh: f64,
    pub e_max_mwh: f64,
    pub m: f64,
    pub ee_tb_per_mwh: f64,
    /// Filled once carbon is attached.
    pub ce_tb_per_tco2: Option<f64>,
}

impl EfficiencySnapshot {
    pub fn new(load_gb: f64, capacity_gb: f64, energy_mwh: f64, e_max_mwh: f64) -> Result<Self> {
        let m = misalignment(energy_mwh, e_max_mwh, load_gb, capacity_gb)?;
        let ee = if energy_mwh > 0.0 {
            energy_efficiency(load_gb, energy_mwh)?
        } else {
            0.0
        };
        Ok(EfficiencySnapshot {
            load_gb,
            capacity_gb,
            energy_mwh,
            e_max_mwh,
            m,
            ee_tb_per_mwh: ee,
            ce_tb_per_tco2: None,
        })
    }

    pub fn with_carbon(mut self, co2_t: f64) -> Result<Self> {
        self.ce_tb_per_tco2 = Some(carbon_efficiency(self.load_gb, co2_t)?);
        Ok(self)
    }
}

/// One row of the per-slot metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub slot: usize,
    pub load_gb: f64,
    pub energy_mwh: f64,
    pub m: f64,
    pub ee_tb_per_mwh: f64,
    pub ce_tb_per_tco2: f64,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.slot, r.load_gb, r.energy_mwh, r.m, r.ee_tb_per_mwh, r.ce_tb_per_tco2
            )
        })
        .collect();
    ioutil::write_csv(path, "slot,load_gb,energy_mwh,m,ee,ce", &lines)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut rows = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        rows.push(MetricsRow {
            slot: ioutil::parse_field(&rec, 0, path, "slot")?,
            load_gb: ioutil::parse_field(&rec, 1, path, "load_gb")?,
            energy_mwh: ioutil::parse_field(&rec, 2, path, "energy_mwh")?,
            m: ioutil::parse_field(&rec, 3, path, "m")?,
            ee_tb_per_mwh: ioutil::parse_field(&rec, 4, path, "ee")?,
            ce_tb_per_tco2: ioutil::parse_field(&rec, 5, path, "ce")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn misalignment_examples() {
        // Normalized energy 0.42 at 1% load.
        let m = misalignment(0.42, 1.0, 0.01, 1.0).unwrap();
        assert_abs_diff_eq!(m, 0.41, epsilon = 1e-12);
        assert_eq!(misalignment(3.0, 3.0, 5.0, 5.0).unwrap(), 0.0);
        assert!(misalignment(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(misalignment(2.0, 1.0, 0.0, 1.0).is_err());
        assert!(misalignment(0.5, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn efficiency_conventions() {
        assert_eq!(energy_efficiency(0.0, 5.0).unwrap(), 0.0);
        assert!(energy_efficiency(1.0, 0.0).is_err());
        // 2000 GB over 1 MWh = 2 TByte/MWh.
        assert_abs_diff_eq!(energy_efficiency(2000.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_misalignment_means_desired_efficiency() {
        // With m = 0, energy = e_max * l_tilde, so ee = C/E_max for any load.
        let capacity = 4000.0;
        let e_max = 2.0;
        for l_tilde in [0.05, 0.4, 1.0] {
            let load = capacity * l_tilde;
            let energy = e_max * l_tilde;
            let ee = energy_efficiency(load, energy).unwrap();
            assert_relative_eq!(ee, gb_to_tb(capacity) / e_max, max_relative = 1e-12);
        }
    }

    #[test]
    fn identity_matches_direct_ratio() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let capacity = rng.random_range(100.0..10_000.0);
            let e_max = rng.random_range(0.1..50.0);
            let fixed_frac = rng.random_range(0.05..0.95);
            let l_tilde = rng.random_range(1e-6..1.0f64);
            // Affine energy curve: E = fixed + (1-fixed) * l_tilde, normalized.
            let energy = e_max * (fixed_frac + (1.0 - fixed_frac) * l_tilde);
            let load = capacity * l_tilde;
            let direct = energy_efficiency(load, energy).unwrap();
            let via = efficiency_via_identity(load, capacity, energy, e_max).unwrap();
            assert_relative_eq!(direct, via, max_relative = 1e-12);
        }
    }

    #[test]
    fn carbon_efficiency_behaviour() {
        assert_eq!(carbon_efficiency(0.0, 2.0).unwrap(), 0.0);
        let base = carbon_efficiency(1000.0, 2.0).unwrap();
        let doubled = carbon_efficiency(2000.0, 2.0).unwrap();
        assert_relative_eq!(doubled, 2.0 * base, max_relative = 1e-12);
        assert!(carbon_efficiency(1.0, 0.0).is_err());
    }

    #[test]
    fn trap_area_zero_cases() {
        let traffic = vec![1.0, 2.0, 3.0];
        let base = vec![2.0, 2.0, 2.0];
        assert_eq!(efficiency_trap_area(&base, &base, &traffic).unwrap(), 0.0);
        let better = vec![3.0, 2.5, 4.0];
        assert_eq!(efficiency_trap_area(&better, &base, &traffic).unwrap(), 0.0);
    }

    #[test]
    fn trap_area_step_drop_matches_direct_summation() {
        // CE drops from 2.5 to 1.25 for the middle stretch of the series.
        let n = 24;
        let traffic: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let base = vec![2.5; n];
        let with: Vec<f64> = (0..n).map(|i| if (8..16).contains(&i) { 1.25 } else { 2.5 }).collect();
        let area = efficiency_trap_area(&with, &base, &traffic).unwrap();
        let mut expected = 0.0;
        for i in 8..16 {
            expected += traffic[i] / 1.25 - traffic[i] / 2.5;
        }
        assert_relative_eq!(area, expected, max_relative = 1e-12);
        assert!(area > 0.0);
    }

    #[test]
    fn misalignment_nonincreasing_in_load_for_affine_model() {
        let e_max = 10.0;
        let fixed = 4.2;
        let capacity = 5000.0;
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let l_tilde = i as f64 / 100.0;
            let energy = fixed + (e_max - fixed) * l_tilde;
            let m = misalignment(energy, e_max, capacity * l_tilde, capacity).unwrap();
            assert!((0.0..=1.0).contains(&m));
            assert!(m <= prev + 1e-15);
            prev = m;
        }
        assert_abs_diff_eq!(prev, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn snapshot_bundles_the_derived_figures() {
        let snap = EfficiencySnapshot::new(500.0, 2000.0, 1.5, 2.0).unwrap();
        assert_abs_diff_eq!(snap.m, 1.5 / 2.0 - 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(snap.ee_tb_per_mwh, 0.5 / 1.5, epsilon = 1e-12);
        assert_eq!(snap.ce_tb_per_tco2, None);
        let with = snap.with_carbon(0.25).unwrap();
        assert_abs_diff_eq!(with.ce_tb_per_tco2.unwrap(), 2.0, epsilon = 1e-12);
        assert!(EfficiencySnapshot::new(500.0, 100.0, 1.5, 2.0).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let rows = vec![
            MetricsRow { slot: 0, load_gb: 12.5, energy_mwh: 0.4, m: 0.31, ee_tb_per_mwh: 0.03125, ce_tb_per_tco2: 0.5 },
            MetricsRow { slot: 1, load_gb: 0.0, energy_mwh: 0.39, m: 0.4, ee_tb_per_mwh: 0.0, ce_tb_per_tco2: 0.0 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }
}

//! Base-station power models.
//!
//! Per-cell RRU power is affine in transmit power, which is affine in the
//! PRB usage ratio; BBU power is a per-type constant; cooling follows a
//! COP/conductance model driven by communication heat load and outdoor
//! temperature. A cell in sleep mode draws a constant RRU power regardless
//! of traffic.

use std::ops::Range;
use std::path::Path;

use crate::control::SleepSchedule;
use crate::error::{Error, Result};
use crate::ioutil;
use crate::scenario::{LoadMatrix, Scenario};

/// Half-hour slot length in hours.
pub const SLOT_HOURS: f64 = 0.5;

/// Instantaneous watts sustained for one slot, expressed in MWh.
pub fn watts_to_mwh_per_slot(watts: f64) -> f64 {
    watts * SLOT_HOURS / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BsKind {
    FourG3Cell,
    FiveG3Cell,
    FiveG6Cell,
}

impl BsKind {
    pub const ALL: [BsKind; 3] = [BsKind::FourG3Cell, BsKind::FiveG3Cell, BsKind::FiveG6Cell];

    pub fn cell_count(self) -> usize {
        match self {
            BsKind::FourG3Cell | BsKind::FiveG3Cell => 3,
            BsKind::FiveG6Cell => 6,
        }
    }

    pub fn is_5g(self) -> bool {
        !matches!(self, BsKind::FourG3Cell)
    }

    pub fn label(self) -> &'static str {
        match self {
            BsKind::FourG3Cell => "4g-3cell",
            BsKind::FiveG3Cell => "5g-3cell",
            BsKind::FiveG6Cell => "5g-6cell",
        }
    }

    pub fn parse_label(s: &str) -> Option<BsKind> {
        match s {
            "4g-3cell" => Some(BsKind::FourG3Cell),
            "5g-3cell" => Some(BsKind::FiveG3Cell),
            "5g-6cell" => Some(BsKind::FiveG6Cell),
            _ => None,
        }
    }

    fn idx(self) -> usize {
        match self {
            BsKind::FourG3Cell => 0,
            BsKind::FiveG3Cell => 1,
            BsKind::FiveG6Cell => 2,
        }
    }
}

impl std::fmt::Display for BsKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Coefficients of the per-cell power model.
///
/// Awake RRU power is `alpha * p_trans + gamma_w`; transmit power is
/// `min(beta_w * prb + sigma_w, p_trans_max_w)`. A sleeping cell draws
/// `sleep_rru_w` regardless of traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCoeffs {
    pub alpha: f64,
    pub gamma_w: f64,
    pub beta_w: f64,
    pub sigma_w: f64,
    pub p_trans_max_w: f64,
    pub sleep_rru_w: f64,
}

impl EnergyCoeffs {
    /// Shipped default coefficients per base-station type. The 5G fixed
    /// circuit offset is set at 3x the 4G one (measured range is 2-7x) and
    /// the transmit offset of 5G types is zero.
    pub fn default_for(kind: BsKind) -> EnergyCoeffs {
        match kind {
            BsKind::FourG3Cell => EnergyCoeffs {
                alpha: 2.8,
                gamma_w: 180.0,
                beta_w: 250.0,
                sigma_w: 20.0,
                p_trans_max_w: 300.0,
                sleep_rru_w: 126.0,
            },
            BsKind::FiveG3Cell => EnergyCoeffs {
                alpha: 2.5,
                gamma_w: 540.0,
                beta_w: 300.0,
                sigma_w: 0.0,
                p_trans_max_w: 300.0,
                sleep_rru_w: 78.0,
            },
            BsKind::FiveG6Cell => EnergyCoeffs {
                alpha: 2.4,
                gamma_w: 520.0,
                beta_w: 300.0,
                sigma_w: 0.0,
                p_trans_max_w: 300.0,
                sleep_rru_w: 84.0,
            },
        }
    }

    pub fn validate(&self, kind: Option<BsKind>) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.gamma_w >= 0.0) {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma_w)));
        }
        if !(self.beta_w > 0.0) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta_w)));
        }
        if !(self.sigma_w >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {}", self.sigma_w)));
        }
        if !(self.p_trans_max_w > 0.0 && self.p_trans_max_w <= 300.0) {
            return Err(Error::invalid(format!(
                "p_trans_max must be in (0, 300] W, got {}",
                self.p_trans_max_w
            )));
        }
        if !(self.sleep_rru_w >= 0.0) {
            return Err(Error::invalid(format!(
                "sleep_rru must be >= 0, got {}",
                self.sleep_rru_w
            )));
        }
        if let Some(kind) = kind {
            if kind.is_5g() && self.sigma_w != 0.0 {
                return Err(Error::invalid(format!(
                    "sigma must be 0 for 5G types, got {} for {}",
                    self.sigma_w, kind
                )));
            }
        }
        Ok(())
    }
}

/// BBU power per base-station type, constant with respect to traffic.
pub const BBU_4G_3CELL_W: f64 = 89.3771;
pub const BBU_5G_3CELL_W: f64 = 305.0409;
pub const BBU_5G_6CELL_W: f64 = 499.6484;

#[derive(Debug, Clone, PartialEq)]
pub struct BbuTable {
    watts: [f64; 3],
}

impl Default for BbuTable {
    fn default() -> Self {
        BbuTable {
            watts: [BBU_4G_3CELL_W, BBU_5G_3CELL_W, BBU_5G_6CELL_W],
        }
    }
}

impl BbuTable {
    pub fn power_w(&self, kind: BsKind) -> f64 {
        self.watts[kind.idx()]
    }

    pub fn set(&mut self, kind: BsKind, watts: f64) {
        self.watts[kind.idx()] = watts;
    }
}

/// Parametric cooling model: the communication subsystem is an electric
/// heat source in a small equipment room (20 m^2 reference), the envelope
/// leaks `ua_w_per_k` per kelvin of outdoor-indoor difference, and the
/// air conditioner removes the net heat at a fixed COP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingParams {
    pub cop: f64,
    pub ua_w_per_k: f64,
    pub t_indoor_c: f64,
}

impl Default for CoolingParams {
    fn default() -> Self {
        CoolingParams {
            cop: 3.0,
            ua_w_per_k: 120.0,
            t_indoor_c: 20.0,
        }
    }
}

impl CoolingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cop > 0.0) {
            return Err(Error::invalid(format!("cop must be > 0, got {}", self.cop)));
        }
        if !(self.ua_w_per_k >= 0.0) {
            return Err(Error::invalid(format!(
                "ua_w_per_k must be >= 0, got {}",
                self.ua_w_per_k
            )));
        }
        Ok(())
    }

    /// Cooling electricity for a given communication heat load and weather.
    pub fn cooling_power_w(&self, p_tx_w: f64, outdoor_temp_c: f64) -> f64 {
        let heat_w = p_tx_w + self.ua_w_per_k * (outdoor_temp_c - self.t_indoor_c);
        heat_w.max(0.0) / self.cop
    }
}

fn check_prb(prb: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&prb) || !prb.is_finite() {
        return Err(Error::invalid(format!("prb ratio must be in [0, 1], got {prb}")));
    }
    Ok(())
}

/// Transmit power at a PRB usage ratio, capped at `p_trans_max_w`.
pub fn transmit_power_w(coeffs: &EnergyCoeffs, prb: f64) -> Result<f64> {
    check_prb(prb)?;
    Ok((coeffs.beta_w * prb + coeffs.sigma_w).min(coeffs.p_trans_max_w))
}

/// RRU power. A sleeping cell draws the constant sleep power regardless of
/// the (arbitrary) prb argument; an awake cell follows the affine chain.
pub fn rru_power_w(coeffs: &EnergyCoeffs, prb: f64, asleep: bool) -> Result<f64> {
    if asleep {
        return Ok(coeffs.sleep_rru_w);
    }
    Ok(coeffs.alpha * transmit_power_w(coeffs, prb)? + coeffs.gamma_w)
}

/// PRB usage ratio approximated as load/capacity.
///
/// A hair of slack (1e-9 relative) absorbs round-off from proportional
/// redistribution; anything beyond that means the caller failed to
/// redistribute first.
pub fn prb_ratio_from_load(load_gb: f64, capacity_gb: f64) -> Result<f64> {
    if !(capacity_gb > 0.0) {
        return Err(Error::invalid(format!("capacity must be > 0, got {capacity_gb}")));
    }
    if !(load_gb >= 0.0) {
        return Err(Error::invalid(format!("load must be >= 0, got {load_gb}")));
    }
    if load_gb > capacity_gb * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "load {load_gb} GB exceeds capacity {capacity_gb} GB; redistribute first"
        )));
    }
    Ok((load_gb / capacity_gb).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsPowerBreakdown {
    pub p_tx_w: f64,
    pub p_cooling_w: f64,
    pub p_total_w: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CellPowerInput {
    pub coeffs: EnergyCoeffs,
    pub prb: f64,
    pub asleep: bool,
}

/// Total base-station power: BBU + per-cell RRU, plus cooling on top.
pub fn base_station_power(
    kind: BsKind,
    cells: &[CellPowerInput],
    outdoor_temp_c: f64,
    cooling: &CoolingParams,
    bbu: &BbuTable,
) -> Result<BsPowerBreakdown> {
    if cells.len() != kind.cell_count() {
        return Err(Error::invalid(format!(
            "{} expects {} cells, got {}",
            kind,
            kind.cell_count(),
            cells.len()
        )));
    }
    cooling.validate()?;
    let mut p_tx_w = bbu.power_w(kind);
    for cell in cells {
        p_tx_w += rru_power_w(&cell.coeffs, cell.prb, cell.asleep)?;
    }
    let p_cooling_w = cooling.cooling_power_w(p_tx_w, outdoor_temp_c);
    Ok(BsPowerBreakdown {
        p_tx_w,
        p_cooling_w,
        p_total_w: p_tx_w + p_cooling_w,
    })
}

/// Per-slot network energy in MWh together with the per-slot maximum
/// (all cells awake at full PRB usage, same weather).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub start_slot: usize,
    pub energy_mwh: Vec<f64>,
    pub e_max_mwh: Vec<f64>,
}

impl EnergySeries {
    pub fn total_mwh(&self) -> f64 {
        self.energy_mwh.iter().sum()
    }

    pub fn total_e_max_mwh(&self) -> f64 {
        self.e_max_mwh.iter().sum()
    }
}

/// Power breakdown of every base station at one slot, in scenario order.
pub fn slot_bs_powers(
    s: &Scenario,
    loads: &LoadMatrix,
    schedule: &SleepSchedule,
    slot: usize,
) -> Result<Vec<BsPowerBreakdown>> {
    let temp_c = s.weather.temp_c(slot)?;
    let mut out = Vec::with_capacity(s.base_stations.len());
    for bs in &s.base_stations {
        let mut inputs = Vec::with_capacity(bs.cell_ids.len());
        for &cell_id in &bs.cell_ids {
            let idx = s.cell_index(cell_id)?;
            let cell = &s.cells[idx];
            let asleep = schedule.is_asleep(idx, slot);
            let prb = if asleep {
                0.0
            } else {
                prb_ratio_from_load(loads.get(idx, slot), cell.capacity_gb)?
            };
            inputs.push(CellPowerInput {
                coeffs: *s.coeffs.coeffs(bs.kind),
                prb,
                asleep,
            });
        }
        out.push(base_station_power(
            bs.kind,
            &inputs,
            temp_c,
            &s.cooling,
            s.coeffs.bbu(),
        )?);
    }
    Ok(out)
}

/// Maximum communication power (all cells awake, prb = 1) of one station.
pub fn bs_p_tx_max_w(s: &Scenario, kind: BsKind) -> f64 {
    let coeffs = s.coeffs.coeffs(kind);
    let p_trans = (coeffs.beta_w + coeffs.sigma_w).min(coeffs.p_trans_max_w);
    let rru = coeffs.alpha * p_trans + coeffs.gamma_w;
    s.coeffs.bbu().power_w(kind) + kind.cell_count() as f64 * rru
}

/// Network energy series for a slot range under the given (already
/// redistributed) loads and sleep schedule.
pub fn network_energy(
    s: &Scenario,
    loads: &LoadMatrix,
    schedule: &SleepSchedule,
    slots: Range<usize>,
) -> Result<EnergySeries> {
    if slots.end > s.n_slots() {
        return Err(Error::invalid(format!(
            "slot range end {} exceeds scenario slots {}",
            slots.end,
            s.n_slots()
        )));
    }
    let p_tx_max: Vec<f64> = s
        .base_stations
        .iter()
        .map(|bs| bs_p_tx_max_w(s, bs.kind))
        .collect();
    let mut energy_mwh = Vec::with_capacity(slots.len());
    let mut e_max_mwh = Vec::with_capacity(slots.len());
    for t in slots.clone() {
        let temp_c = s.weather.temp_c(t)?;
        let powers = slot_bs_powers(s, loads, schedule, t)?;
        let total_w: f64 = powers.iter().map(|p| p.p_total_w).sum();
        let max_w: f64 = p_tx_max
            .iter()
            .map(|&ptx| ptx + s.cooling.cooling_power_w(ptx, temp_c))
            .sum();
        energy_mwh.push(watts_to_mwh_per_slot(total_w));
        e_max_mwh.push(watts_to_mwh_per_slot(max_w));
    }
    Ok(EnergySeries {
        start_slot: slots.start,
        energy_mwh,
        e_max_mwh,
    })
}

/// Kind-indexed table of energy coefficients and BBU power. Scenarios carry
/// one of these; the CSV override file replaces any subset of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTable {
    coeffs: [EnergyCoeffs; 3],
    bbu: BbuTable,
}

impl Default for CoeffTable {
    fn default() -> Self {
        CoeffTable {
            coeffs: [
                EnergyCoeffs::default_for(BsKind::FourG3Cell),
                EnergyCoeffs::default_for(BsKind::FiveG3Cell),
                EnergyCoeffs::default_for(BsKind::FiveG6Cell),
            ],
            bbu: BbuTable::default(),
        }
    }
}

impl CoeffTable {
    pub fn coeffs(&self, kind: BsKind) -> &EnergyCoeffs {
        &self.coeffs[kind.idx()]
    }

    pub fn set_coeffs(&mut self, kind: BsKind, coeffs: EnergyCoeffs) {
        self.coeffs[kind.idx()] = coeffs;
    }

    pub fn bbu(&self) -> &BbuTable {
        &self.bbu
    }

    pub fn set_bbu(&mut self, kind: BsKind, watts: f64) {
        self.bbu.set(kind, watts);
    }

    pub fn validate(&self) -> Result<()> {
        for kind in BsKind::ALL {
            self.coeffs(kind).validate(Some(kind))?;
            if !(self.bbu.power_w(kind) >= 0.0) {
                return Err(Error::invalid(format!("bbu power for {kind} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<String> = BsKind::ALL
            .iter()
            .map(|&k| {
                let c = self.coeffs(k);
                format!(
                    "{},{},{},{},{},{},{},{}",
                    k.label(),
                    c.alpha,
                    c.gamma_w,
                    c.beta_w,
                    c.sigma_w,
                    c.p_trans_max_w,
                    c.sleep_rru_w,
                    self.bbu.power_w(k)
                )
            })
            .collect();
        ioutil::write_csv(
            path,
            "kind,alpha,gamma,beta,sigma,p_trans_max,sleep_rru_w,bbu_w",
            &rows,
        )
    }

    pub fn read_csv(path: &Path) -> Result<CoeffTable> {
        let mut table = CoeffTable::default();
        let mut reader = ioutil::open_csv(path)?;
        for rec in ioutil::csv_records(&mut reader, path)? {
            let line = ioutil::record_line(&rec);
            let kind_raw: String = ioutil::parse_field(&rec, 0, path, "kind")?;
            let kind = BsKind::parse_label(&kind_raw)
                .ok_or_else(|| Error::parse(path, line, format!("unknown kind `{kind_raw}`")))?;
            let coeffs = EnergyCoeffs {
                alpha: ioutil::parse_field(&rec, 1, path, "alpha")?,
                gamma_w: ioutil::parse_field(&rec, 2, path, "gamma")?,
                beta_w: ioutil::parse_field(&rec, 3, path, "beta")?,
                sigma_w: ioutil::parse_field(&rec, 4, path, "sigma")?,
                p_trans_max_w: ioutil::parse_field(&rec, 5, path, "p_trans_max")?,
                sleep_rru_w: ioutil::parse_field(&rec, 6, path, "sleep_rru_w")?,
            };
            table.set_coeffs(kind, coeffs);
            table.set_bbu(kind, ioutil::parse_field(&rec, 7, path, "bbu_w")?);
        }
        table.validate()?;
        Ok(table)
    }
}

/// Reference desired energy efficiencies (TByte/MWh) used to calibrate
/// default cell capacities so that C / E_max matches published values.
pub const DESIRED_EE_4G_TB_PER_MWH: f64 = 3.01;
pub const DESIRED_EE_5G_TB_PER_MWH: f64 = 6.29;

/// Per-cell capacity (GByte per half-hour) that makes a default station of
/// this kind hit its target desired efficiency at reference weather
/// (outdoor = indoor temperature).
pub fn calibrated_capacity_gb(kind: BsKind, table: &CoeffTable, cooling: &CoolingParams) -> f64 {
    let coeffs = table.coeffs(kind);
    let p_trans = (coeffs.beta_w + coeffs.sigma_w).min(coeffs.p_trans_max_w);
    let rru = coeffs.alpha * p_trans + coeffs.gamma_w;
    let p_tx = table.bbu().power_w(kind) + kind.cell_count() as f64 * rru;
    let p_total = p_tx + cooling.cooling_power_w(p_tx, cooling.t_indoor_c);
    let target_tb_per_mwh = if kind.is_5g() {
        DESIRED_EE_5G_TB_PER_MWH
    } else {
        DESIRED_EE_4G_TB_PER_MWH
    };
    // target = (n_cells * cap_gb / 1000) / (p_total * 0.5 / 1e6) per slot
    target_tb_per_mwh * p_total * SLOT_HOURS / 1000.0 / kind.cell_count() as f64
}

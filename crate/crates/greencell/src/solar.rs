//! Parametric PV generation per station, net-zero accounting, curtailment,
//! and the levelized cost of carbon abatement.
//!
//! Irradiance is a Haurwitz clear-sky model over standard solar geometry:
//! `GHI = 1098 * cos(z) * exp(-0.059 / cos(z))` for sun above the horizon,
//! optionally scaled by a constant cloud factor.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ioutil;
use crate::scenario::{BsId, SLOTS_PER_DAY};

const SOLAR_NOON_HOUR: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvConfig {
    pub panel_area_m2: f64,
    pub efficiency: f64,
    pub latitude_deg: f64,
    pub derate: f64,
    /// Constant attenuation for average cloudiness; 1.0 is clear sky.
    pub cloud_factor: f64,
}

impl Default for PvConfig {
    fn default() -> Self {
        PvConfig {
            panel_area_m2: 20.0,
            efficiency: 0.20,
            latitude_deg: 28.68,
            derate: 0.85,
            cloud_factor: 1.0,
        }
    }
}

impl PvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.panel_area_m2 >= 0.0) {
            return Err(Error::invalid("panel area must be >= 0"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid("efficiency must be in (0, 1]"));
        }
        if !(self.derate > 0.0 && self.derate <= 1.0) {
            return Err(Error::invalid("derate must be in (0, 1]"));
        }
        if !(self.cloud_factor >= 0.0 && self.cloud_factor <= 1.0) {
            return Err(Error::invalid("cloud factor must be in [0, 1]"));
        }
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(Error::invalid("latitude must be in [-90, 90]"));
        }
        Ok(())
    }
}

/// Solar declination for the day of year (1..=365), radians.
pub fn solar_declination_rad(day_of_year: usize) -> f64 {
    (23.45f64).to_radians() * (std::f64::consts::TAU * (284 + day_of_year) as f64 / 365.0).sin()
}

/// Cosine of the solar zenith angle at a local solar hour.
pub fn cos_zenith(latitude_rad: f64, declination_rad: f64, solar_hour: f64) -> f64 {
    let hour_angle = (15.0 * (solar_hour - SOLAR_NOON_HOUR)).to_radians();
    latitude_rad.sin() * declination_rad.sin()
        + latitude_rad.cos() * declination_rad.cos() * hour_angle.cos()
}

/// Haurwitz clear-sky global horizontal irradiance, W/m^2.
pub fn clear_sky_ghi(cos_z: f64) -> f64 {
    if cos_z <= 0.0 {
        0.0
    } else {
        1098.0 * cos_z * (-0.059 / cos_z).exp()
    }
}

/// Instantaneous panel output at the middle of a half-hour slot, watts.
pub fn pv_generation_w(cfg: &PvConfig, day_of_year: usize, slot_of_day: usize) -> f64 {
    let hour = (slot_of_day as f64 + 0.5) * 0.5;
    let decl = solar_declination_rad(day_of_year);
    let cos_z = cos_zenith(cfg.latitude_deg.to_radians(), decl, hour);
    clear_sky_ghi(cos_z) * cfg.panel_area_m2 * cfg.efficiency * cfg.derate * cfg.cloud_factor
}

/// Per-slot panel output over several days, watts.
pub fn pv_series_w(cfg: &PvConfig, start_day_of_year: usize, n_slots: usize) -> Vec<f64> {
    (0..n_slots)
        .map(|t| {
            pv_generation_w(
                cfg,
                start_day_of_year + t / SLOTS_PER_DAY,
                t % SLOTS_PER_DAY,
            )
        })
        .collect()
}

/// Fraction of baseline emissions eliminated, clamped to [0, 1].
pub fn net_zero_rate(baseline_t: f64, with_measures_t: f64) -> Result<f64> {
    if !(baseline_t > 0.0) {
        return Err(Error::invalid(format!("baseline emissions must be > 0, got {baseline_t}")));
    }
    if !(with_measures_t >= 0.0) {
        return Err(Error::invalid("emissions with measures must be >= 0"));
    }
    Ok((1.0 - with_measures_t / baseline_t).clamp(0.0, 1.0))
}

/// PV energy the stations cannot absorb, MWh over the aligned series.
pub fn curtailment_mwh(pv_w: &[f64], load_w: &[f64]) -> Result<f64> {
    if pv_w.len() != load_w.len() {
        return Err(Error::invalid("PV and load series must have equal length"));
    }
    let mut wasted_wh = 0.0;
    for (t, (&pv, &load)) in pv_w.iter().zip(load_w).enumerate() {
        if !(pv >= 0.0) || !(load >= 0.0) {
            return Err(Error::invalid(format!("slot {t}: negative PV or load")));
        }
        wasted_wh += (pv - load).max(0.0) * 0.5;
    }
    Ok(wasted_wh / 1e6)
}

/// PV cost structure. The shipped numbers are placeholders with the
/// published structure: yearly operations at 1% of the investment, an
/// inverter replacement in year ten, a twenty-year lifetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub capex_per_kw: f64,
    pub opex_rate: f64,
    /// Inverter replacement cost as a fraction of the initial investment.
    pub inverter_share: f64,
    pub inverter_replacement_year: usize,
    pub lifetime_years: usize,
    pub discount_rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            capex_per_kw: 3500.0,
            opex_rate: 0.01,
            inverter_share: 0.10,
            inverter_replacement_year: 10,
            lifetime_years: 20,
            discount_rate: 0.05,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.lifetime_years == 0 {
            return Err(Error::invalid("lifetime must be >= 1 year"));
        }
        if self.inverter_replacement_year > self.lifetime_years {
            return Err(Error::invalid("inverter replacement must fall within the lifetime"));
        }
        for (name, v) in [
            ("opex_rate", self.opex_rate),
            ("discount_rate", self.discount_rate),
            ("inverter_share", self.inverter_share),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.capex_per_kw >= 0.0) {
            return Err(Error::invalid("capex must be >= 0"));
        }
        Ok(())
    }

    /// Capital recovery factor at the model's discount rate and lifetime.
    pub fn crf(&self) -> f64 {
        let r = self.discount_rate;
        let n = self.lifetime_years as f64;
        if r == 0.0 {
            1.0 / n
        } else {
            let growth = (1.0 + r).powf(n);
            r * growth / (growth - 1.0)
        }
    }

    /// System investment for a panel fleet, using a 1 kW/m^2 reference
    /// irradiance for the nameplate rating.
    pub fn investment_for_area(&self, total_area_m2: f64, efficiency: f64) -> f64 {
        self.capex_per_kw * total_area_m2 * efficiency
    }

    /// Annualized lifetime cost of an investment: annuitized capital,
    /// yearly operations, and the discounted inverter replacement.
    pub fn annualized_cost(&self, total_investment: f64) -> f64 {
        let r = self.discount_rate;
        let replacement_pv = self.inverter_share
            * total_investment
            * (1.0 + r).powf(-(self.inverter_replacement_year as f64));
        (total_investment + replacement_pv) * self.crf() + self.opex_rate * total_investment
    }
}

/// Levelized cost of carbon abatement: annualized cost per tonne of CO2
/// avoided per year.
pub fn lcca(cost_model: &CostModel, total_investment: f64, co2_abated_per_year_t: f64) -> Result<f64> {
    cost_model.validate()?;
    if !(total_investment >= 0.0) {
        return Err(Error::invalid("investment must be >= 0"));
    }
    if !(co2_abated_per_year_t > 0.0) {
        return Err(Error::UndefinedLcca(co2_abated_per_year_t));
    }
    Ok(cost_model.annualized_cost(total_investment) / co2_abated_per_year_t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvRow {
    pub station_id: BsId,
    pub panel_area_m2: f64,
    pub efficiency: f64,
    pub derate: f64,
}

pub fn write_pv_csv(rows: &[PvRow], path: &Path) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.station_id, r.panel_area_m2, r.efficiency, r.derate))
        .collect();
    ioutil::write_csv(path, "station_id,panel_area_m2,efficiency,derate", &lines)
}

pub fn read_pv_csv(path: &Path) -> Result<Vec<PvRow>> {
    let mut reader = ioutil::open_csv(path)?;
    let mut rows = Vec::new();
    for rec in ioutil::csv_records(&mut reader, path)? {
        rows.push(PvRow {
            station_id: BsId(ioutil::parse_field(&rec, 0, path, "station_id")?),
            panel_area_m2: ioutil::parse_field(&rec, 1, path, "panel_area_m2")?,
            efficiency: ioutil::parse_field(&rec, 2, path, "efficiency")?,
            derate: ioutil::parse_field(&rec, 3, path, "derate")?,
        });
    }
    Ok(rows)
}

pub fn write_costs_csv(cm: &CostModel, path: &Path) -> Result<()> {
    let rows = vec![
        format!("capex_per_kw,{}", cm.capex_per_kw),
        format!("opex_rate,{}", cm.opex_rate),
        format!("inverter_share,{}", cm.inverter_share),
        format!("inverter_replacement_year,{}", cm.inverter_replacement_year),
        format!("lifetime_years,{}", cm.lifetime_years),
        format!("discount_rate,{}", cm.discount_rate),
    ];
    ioutil::write_csv(path, "item,value", &rows)
}

pub fn read_costs_csv(path: &Path) -> Result<CostModel> {
    let mut cm = CostModel::default();
    let mut reader = ioutil::open_csv(path)?;
    for rec in ioutil::csv_records(&mut reader, path)? {
        let line = ioutil::record_line(&rec);
        let item: String = ioutil::parse_field(&rec, 0, path, "item")?;
        match item.as_str() {
            "capex_per_kw" => cm.capex_per_kw = ioutil::parse_field(&rec, 1, path, "value")?,
            "opex_rate" => cm.opex_rate = ioutil::parse_field(&rec, 1, path, "value")?,
            "inverter_share" => cm.inverter_share = ioutil::parse_field(&rec, 1, path, "value")?,
            "inverter_replacement_year" => {
                cm.inverter_replacement_year = ioutil::parse_field(&rec, 1, path, "value")?
            }
            "lifetime_years" => cm.lifetime_years = ioutil::parse_field(&rec, 1, path, "value")?,
            "discount_rate" => cm.discount_rate = ioutil::parse_field(&rec, 1, path, "value")?,
            other => {
                return Err(Error::parse(path, line, format!("unknown cost item `{other}`")));
            }
        }
    }
    cm.validate()?;
    Ok(cm)
}

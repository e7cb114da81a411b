//! Synthetic city scenarios: base stations, cells, substitution grids,
//! diurnal traffic, and weather, plus a documented on-disk format.
//!
//! Generation is fully deterministic for a fixed seed. Traffic is a
//! sinusoidal diurnal base scaled by a per-generation peak fraction,
//! multiplied by lognormal noise and clipped to cell capacity. Grids are
//! single-linkage clusters of same-generation stations within a radius;
//! cells of clustered stations are mutually substitutable.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::energy::{calibrated_capacity_gb, BsKind, CoeffTable, CoolingParams};
use crate::error::{Error, Result};
use crate::ioutil;

pub const SLOTS_PER_DAY: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BsId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridId(pub u32);

impl std::fmt::Display for BsId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for GridId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseStationSpec {
    pub id: BsId,
    pub kind: BsKind,
    pub x_km: f64,
    pub y_km: f64,
    pub cell_ids: Vec<CellId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub id: CellId,
    pub bs_id: BsId,
    pub grid_id: GridId,
    /// GByte deliverable in one half-hour slot.
    pub capacity_gb: f64,
    /// Derived from the owning station; not serialized.
    pub kind: BsKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub id: GridId,
    pub cell_ids: Vec<CellId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrace {
    pub cell_id: CellId,
    pub gb_per_slot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherTrace {
    pub temp_c: Vec<f64>,
}

impl WeatherTrace {
    pub fn temp_c(&self, slot: usize) -> Result<f64> {
        self.temp_c
            .get(slot)
            .copied()
            .ok_or_else(|| Error::invalid(format!("weather has no slot {slot}")))
    }
}

/// Dense cell-major load matrix aligned with `Scenario::cells` order.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadMatrix {
    n_cells: usize,
    n_slots: usize,
    data: Vec<f64>,
}

impl LoadMatrix {
    pub fn zeros(n_cells: usize, n_slots: usize) -> LoadMatrix {
        LoadMatrix {
            n_cells,
            n_slots,
            data: vec![0.0; n_cells * n_slots],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn get(&self, cell: usize, slot: usize) -> f64 {
        self.data[cell * self.n_slots + slot]
    }

    pub fn set(&mut self, cell: usize, slot: usize, value: f64) {
        self.data[cell * self.n_slots + slot] = value;
    }

    pub fn slot_total(&self, slot: usize) -> f64 {
        (0..self.n_cells).map(|c| self.get(c, slot)).sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub days: usize,
    pub base_stations: Vec<BaseStationSpec>,
    pub cells: Vec<CellSpec>,
    pub grids: Vec<GridSpec>,
    pub traffic: Vec<TrafficTrace>,
    pub weather: WeatherTrace,
    pub coeffs: CoeffTable,
    pub cooling: CoolingParams,
}

impl Scenario {
    pub fn n_slots(&self) -> usize {
        self.days * SLOTS_PER_DAY
    }

    pub fn cell_index(&self, id: CellId) -> Result<usize> {
        self.cells
            .binary_search_by_key(&id, |c| c.id)
            .map_err(|_| Error::invalid(format!("unknown cell id {id}")))
    }

    pub fn grid_index(&self, id: GridId) -> Result<usize> {
        self.grids
            .binary_search_by_key(&id, |g| g.id)
            .map_err(|_| Error::invalid(format!("unknown grid id {id}")))
    }

    pub fn bs_index(&self, id: BsId) -> Result<usize> {
        self.base_stations
            .binary_search_by_key(&id, |b| b.id)
            .map_err(|_| Error::invalid(format!("unknown base station id {id}")))
    }

    /// Offered traffic as a dense matrix in cell order.
    pub fn traffic_matrix(&self) -> LoadMatrix {
        let mut m = LoadMatrix::zeros(self.cells.len(), self.n_slots());
        for trace in &self.traffic {
            let idx = self
                .cell_index(trace.cell_id)
                .expect("validated scenario has aligned traces");
            for (t, &gb) in trace.gb_per_slot.iter().enumerate() {
                m.set(idx, t, gb);
            }
        }
        m
    }

    /// Network capacity per slot (GByte).
    pub fn total_capacity_gb(&self) -> f64 {
        self.cells.iter().map(|c| c.capacity_gb).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::Validation("days must be >= 1".into()));
        }
        if self.base_stations.is_empty() {
            return Err(Error::Validation("scenario has no base stations".into()));
        }
        let n_slots = self.n_slots();
        for w in self.base_stations.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::Validation("base station ids must be unique and sorted".into()));
            }
        }
        for w in self.cells.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::Validation("cell ids must be unique and sorted".into()));
            }
        }
        for w in self.grids.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::Validation("grid ids must be unique and sorted".into()));
            }
        }
        self.coeffs.validate()?;
        self.cooling.validate()?;

        // Station <-> cell cross references.
        let mut cells_seen_in_bs = 0usize;
        for bs in &self.base_stations {
            if !bs.x_km.is_finite() || !bs.y_km.is_finite() {
                return Err(Error::Validation(format!("station {} has non-finite location", bs.id)));
            }
            if bs.cell_ids.len() != bs.kind.cell_count() {
                return Err(Error::Validation(format!(
                    "station {} of kind {} must have {} cells, has {}",
                    bs.id,
                    bs.kind,
                    bs.kind.cell_count(),
                    bs.cell_ids.len()
                )));
            }
            for &cid in &bs.cell_ids {
                let idx = self.cell_index(cid).map_err(|_| {
                    Error::Validation(format!("station {} references unknown cell {cid}", bs.id))
                })?;
                let cell = &self.cells[idx];
                if cell.bs_id != bs.id {
                    return Err(Error::Validation(format!(
                        "cell {cid} claims station {} but is listed under {}",
                        cell.bs_id, bs.id
                    )));
                }
                if cell.kind != bs.kind {
                    return Err(Error::Validation(format!(
                        "cell {cid} kind {} does not match station kind {}",
                        cell.kind, bs.kind
                    )));
                }
                cells_seen_in_bs += 1;
            }
        }
        if cells_seen_in_bs != self.cells.len() {
            return Err(Error::Validation(
                "every cell must belong to exactly one base station".into(),
            ));
        }

        // Grid partition.
        let mut cells_seen_in_grid = 0usize;
        for grid in &self.grids {
            if grid.cell_ids.is_empty() {
                return Err(Error::Validation(format!("grid {} is empty", grid.id)));
            }
            for &cid in &grid.cell_ids {
                let idx = self.cell_index(cid).map_err(|_| {
                    Error::Validation(format!("grid {} references unknown cell {cid}", grid.id))
                })?;
                if self.cells[idx].grid_id != grid.id {
                    return Err(Error::Validation(format!(
                        "cell {cid} claims grid {} but is listed under {}",
                        self.cells[idx].grid_id, grid.id
                    )));
                }
                cells_seen_in_grid += 1;
            }
        }
        if cells_seen_in_grid != self.cells.len() {
            return Err(Error::Validation(
                "every cell must belong to exactly one grid".into(),
            ));
        }

        for cell in &self.cells {
            if !(cell.capacity_gb > 0.0) || !cell.capacity_gb.is_finite() {
                return Err(Error::Validation(format!(
                    "cell {} capacity must be finite and > 0, got {}",
                    cell.id, cell.capacity_gb
                )));
            }
        }

        if self.traffic.len() != self.cells.len() {
            return Err(Error::Validation(format!(
                "{} traffic traces for {} cells",
                self.traffic.len(),
                self.cells.len()
            )));
        }
        for trace in &self.traffic {
            let idx = self.cell_index(trace.cell_id).map_err(|_| {
                Error::Validation(format!("traffic trace for unknown cell {}", trace.cell_id))
            })?;
            if trace.gb_per_slot.len() != n_slots {
                return Err(Error::Validation(format!(
                    "cell {} trace has {} slots, expected {n_slots}",
                    trace.cell_id,
                    trace.gb_per_slot.len()
                )));
            }
            let cap = self.cells[idx].capacity_gb;
            for (t, &gb) in trace.gb_per_slot.iter().enumerate() {
                if !(gb >= 0.0) || !gb.is_finite() {
                    return Err(Error::Validation(format!(
                        "cell {} slot {t}: traffic {gb} is negative or non-finite",
                        trace.cell_id
                    )));
                }
                if gb > cap * (1.0 + 1e-9) {
                    return Err(Error::Validation(format!(
                        "cell {} slot {t}: traffic {gb} GB exceeds capacity {cap} GB",
                        trace.cell_id
                    )));
                }
            }
        }

        if self.weather.temp_c.len() != n_slots {
            return Err(Error::Validation(format!(
                "weather has {} slots, expected {n_slots}",
                self.weather.temp_c.len()
            )));
        }
        for (t, &c) in self.weather.temp_c.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Validation(format!("weather slot {t} is non-finite")));
            }
        }
        Ok(())
    }
}

/// Diurnal traffic shape parameters. The peak fraction is the daily maximum
/// load of a cell relative to its capacity (before noise), controllable per
/// radio generation for counterfactual sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileParams {
    pub peak_frac_4g: f64,
    pub peak_frac_5g: f64,
    pub trough_frac: f64,
    pub noise_sigma: f64,
    /// Slot of day (0..48) at which the diurnal base peaks.
    pub peak_slot: f64,
    /// Uniform per-cell phase offset in slots, +-.
    pub phase_jitter_slots: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            peak_frac_4g: 0.55,
            peak_frac_5g: 0.30,
            trough_frac: 0.08,
            noise_sigma: 0.15,
            peak_slot: 28.0,
            phase_jitter_slots: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherParams {
    pub mean_c: f64,
    pub amplitude_c: f64,
    pub peak_slot: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            mean_c: 22.0,
            amplitude_c: 6.0,
            peak_slot: 29.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_4g: usize,
    pub n_5g: usize,
    /// Fraction of the 5G stations built with six cells instead of three.
    pub six_cell_share: f64,
    pub days: usize,
    pub profile: ProfileParams,
    pub weather: WeatherParams,
    /// Stations scatter around the city centre with this Gaussian sigma.
    pub cluster_sigma_km: f64,
    /// Same-generation stations within this distance share a grid.
    pub grid_radius_km: f64,
    /// Cell capacity jitter: uniform in [1-j, 1+j] around the calibrated value.
    pub capacity_jitter: f64,
}

impl ScenarioConfig {
    pub fn new(seed: u64, n_4g: usize, n_5g: usize, days: usize) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_4g,
            n_5g,
            six_cell_share: 0.0,
            days,
            profile: ProfileParams::default(),
            weather: WeatherParams::default(),
            cluster_sigma_km: 1.0,
            grid_radius_km: 0.5,
            capacity_jitter: 0.1,
        }
    }

    /// The reference city used by the CLI and the comparison experiments:
    /// 30 stations, one week.
    pub fn default_city() -> ScenarioConfig {
        ScenarioConfig::new(42, 20, 10, 7)
    }
}

/// Single-linkage clustering of same-generation stations within a radius.
/// Returns a component label per station.
fn cluster_stations(positions: &[(f64, f64)], is_5g: &[bool], radius_km: f64) -> Vec<usize> {
    let n = positions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if is_5g[i] != is_5g[j] {
                continue;
            }
            let dx = positions[i].0 - positions[j].0;
            let dy = positions[i].1 - positions[j].1;
            if (dx * dx + dy * dy).sqrt() <= radius_km {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    if cfg.n_4g + cfg.n_5g == 0 {
        return Err(Error::invalid("at least one base station is required"));
    }
    if cfg.days == 0 {
        return Err(Error::invalid("days must be >= 1"));
    }
    if !(0.0..=1.0).contains(&cfg.six_cell_share) {
        return Err(Error::invalid("six_cell_share must be in [0, 1]"));
    }
    for (name, v) in [
        ("peak_frac_4g", cfg.profile.peak_frac_4g),
        ("peak_frac_5g", cfg.profile.peak_frac_5g),
        ("trough_frac", cfg.profile.trough_frac),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    if !(cfg.capacity_jitter >= 0.0 && cfg.capacity_jitter < 1.0) {
        return Err(Error::invalid("capacity_jitter must be in [0, 1)"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let coeffs = CoeffTable::default();
    let cooling = CoolingParams::default();
    let n_slots = cfg.days * SLOTS_PER_DAY;

    // Station kinds and positions.
    let n_6cell = (cfg.six_cell_share * cfg.n_5g as f64).round() as usize;
    let mut kinds = Vec::with_capacity(cfg.n_4g + cfg.n_5g);
    kinds.extend(std::iter::repeat(BsKind::FourG3Cell).take(cfg.n_4g));
    kinds.extend(std::iter::repeat(BsKind::FiveG6Cell).take(n_6cell));
    kinds.extend(std::iter::repeat(BsKind::FiveG3Cell).take(cfg.n_5g - n_6cell));

    let scatter = Normal::new(0.0, cfg.cluster_sigma_km.max(1e-6)).unwrap();
    let positions: Vec<(f64, f64)> = kinds
        .iter()
        .map(|_| (scatter.sample(&mut rng), scatter.sample(&mut rng)))
        .collect();
    let is_5g: Vec<bool> = kinds.iter().map(|k| k.is_5g()).collect();
    let components = cluster_stations(&positions, &is_5g, cfg.grid_radius_km);

    // Component label -> dense grid id, ordered by first occurrence.
    let mut grid_of_component: BTreeMap<usize, GridId> = BTreeMap::new();
    let mut next_grid = 0u32;
    for &c in &components {
        grid_of_component.entry(c).or_insert_with(|| {
            let id = GridId(next_grid);
            next_grid += 1;
            id
        });
    }

    let mut base_stations = Vec::with_capacity(kinds.len());
    let mut cells = Vec::new();
    let mut next_cell = 0u32;
    for (i, &kind) in kinds.iter().enumerate() {
        let bs_id = BsId(i as u32);
        let grid_id = grid_of_component[&components[i]];
        let base_cap = calibrated_capacity_gb(kind, &coeffs, &cooling);
        let mut cell_ids = Vec::with_capacity(kind.cell_count());
        for _ in 0..kind.cell_count() {
            let id = CellId(next_cell);
            next_cell += 1;
            let jitter = 1.0 + cfg.capacity_jitter * (2.0 * rng.random::<f64>() - 1.0);
            cells.push(CellSpec {
                id,
                bs_id,
                grid_id,
                capacity_gb: base_cap * jitter,
                kind,
            });
            cell_ids.push(id);
        }
        base_stations.push(BaseStationSpec {
            id: bs_id,
            kind,
            x_km: positions[i].0,
            y_km: positions[i].1,
            cell_ids,
        });
    }

    let mut grids: Vec<GridSpec> = grid_of_component
        .values()
        .map(|&id| GridSpec { id, cell_ids: Vec::new() })
        .collect();
    grids.sort_by_key(|g| g.id);
    for cell in &cells {
        let gi = grids
            .binary_search_by_key(&cell.grid_id, |g| g.id)
            .expect("grid exists");
        grids[gi].cell_ids.push(cell.id);
    }

    // Traffic: diurnal base * lognormal noise, clipped to capacity.
    let sigma = cfg.profile.noise_sigma;
    let noise = if sigma > 0.0 {
        Some(LogNormal::new(-0.5 * sigma * sigma, sigma).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut traffic = Vec::with_capacity(cells.len());
    for cell in &cells {
        let peak_frac = if cell.kind.is_5g() {
            cfg.profile.peak_frac_5g
        } else {
            cfg.profile.peak_frac_4g
        };
        let phase = if cfg.profile.phase_jitter_slots > 0.0 {
            cfg.profile.phase_jitter_slots * (2.0 * rng.random::<f64>() - 1.0)
        } else {
            0.0
        };
        let mut gb_per_slot = Vec::with_capacity(n_slots);
        for t in 0..n_slots {
            let slot_of_day = (t % SLOTS_PER_DAY) as f64;
            let angle = std::f64::consts::TAU * (slot_of_day - cfg.profile.peak_slot - phase)
                / SLOTS_PER_DAY as f64;
            let shape = cfg.profile.trough_frac
                + (1.0 - cfg.profile.trough_frac) * 0.5 * (1.0 + angle.cos());
            let mut gb = cell.capacity_gb * peak_frac * shape;
            if let Some(noise) = &noise {
                gb *= noise.sample(&mut rng);
            }
            gb_per_slot.push(gb.clamp(0.0, cell.capacity_gb));
        }
        traffic.push(TrafficTrace { cell_id: cell.id, gb_per_slot });
    }

    let temp_c = (0..n_slots)
        .map(|t| {
            let slot_of_day = (t % SLOTS_PER_DAY) as f64;
            let angle =
                std::f64::consts::TAU * (slot_of_day - cfg.weather.peak_slot) / SLOTS_PER_DAY as f64;
            cfg.weather.mean_c + cfg.weather.amplitude_c * angle.cos()
        })
        .collect();

    let scenario = Scenario {
        days: cfg.days,
        base_stations,
        cells,
        grids,
        traffic,
        weather: WeatherTrace { temp_c },
        coeffs,
        cooling,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Sub-scenario keeping only the stations selected by `keep`, with their
/// cells, grids, and traffic. Grids never span radio generations, so
/// filtering by kind keeps every remaining grid intact.
pub fn filter_stations(
    s: &Scenario,
    keep: impl Fn(&BaseStationSpec) -> bool,
) -> Result<Scenario> {
    let base_stations: Vec<BaseStationSpec> =
        s.base_stations.iter().filter(|bs| keep(bs)).cloned().collect();
    if base_stations.is_empty() {
        return Err(Error::invalid("filter keeps no base stations"));
    }
    let kept_cells: std::collections::BTreeSet<CellId> = base_stations
        .iter()
        .flat_map(|bs| bs.cell_ids.iter().copied())
        .collect();
    let cells: Vec<CellSpec> = s
        .cells
        .iter()
        .filter(|c| kept_cells.contains(&c.id))
        .cloned()
        .collect();
    let grids: Vec<GridSpec> = s
        .grids
        .iter()
        .filter(|g| g.cell_ids.iter().any(|cid| kept_cells.contains(cid)))
        .map(|g| {
            let cell_ids: Vec<CellId> = g
                .cell_ids
                .iter()
                .copied()
                .filter(|cid| kept_cells.contains(cid))
                .collect();
            GridSpec { id: g.id, cell_ids }
        })
        .collect();
    let traffic: Vec<TrafficTrace> = s
        .traffic
        .iter()
        .filter(|t| kept_cells.contains(&t.cell_id))
        .cloned()
        .collect();
    let out = Scenario {
        days: s.days,
        base_stations,
        cells,
        grids,
        traffic,
        weather: s.weather.clone(),
        coeffs: s.coeffs.clone(),
        cooling: s.cooling,
    };
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// On-disk format: manifest.toml + five CSV tables. Floats are written with
// `Display`, which parses back to the identical f64.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioManifest {
    format_version: u32,
    days: usize,
    n_base_stations: usize,
    n_cells: usize,
    n_grids: usize,
    n_slots: usize,
    cooling_cop: f64,
    cooling_ua_w_per_k: f64,
    cooling_t_indoor_c: f64,
}

pub fn save_scenario(s: &Scenario, dir: &Path) -> Result<()> {
    s.validate()?;
    std::fs::create_dir_all(dir)?;

    let manifest = ScenarioManifest {
        format_version: 1,
        days: s.days,
        n_base_stations: s.base_stations.len(),
        n_cells: s.cells.len(),
        n_grids: s.grids.len(),
        n_slots: s.n_slots(),
        cooling_cop: s.cooling.cop,
        cooling_ua_w_per_k: s.cooling.ua_w_per_k,
        cooling_t_indoor_c: s.cooling.t_indoor_c,
    };
    let manifest_toml =
        toml::to_string(&manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    ioutil::atomic_write(&dir.join("manifest.toml"), manifest_toml.as_bytes())?;

    let bs_rows: Vec<String> = s
        .base_stations
        .iter()
        .map(|b| format!("{},{},{},{}", b.id, b.kind.label(), b.x_km, b.y_km))
        .collect();
    ioutil::write_csv(&dir.join("base_stations.csv"), "id,kind,x_km,y_km", &bs_rows)?;

    let cell_rows: Vec<String> = s
        .cells
        .iter()
        .map(|c| format!("{},{},{},{}", c.id, c.bs_id, c.grid_id, c.capacity_gb))
        .collect();
    ioutil::write_csv(&dir.join("cells.csv"), "id,bs_id,grid_id,capacity_gb", &cell_rows)?;

    let mut traffic_rows = Vec::with_capacity(s.cells.len() * s.n_slots());
    for trace in &s.traffic {
        for (t, gb) in trace.gb_per_slot.iter().enumerate() {
            traffic_rows.push(format!("{},{},{}", trace.cell_id, t, gb));
        }
    }
    ioutil::write_csv(&dir.join("traffic.csv"), "cell_id,slot,gb", &traffic_rows)?;

    let weather_rows: Vec<String> = s
        .weather
        .temp_c
        .iter()
        .enumerate()
        .map(|(t, c)| format!("{t},{c}"))
        .collect();
    ioutil::write_csv(&dir.join("weather.csv"), "slot,temp_c", &weather_rows)?;

    s.coeffs.write_csv(&dir.join("energy_coeffs.csv"))?;
    Ok(())
}

pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let manifest_path = dir.join("manifest.toml");
    let manifest_raw = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::parse(&manifest_path, 0, format!("cannot read: {e}")))?;
    let manifest: ScenarioManifest = toml::from_str(&manifest_raw)
        .map_err(|e| Error::parse(&manifest_path, 0, e.to_string()))?;
    if manifest.format_version != 1 {
        return Err(Error::parse(
            &manifest_path,
            0,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    let n_slots = manifest.days * SLOTS_PER_DAY;
    if manifest.n_slots != n_slots {
        return Err(Error::parse(
            &manifest_path,
            0,
            format!("n_slots {} inconsistent with days {}", manifest.n_slots, manifest.days),
        ));
    }

    // Base stations.
    let bs_path = dir.join("base_stations.csv");
    let mut reader = ioutil::open_csv(&bs_path)?;
    let mut kinds_by_bs: BTreeMap<BsId, BsKind> = BTreeMap::new();
    let mut bs_partial: Vec<(BsId, BsKind, f64, f64)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, &bs_path)? {
        let line = ioutil::record_line(&rec);
        let id = BsId(ioutil::parse_field(&rec, 0, &bs_path, "id")?);
        let kind_raw: String = ioutil::parse_field(&rec, 1, &bs_path, "kind")?;
        let kind = BsKind::parse_label(&kind_raw)
            .ok_or_else(|| Error::parse(&bs_path, line, format!("unknown kind `{kind_raw}`")))?;
        let x: f64 = ioutil::parse_field(&rec, 2, &bs_path, "x_km")?;
        let y: f64 = ioutil::parse_field(&rec, 3, &bs_path, "y_km")?;
        if kinds_by_bs.insert(id, kind).is_some() {
            return Err(Error::parse(&bs_path, line, format!("duplicate station id {id}")));
        }
        bs_partial.push((id, kind, x, y));
    }
    if bs_partial.len() != manifest.n_base_stations {
        return Err(Error::parse(
            &bs_path,
            0,
            format!(
                "{} stations on disk, manifest says {}",
                bs_partial.len(),
                manifest.n_base_stations
            ),
        ));
    }

    // Cells.
    let cells_path = dir.join("cells.csv");
    let mut reader = ioutil::open_csv(&cells_path)?;
    let mut cells: Vec<CellSpec> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, &cells_path)? {
        let line = ioutil::record_line(&rec);
        let id = CellId(ioutil::parse_field(&rec, 0, &cells_path, "id")?);
        let bs_id = BsId(ioutil::parse_field(&rec, 1, &cells_path, "bs_id")?);
        let grid_id = GridId(ioutil::parse_field(&rec, 2, &cells_path, "grid_id")?);
        let capacity_gb: f64 = ioutil::parse_field(&rec, 3, &cells_path, "capacity_gb")?;
        let kind = *kinds_by_bs
            .get(&bs_id)
            .ok_or_else(|| Error::parse(&cells_path, line, format!("unknown station {bs_id}")))?;
        cells.push(CellSpec { id, bs_id, grid_id, capacity_gb, kind });
    }
    if cells.len() != manifest.n_cells {
        return Err(Error::parse(
            &cells_path,
            0,
            format!("{} cells on disk, manifest says {}", cells.len(), manifest.n_cells),
        ));
    }
    cells.sort_by_key(|c| c.id);

    let base_stations: Vec<BaseStationSpec> = {
        let mut v: Vec<BaseStationSpec> = bs_partial
            .into_iter()
            .map(|(id, kind, x_km, y_km)| BaseStationSpec {
                id,
                kind,
                x_km,
                y_km,
                cell_ids: Vec::new(),
            })
            .collect();
        v.sort_by_key(|b| b.id);
        for cell in &cells {
            let bi = v
                .binary_search_by_key(&cell.bs_id, |b| b.id)
                .map_err(|_| Error::parse(&cells_path, 0, format!("unknown station {}", cell.bs_id)))?;
            v[bi].cell_ids.push(cell.id);
        }
        v
    };

    let mut grid_map: BTreeMap<GridId, Vec<CellId>> = BTreeMap::new();
    for cell in &cells {
        grid_map.entry(cell.grid_id).or_default().push(cell.id);
    }
    let grids: Vec<GridSpec> = grid_map
        .into_iter()
        .map(|(id, cell_ids)| GridSpec { id, cell_ids })
        .collect();
    if grids.len() != manifest.n_grids {
        return Err(Error::parse(
            &cells_path,
            0,
            format!("{} grids on disk, manifest says {}", grids.len(), manifest.n_grids),
        ));
    }

    // Traffic.
    let traffic_path = dir.join("traffic.csv");
    let mut reader = ioutil::open_csv(&traffic_path)?;
    let mut per_cell: BTreeMap<CellId, Vec<(usize, f64)>> = BTreeMap::new();
    for rec in ioutil::csv_records(&mut reader, &traffic_path)? {
        let cell_id = CellId(ioutil::parse_field(&rec, 0, &traffic_path, "cell_id")?);
        let slot: usize = ioutil::parse_field(&rec, 1, &traffic_path, "slot")?;
        let gb: f64 = ioutil::parse_field(&rec, 2, &traffic_path, "gb")?;
        per_cell.entry(cell_id).or_default().push((slot, gb));
    }
    let mut traffic = Vec::with_capacity(per_cell.len());
    for (cell_id, mut slots) in per_cell {
        slots.sort_by_key(|&(t, _)| t);
        let mut gb_per_slot = vec![0.0; n_slots];
        if slots.len() != n_slots {
            return Err(Error::parse(
                &traffic_path,
                0,
                format!("cell {cell_id} has {} slots, expected {n_slots}", slots.len()),
            ));
        }
        for (i, (t, gb)) in slots.into_iter().enumerate() {
            if t != i {
                return Err(Error::parse(
                    &traffic_path,
                    0,
                    format!("cell {cell_id}: missing or duplicate slot {i}"),
                ));
            }
            gb_per_slot[i] = gb;
        }
        traffic.push(TrafficTrace { cell_id, gb_per_slot });
    }

    // Weather.
    let weather_path = dir.join("weather.csv");
    let mut reader = ioutil::open_csv(&weather_path)?;
    let mut temp_rows: Vec<(usize, f64)> = Vec::new();
    for rec in ioutil::csv_records(&mut reader, &weather_path)? {
        let slot: usize = ioutil::parse_field(&rec, 0, &weather_path, "slot")?;
        let c: f64 = ioutil::parse_field(&rec, 1, &weather_path, "temp_c")?;
        temp_rows.push((slot, c));
    }
    temp_rows.sort_by_key(|&(t, _)| t);
    if temp_rows.len() != n_slots {
        return Err(Error::parse(
            &weather_path,
            0,
            format!("{} weather slots, expected {n_slots}", temp_rows.len()),
        ));
    }
    let weather = WeatherTrace {
        temp_c: temp_rows.into_iter().map(|(_, c)| c).collect(),
    };

    let coeffs = CoeffTable::read_csv(&dir.join("energy_coeffs.csv"))?;

    let scenario = Scenario {
        days: manifest.days,
        base_stations,
        cells,
        grids,
        traffic,
        weather,
        coeffs,
        cooling: CoolingParams {
            cop: manifest.cooling_cop,
            ua_w_per_k: manifest.cooling_ua_w_per_k,
            t_indoor_c: manifest.cooling_t_indoor_c,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

//! Reads the public RTS-GMLC CSV layout (`bus.csv`, `branch.csv`, `gen.csv`
//! plus hourly DAY_AHEAD timeseries) into a normalized [`GridCase`] and
//! [`TimeseriesSet`].
//!
//! Normalization rules:
//! * buses sorted by id, branches by (from, to), generators by (bus, uid);
//!   generators get dense ids `1..=n` in that order,
//! * wind and solar units get `qgmin = qgmax = 0` (they do not take part in
//!   reactive support in this system build),
//! * all equipment starts in service / enabled.
//!
//! The same files always produce a byte-identical canonical dump, which is
//! what makes golden tests and cross-run comparisons possible.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::grid::{
    AreaId, Branch, Bus, BusId, BusKind, GenId, GenType, GeneratorRecord, GridCase, ModelError,
    BASE_MVA,
};

/// Structural profile of the authentic dataset, used by `validate` banners.
pub const RTS_GMLC_BUSES: usize = 73;
pub const RTS_GMLC_BRANCHES: usize = 120;
pub const RTS_GMLC_GENERATORS: usize = 158;
pub const RTS_GMLC_CONVENTIONAL: usize = 72;
pub const RTS_GMLC_RENEWABLE: usize = 82;
pub const RTS_GMLC_LOADS: usize = 51;
pub const RTS_GMLC_PERIODS: usize = 8784;

/// The study year. It is a leap year, hence 8784 hourly periods.
pub const STUDY_YEAR: i32 = 2020;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: {source}")]
    Csv {
        file: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{file} line {line}: column '{column}': {msg}")]
    Field { file: PathBuf, line: usize, column: String, msg: String },
    #[error("{file}: required column '{column}' not found")]
    MissingColumn { file: PathBuf, column: String },
    #[error("{file}: unit column '{column}' matches no renewable unit in the case")]
    UnknownUnitColumn { file: PathBuf, column: String },
    #[error("{file}: area column '{column}' matches no area in the case")]
    UnknownAreaColumn { file: PathBuf, column: String },
    #[error("renewable unit {uid} has no availability column in any timeseries file")]
    MissingProfile { uid: String },
    #[error("load series covers no area of the case")]
    NoLoadSeries,
    #[error("{file}: {rows} rows does not match the {expected} periods of the load series")]
    RowCountMismatch { file: PathBuf, rows: usize, expected: usize },
    #[error("{file} line {line}: timestamp out of order: expected period {expected}, file encodes {got}")]
    NonContiguous { file: PathBuf, line: usize, expected: usize, got: usize },
    #[error("invalid timestamp {year}-{month:02}-{day:02} hour {hour} (study year {STUDY_YEAR}, hours 1..=24)")]
    BadTimestamp { year: i32, month: u32, day: u32, hour: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Hourly forecast data bound to a case: per-area load and per-unit
/// renewable availability, both in MW, indexed by 1-based period.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeseriesSet {
    pub period_count: usize,
    pub area_load_mw: BTreeMap<AreaId, Vec<f64>>,
    pub unit_availability_mw: BTreeMap<GenId, Vec<f64>>,
}

impl TimeseriesSet {
    pub fn area_load(&self, area: AreaId, period: u32) -> f64 {
        self.area_load_mw
            .get(&area)
            .and_then(|v| v.get(period as usize - 1))
            .copied()
            .unwrap_or(0.0)
    }

    /// Maximum of the area's active load over the whole provided horizon.
    pub fn area_peak_load(&self, area: AreaId) -> f64 {
        self.area_load_mw
            .get(&area)
            .map(|v| v.iter().copied().fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    pub fn availability(&self, unit: GenId, period: u32) -> f64 {
        self.unit_availability_mw
            .get(&unit)
            .and_then(|v| v.get(period as usize - 1))
            .copied()
            .unwrap_or(0.0)
    }
}

/// 1-based hourly period index of a calendar timestamp within the study
/// year: `(day_of_year - 1) * 24 + hour`.
pub fn period_index(year: i32, month: u32, day: u32, hour: u32) -> Result<u32, IngestError> {
    let bad = || IngestError::BadTimestamp { year, month, day, hour };
    if year != STUDY_YEAR || !(1..=24).contains(&hour) {
        return Err(bad());
    }
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)?;
    Ok((date.ordinal0()) * 24 + hour)
}

/// Inverse of [`period_index`]: (month, day, hour-of-day) of a period.
pub fn period_timestamp(period: u32) -> Result<(u32, u32, u32), IngestError> {
    let bad = || IngestError::BadTimestamp { year: STUDY_YEAR, month: 0, day: 0, hour: period };
    if period == 0 || period > RTS_GMLC_PERIODS as u32 {
        return Err(bad());
    }
    let ordinal = (period - 1) / 24 + 1;
    let hour = (period - 1) % 24 + 1;
    let date = NaiveDate::from_yo_opt(STUDY_YEAR, ordinal).ok_or_else(bad)?;
    Ok((date.month(), date.day(), hour))
}

fn source_dir(root: &Path) -> PathBuf {
    let nested = root.join("RTS_Data").join("SourceData");
    if nested.join("bus.csv").is_file() {
        nested
    } else {
        root.to_path_buf()
    }
}

fn timeseries_dir(root: &Path) -> PathBuf {
    let nested = root.join("RTS_Data").join("timeseries_data_files");
    if nested.is_dir() {
        nested
    } else {
        root.join("timeseries")
    }
}

struct Table {
    file: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(file: PathBuf) -> Result<Table, IngestError> {
        if !file.is_file() {
            return Err(IngestError::MissingFile(file));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(&file)
            .map_err(|source| IngestError::Csv { file: file.clone(), source })?;
        let headers = rdr
            .headers()
            .map_err(|source| IngestError::Csv { file: file.clone(), source })?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|source| IngestError::Csv { file: file.clone(), source })?;
            rows.push(rec);
        }
        Ok(Table { file, headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize, IngestError> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::MissingColumn {
                file: self.file.clone(),
                column: name.to_string(),
            })
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    /// Logs one warning listing header names we neither use nor recognize.
    fn warn_unknown(&self, known: &[&str]) {
        let unknown: Vec<&str> = self
            .headers
            .iter()
            .filter(|h| !known.iter().any(|k| k.eq_ignore_ascii_case(h)))
            .map(|s| s.as_str())
            .collect();
        if !unknown.is_empty() {
            log::warn!("{}: ignoring columns {:?}", self.file.display(), unknown);
        }
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("").trim()
    }

    fn f64(&self, row: usize, col: usize) -> Result<f64, IngestError> {
        let raw = self.text(row, col);
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            return Ok(0.0);
        }
        raw.parse::<f64>().map_err(|_| IngestError::Field {
            file: self.file.clone(),
            line: row + 2,
            column: self.headers.get(col).cloned().unwrap_or_default(),
            msg: format!("'{raw}' is not a number"),
        })
    }

    fn u32(&self, row: usize, col: usize) -> Result<u32, IngestError> {
        let raw = self.text(row, col);
        raw.parse::<u32>().map_err(|_| IngestError::Field {
            file: self.file.clone(),
            line: row + 2,
            column: self.headers.get(col).cloned().unwrap_or_default(),
            msg: format!("'{raw}' is not an integer"),
        })
    }
}

fn parse_bus_kind(table: &Table, row: usize, col: usize) -> Result<BusKind, IngestError> {
    let raw = table.text(row, col);
    match raw.to_ascii_uppercase().as_str() {
        "REF" | "SLACK" => Ok(BusKind::Slack),
        "PV" => Ok(BusKind::Pv),
        "PQ" => Ok(BusKind::Pq),
        other => Err(IngestError::Field {
            file: table.file.clone(),
            line: row + 2,
            column: table.headers[col].clone(),
            msg: format!("unknown bus type '{other}'"),
        }),
    }
}

fn parse_gen_type(raw: &str) -> GenType {
    match raw.to_ascii_uppercase().as_str() {
        "WIND" => GenType::Wind,
        "PV" | "RTPV" => GenType::Solar,
        "HYDRO" | "ROR" => GenType::Hydro,
        "CSP" => GenType::Csp,
        "STORAGE" => GenType::Storage,
        "SYNC_COND" => GenType::SyncCond,
        // CT / CC / STEAM / NUCLEAR and anything fuel-burning
        _ => GenType::Conventional,
    }
}

/// BTU/kWh -> MMBTU/MWh.
fn heat_rate_mmbtu(btu_per_kwh: f64) -> f64 {
    btu_per_kwh * 1e-3
}

/// Rebuilds the four-point operating-cost curve from output percentages and
/// heat-rate columns: cumulative fuel burn along the curve priced at the
/// unit's fuel cost.
fn op_cost_points(
    pmax: f64,
    fuel_price: f64,
    out_pct: [f64; 4],
    hr_avg0: f64,
    hr_incr: [f64; 3],
) -> [(f64, f64); 4] {
    if hr_avg0 <= 0.0 || pmax <= 0.0 {
        return [(0.0, 0.0); 4];
    }
    let mut pts = [(0.0, 0.0); 4];
    let p0 = out_pct[0] * pmax;
    let mut cost = p0 * heat_rate_mmbtu(hr_avg0) * fuel_price;
    pts[0] = (p0, cost);
    let mut prev = p0;
    for k in 0..3 {
        let p = out_pct[k + 1] * pmax;
        cost += (p - prev) * heat_rate_mmbtu(hr_incr[k]) * fuel_price;
        pts[k + 1] = (p, cost);
        prev = p;
    }
    pts
}

const BUS_COLUMNS: &[&str] =
    &["Bus ID", "Bus Name", "BaseKV", "Bus Type", "MW Load", "MVAR Load", "V Mag", "Area"];
const BRANCH_COLUMNS: &[&str] = &["UID", "From Bus", "To Bus", "R", "X", "B", "Cont Rating"];
const GEN_COLUMNS: &[&str] = &[
    "GEN UID",
    "Bus ID",
    "Unit Type",
    "MW Inj",
    "MVAR Inj",
    "PMax MW",
    "PMin MW",
    "QMax MVAR",
    "QMin MVAR",
    "Ramp Rate MW/Min",
    "Start Heat Cold MBTU",
    "Non Fuel Start Cost $",
    "Fuel Price $/MMBTU",
    "Output_pct_0",
    "Output_pct_1",
    "Output_pct_2",
    "Output_pct_3",
    "HR_avg_0",
    "HR_incr_1",
    "HR_incr_2",
    "HR_incr_3",
];

/// Reads `bus.csv`, `branch.csv` and `gen.csv` under `root` (directly or in
/// the `RTS_Data/SourceData` layout) into a validated, normalized case.
pub fn load_case(root: &Path) -> Result<GridCase, IngestError> {
    let dir = source_dir(root);

    let bus_table = Table::read(dir.join("bus.csv"))?;
    bus_table.warn_unknown(BUS_COLUMNS);
    let (c_id, c_kv, c_kind) =
        (bus_table.col("Bus ID")?, bus_table.col("BaseKV")?, bus_table.col("Bus Type")?);
    let (c_pd, c_qd) = (bus_table.col("MW Load")?, bus_table.col("MVAR Load")?);
    let c_vm = bus_table.opt_col("V Mag");
    let c_area = bus_table.col("Area")?;
    let mut buses = Vec::with_capacity(bus_table.rows.len());
    for row in 0..bus_table.rows.len() {
        buses.push(Bus {
            id: BusId(bus_table.u32(row, c_id)?),
            area: AreaId(bus_table.u32(row, c_area)?),
            base_kv: bus_table.f64(row, c_kv)?,
            kind: parse_bus_kind(&bus_table, row, c_kind)?,
            voltage_setpoint: match c_vm {
                Some(c) => {
                    let v = bus_table.f64(row, c)?;
                    if v > 0.0 {
                        v
                    } else {
                        1.0
                    }
                }
                None => 1.0,
            },
            pd: bus_table.f64(row, c_pd)?,
            qd: bus_table.f64(row, c_qd)?,
            in_service: true,
        });
    }
    buses.sort_by_key(|b| b.id);
    let kv_of: BTreeMap<BusId, f64> = buses.iter().map(|b| (b.id, b.base_kv)).collect();

    let br_table = Table::read(dir.join("branch.csv"))?;
    br_table.warn_unknown(BRANCH_COLUMNS);
    let (c_from, c_to) = (br_table.col("From Bus")?, br_table.col("To Bus")?);
    let (c_r, c_x, c_b) = (br_table.col("R")?, br_table.col("X")?, br_table.col("B")?);
    let c_rate = br_table.col("Cont Rating")?;
    let mut branches = Vec::with_capacity(br_table.rows.len());
    for row in 0..br_table.rows.len() {
        let from = BusId(br_table.u32(row, c_from)?);
        let to = BusId(br_table.u32(row, c_to)?);
        let class = match (kv_of.get(&from), kv_of.get(&to)) {
            (Some(&a), Some(&b)) => a.min(b),
            _ => 0.0, // dangling; validate() below reports it
        };
        branches.push(Branch {
            from,
            to,
            r: br_table.f64(row, c_r)?,
            x: br_table.f64(row, c_x)?,
            b: br_table.f64(row, c_b)?,
            rating: br_table.f64(row, c_rate)?,
            in_service: true,
            voltage_class: class,
        });
    }
    branches.sort_by_key(|b| (b.from, b.to));

    let gen_table = Table::read(dir.join("gen.csv"))?;
    gen_table.warn_unknown(GEN_COLUMNS);
    let (g_uid, g_bus, g_type) =
        (gen_table.col("GEN UID")?, gen_table.col("Bus ID")?, gen_table.col("Unit Type")?);
    let (g_pg, g_qg) = (gen_table.col("MW Inj")?, gen_table.col("MVAR Inj")?);
    let (g_pmax, g_pmin) = (gen_table.col("PMax MW")?, gen_table.col("PMin MW")?);
    let (g_qmax, g_qmin) = (gen_table.col("QMax MVAR")?, gen_table.col("QMin MVAR")?);
    let g_ramp = gen_table.col("Ramp Rate MW/Min")?;
    let g_heat_cold = gen_table.opt_col("Start Heat Cold MBTU");
    let g_nonfuel = gen_table.opt_col("Non Fuel Start Cost $");
    let g_fuel = gen_table.opt_col("Fuel Price $/MMBTU");
    let g_out: Vec<Option<usize>> =
        (0..4).map(|k| gen_table.opt_col(&format!("Output_pct_{k}"))).collect();
    let g_hr_avg = gen_table.opt_col("HR_avg_0");
    let g_hr_incr: Vec<Option<usize>> =
        (1..4).map(|k| gen_table.opt_col(&format!("HR_incr_{k}"))).collect();

    let mut generators = Vec::with_capacity(gen_table.rows.len());
    for row in 0..gen_table.rows.len() {
        let gtype = parse_gen_type(gen_table.text(row, g_type));
        let pgmax = gen_table.f64(row, g_pmax)?;
        let fuel_cost = match g_fuel {
            Some(c) => gen_table.f64(row, c)?,
            None => 0.0,
        };
        let mut out_pct = [0.0; 4];
        for k in 0..4 {
            if let Some(c) = g_out[k] {
                out_pct[k] = gen_table.f64(row, c)?;
            }
        }
        let hr_avg0 = match g_hr_avg {
            Some(c) => gen_table.f64(row, c)?,
            None => 0.0,
        };
        let mut hr_incr = [0.0; 3];
        for k in 0..3 {
            if let Some(c) = g_hr_incr[k] {
                hr_incr[k] = gen_table.f64(row, c)?;
            }
        }
        let (mut qgmin, mut qgmax) =
            (gen_table.f64(row, g_qmin)?, gen_table.f64(row, g_qmax)?);
        if matches!(gtype, GenType::Wind | GenType::Solar) {
            // wind and solar do not provide reactive support here
            qgmin = 0.0;
            qgmax = 0.0;
        }
        let startup_cost = {
            let heat = match g_heat_cold {
                Some(c) => gen_table.f64(row, c)?,
                None => 0.0,
            };
            let nonfuel = match g_nonfuel {
                Some(c) => gen_table.f64(row, c)?,
                None => 0.0,
            };
            nonfuel + heat * fuel_cost
        };
        generators.push(GeneratorRecord {
            id: GenId(0), // assigned after sorting
            uid: gen_table.text(row, g_uid).to_string(),
            bus: BusId(gen_table.u32(row, g_bus)?),
            gtype,
            status: true,
            pg: gen_table.f64(row, g_pg)?,
            qg: gen_table.f64(row, g_qg)?,
            pgmin: gen_table.f64(row, g_pmin)?,
            pgmax,
            qgmin,
            qgmax,
            fuel_cost,
            op_cost_points: op_cost_points(pgmax, fuel_cost, out_pct, hr_avg0, hr_incr),
            startup_cost,
            ramp_rate: gen_table.f64(row, g_ramp)?,
            heat_rate: if hr_avg0 > 0.0 { Some(heat_rate_mmbtu(hr_avg0)) } else { None },
        });
    }
    generators.sort_by(|a, b| a.bus.cmp(&b.bus).then_with(|| a.uid.cmp(&b.uid)));
    for (i, g) in generators.iter_mut().enumerate() {
        g.id = GenId(i as u32 + 1);
    }

    let case = GridCase { base_mva: BASE_MVA, buses, branches, generators };
    case.validate()?;
    Ok(case)
}

/// One timeseries table: validates the Year/Month/Day/Period prefix encodes
/// contiguous periods `1..=rows` and returns per-column values.
fn read_series(table: &Table) -> Result<BTreeMap<String, Vec<f64>>, IngestError> {
    let (c_y, c_m, c_d, c_p) = (
        table.col("Year")?,
        table.col("Month")?,
        table.col("Day")?,
        table.col("Period")?,
    );
    let value_cols: Vec<(usize, String)> = table
        .headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![c_y, c_m, c_d, c_p].contains(i))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    let mut out: BTreeMap<String, Vec<f64>> = value_cols
        .iter()
        .map(|(_, h)| (h.clone(), Vec::with_capacity(table.rows.len())))
        .collect();
    for row in 0..table.rows.len() {
        let year = table.u32(row, c_y)? as i32;
        let (month, day, hour) =
            (table.u32(row, c_m)?, table.u32(row, c_d)?, table.u32(row, c_p)?);
        let idx = period_index(year, month, day, hour)?;
        if idx as usize != row + 1 {
            return Err(IngestError::NonContiguous {
                file: table.file.clone(),
                line: row + 2,
                expected: row + 1,
                got: idx as usize,
            });
        }
        for (col, name) in &value_cols {
            out.get_mut(name).unwrap().push(table.f64(row, *col)?);
        }
    }
    Ok(out)
}

/// Loads the DAY_AHEAD hourly timeseries under `root` and binds the columns
/// to the case: load columns to areas, availability columns to renewable
/// units by their uid. Every solar, wind and hydro unit must end up with a
/// profile; storage, CSP and sync-cond units are profile-less by type.
pub fn load_timeseries(root: &Path, case: &GridCase) -> Result<TimeseriesSet, IngestError> {
    let dir = timeseries_dir(root);

    let load_file = dir.join("Load").join("DAY_AHEAD_regional_Load.csv");
    let load_table = Table::read(load_file)?;
    let load_series = read_series(&load_table)?;
    let period_count = load_series.values().next().map(|v| v.len()).unwrap_or(0);
    let known_areas: BTreeSet<AreaId> = case.areas().into_iter().collect();
    let mut area_load_mw = BTreeMap::new();
    for (name, values) in load_series {
        let area = name.parse::<u32>().map(AreaId).map_err(|_| {
            IngestError::UnknownAreaColumn { file: load_table.file.clone(), column: name.clone() }
        })?;
        if !known_areas.contains(&area) {
            return Err(IngestError::UnknownAreaColumn {
                file: load_table.file.clone(),
                column: name,
            });
        }
        area_load_mw.insert(area, values);
    }
    if area_load_mw.is_empty() {
        return Err(IngestError::NoLoadSeries);
    }

    let candidates = [
        ("WIND", "DAY_AHEAD_wind.csv"),
        ("PV", "DAY_AHEAD_pv.csv"),
        ("RTPV", "DAY_AHEAD_rtpv.csv"),
        ("HYDRO", "DAY_AHEAD_hydro.csv"),
    ];
    let mut unit_availability_mw: BTreeMap<GenId, Vec<f64>> = BTreeMap::new();
    for (sub, file) in candidates {
        let path = dir.join(sub).join(file);
        if !path.is_file() {
            continue;
        }
        let table = Table::read(path)?;
        let series = read_series(&table)?;
        for (uid, values) in series {
            let unit = case.gen_by_uid(&uid).filter(|g| g.gtype.is_renewable()).ok_or_else(
                || IngestError::UnknownUnitColumn { file: table.file.clone(), column: uid.clone() },
            )?;
            if values.len() != period_count {
                return Err(IngestError::RowCountMismatch {
                    file: table.file.clone(),
                    rows: values.len(),
                    expected: period_count,
                });
            }
            unit_availability_mw.insert(unit.id, values);
        }
    }

    for g in &case.generators {
        if g.gtype.is_renewable() && !unit_availability_mw.contains_key(&g.id) {
            return Err(IngestError::MissingProfile { uid: g.uid.clone() });
        }
    }

    Ok(TimeseriesSet { period_count, area_load_mw, unit_availability_mw })
}

/// Structural counts used by the `validate` banner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CaseCounts {
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
    pub conventional: usize,
    pub renewable: usize,
    pub storage: usize,
    pub sync_cond: usize,
    pub loads: usize,
}

pub fn case_counts(case: &GridCase) -> CaseCounts {
    let mut counts = CaseCounts {
        buses: case.buses.len(),
        branches: case.branches.len(),
        generators: case.generators.len(),
        conventional: 0,
        renewable: 0,
        storage: 0,
        sync_cond: 0,
        loads: case.buses.iter().filter(|b| b.pd != 0.0 || b.qd != 0.0).count(),
    };
    for g in &case.generators {
        match g.gtype {
            GenType::Conventional => counts.conventional += 1,
            GenType::Storage => counts.storage += 1,
            GenType::SyncCond => counts.sync_cond += 1,
            // the dataset's renewable block includes CSP
            _ => counts.renewable += 1,
        }
    }
    counts
}

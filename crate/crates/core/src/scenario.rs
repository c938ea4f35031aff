//! Per-period case construction: load rescaling from the hourly series,
//! renewable portfolio shaping toward the Pacific-Northwest-style goal
//! shares, synchronous-condenser updates and augmentation, storage
//! disabling, and the staged restoration topology.
//!
//! The transformations run in a fixed order inside [`build_period`]:
//! storage off, stage applied, active loads rescaled, reactive loads
//! rescaled, renewable limits shaped, sync-conds augmented.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::grid::{AreaId, GenId, GenType, GeneratorRecord, GridCase};
use crate::ingest::{self, TimeseriesSet};

/// Target shares of total load per renewable type, plus the legal minimum
/// renewable share. Defaults model the predicted 2020 Pacific Northwest
/// portfolio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalPortfolio {
    pub solar_pct: f64,
    pub hydro_pct: f64,
    pub wind_pct: f64,
    /// "Other renewable" share, redistributed to wind and solar in
    /// proportion to their forecast totals each period.
    pub other_pct: f64,
    pub min_renewable_pct: f64,
}

impl Default for GoalPortfolio {
    fn default() -> Self {
        GoalPortfolio {
            solar_pct: 0.005,
            hydro_pct: 0.4675,
            wind_pct: 0.105,
            other_pct: 0.0225,
            min_renewable_pct: 0.20,
        }
    }
}

#[derive(Error, Debug)]
pub enum ScenarioError {
    #[error("area {area} carries load but its default-case total demand is 0")]
    ZeroDefaultTotal { area: AreaId },
    #[error("area {area} carries reactive load but its load series peak is 0")]
    ZeroPeakLoad { area: AreaId },
    #[error("no load series for area {area}")]
    MissingAreaSeries { area: AreaId },
    #[error("period {period} outside the {count}-period series")]
    BadPeriod { period: u32, count: usize },
    #[error("stage '{name}' energizes no (area, kV) pair")]
    EmptyStage { name: String },
    #[error("stages '{first}' and '{second}' overlap or are out of order")]
    StageOrder { first: String, second: String },
    #[error("stage config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    BadDate(#[from] ingest::IngestError),
}

/// Reference quantities frozen from the pristine ingest output: per-area
/// default active totals (the active rescale denominator) and per-area
/// series peaks (the reactive rescale denominator). Compute once, reuse for
/// every period.
#[derive(Clone, Debug)]
pub struct AreaDefaults {
    pub active_total: BTreeMap<AreaId, f64>,
    pub active_peak: BTreeMap<AreaId, f64>,
}

impl AreaDefaults {
    pub fn compute(base: &GridCase, ts: &TimeseriesSet) -> AreaDefaults {
        let mut active_total = BTreeMap::new();
        for bus in &base.buses {
            *active_total.entry(bus.area).or_insert(0.0) += bus.pd;
        }
        let active_peak = base
            .areas()
            .into_iter()
            .map(|a| (a, ts.area_peak_load(a)))
            .collect();
        AreaDefaults { active_total, active_peak }
    }
}

fn check_period(ts: &TimeseriesSet, period: u32) -> Result<(), ScenarioError> {
    if period == 0 || period as usize > ts.period_count {
        return Err(ScenarioError::BadPeriod { period, count: ts.period_count });
    }
    Ok(())
}

/// Scales every bus's active load so that an area's total tracks its hourly
/// series value: `new_pd = pd * series(area, period) / default_area_total`.
pub fn rescale_active_loads(
    case: &mut GridCase,
    ts: &TimeseriesSet,
    period: u32,
    defaults: &AreaDefaults,
) -> Result<(), ScenarioError> {
    check_period(ts, period)?;
    let mut ratio: BTreeMap<AreaId, f64> = BTreeMap::new();
    for area in case.areas() {
        let loaded = case.buses.iter().any(|b| b.area == area && b.pd != 0.0);
        if !loaded {
            ratio.insert(area, 0.0);
            continue;
        }
        if !ts.area_load_mw.contains_key(&area) {
            return Err(ScenarioError::MissingAreaSeries { area });
        }
        let total = defaults.active_total.get(&area).copied().unwrap_or(0.0);
        if total <= 0.0 {
            return Err(ScenarioError::ZeroDefaultTotal { area });
        }
        ratio.insert(area, ts.area_load(area, period) / total);
    }
    for bus in &mut case.buses {
        bus.pd *= ratio.get(&bus.area).copied().unwrap_or(0.0);
    }
    Ok(())
}

/// Scales reactive loads by the hour's share of the area's series peak:
/// `new_qd = qd * series(area, period) / peak(area)`. At the peak hour the
/// defaults are restored exactly.
pub fn rescale_reactive_loads(
    case: &mut GridCase,
    ts: &TimeseriesSet,
    period: u32,
    defaults: &AreaDefaults,
) -> Result<(), ScenarioError> {
    check_period(ts, period)?;
    let mut ratio: BTreeMap<AreaId, f64> = BTreeMap::new();
    for area in case.areas() {
        let loaded = case.buses.iter().any(|b| b.area == area && b.qd != 0.0);
        if !loaded {
            ratio.insert(area, 0.0);
            continue;
        }
        if !ts.area_load_mw.contains_key(&area) {
            return Err(ScenarioError::MissingAreaSeries { area });
        }
        let peak = defaults.active_peak.get(&area).copied().unwrap_or(0.0);
        if peak <= 0.0 {
            return Err(ScenarioError::ZeroPeakLoad { area });
        }
        ratio.insert(area, ts.area_load(area, period) / peak);
    }
    for bus in &mut case.buses {
        bus.qd *= ratio.get(&bus.area).copied().unwrap_or(0.0);
    }
    Ok(())
}

/// Per-period portfolio statistics produced by [`shape_renewable_portfolio`].
#[derive(Clone, Debug, Default)]
pub struct PortfolioOutcome {
    /// Total in-service active load when shaping ran, MW.
    pub total_load: f64,
    /// Sum of enabled renewable pgmax after shaping, MW.
    pub renewable_pgmax: f64,
    /// Shaped totals per renewable type, MW.
    pub type_totals: BTreeMap<GenType, f64>,
    /// `renewable_pgmax / total_load` (0 when the system is dark).
    pub renew_pct: f64,
    /// MW still missing toward the minimum share after the top-up used all
    /// forecast headroom (0 when the floor was met).
    pub floor_shortfall: f64,
}

/// Reshapes renewable pgmax limits toward the goal portfolio:
///
/// * CSP disabled outright; other renewables enabled iff their forecast is
///   positive and their bus is energized;
/// * the "other" share is split between wind and solar pro rata to their
///   forecast totals (dropped when both are zero);
/// * a type whose forecast total exceeds its goal share of total load is
///   scaled down by a common factor, otherwise forecasts pass through;
/// * if the summed limits still miss the minimum renewable share, units are
///   topped back up toward their forecasts in proportion to the remaining
///   headroom.
///
/// pgmin and all reactive limits stay untouched.
pub fn shape_renewable_portfolio(
    case: &mut GridCase,
    ts: &TimeseriesSet,
    period: u32,
    goal: &GoalPortfolio,
) -> Result<PortfolioOutcome, ScenarioError> {
    check_period(ts, period)?;
    let total_load: f64 =
        case.buses.iter().filter(|b| b.in_service).map(|b| b.pd).sum();

    // Enablement pass: forecast > 0 on an energized bus.
    let mut forecast: BTreeMap<GenId, f64> = BTreeMap::new();
    let mut type_forecast: BTreeMap<GenType, f64> = BTreeMap::new();
    let bus_on: BTreeMap<_, _> = case.buses.iter().map(|b| (b.id, b.in_service)).collect();
    for g in &mut case.generators {
        if g.gtype == GenType::Csp {
            g.status = false;
            continue;
        }
        if !g.gtype.is_renewable() {
            continue;
        }
        let avail = ts.availability(g.id, period);
        g.status = avail > 0.0 && bus_on.get(&g.bus).copied().unwrap_or(false);
        if g.status {
            forecast.insert(g.id, avail);
            *type_forecast.entry(g.gtype).or_insert(0.0) += avail;
        } else {
            g.pgmax = 0.0;
        }
    }

    // Goal shares with the "other" slice redistributed onto wind and solar.
    let wind_f = type_forecast.get(&GenType::Wind).copied().unwrap_or(0.0);
    let solar_f = type_forecast.get(&GenType::Solar).copied().unwrap_or(0.0);
    let mut share: BTreeMap<GenType, f64> = BTreeMap::new();
    share.insert(GenType::Hydro, goal.hydro_pct);
    if wind_f + solar_f > 0.0 {
        share.insert(GenType::Wind, goal.wind_pct + goal.other_pct * wind_f / (wind_f + solar_f));
        share.insert(GenType::Solar, goal.solar_pct + goal.other_pct * solar_f / (wind_f + solar_f));
    } else {
        share.insert(GenType::Wind, goal.wind_pct);
        share.insert(GenType::Solar, goal.solar_pct);
    }

    // Cap each type at its goal share of the load.
    for g in &mut case.generators {
        if !g.gtype.is_renewable() || !g.status {
            continue;
        }
        let f = forecast[&g.id];
        let total = type_forecast[&g.gtype];
        let cap = share[&g.gtype] * total_load;
        g.pgmax = if total <= cap { f } else { f * cap / total };
    }

    // Minimum-share top-up, pro rata to forecast headroom.
    let shaped: f64 = enabled_renewables(case).map(|g| g.pgmax).sum();
    let floor = goal.min_renewable_pct * total_load;
    let mut floor_shortfall = 0.0;
    if shaped < floor {
        let headroom: f64 =
            enabled_renewables(case).map(|g| forecast[&g.id] - g.pgmax).sum();
        let need = floor - shaped;
        if headroom > 0.0 {
            let take = need.min(headroom);
            for g in &mut case.generators {
                if g.gtype.is_renewable() && g.status {
                    g.pgmax += (forecast[&g.id] - g.pgmax) * take / headroom;
                }
            }
            floor_shortfall = (need - headroom).max(0.0);
        } else {
            floor_shortfall = need;
        }
    }

    let renewable_pgmax: f64 = enabled_renewables(case).map(|g| g.pgmax).sum();
    let mut type_totals = BTreeMap::new();
    for g in enabled_renewables(case) {
        *type_totals.entry(g.gtype).or_insert(0.0) += g.pgmax;
    }
    Ok(PortfolioOutcome {
        total_load,
        renewable_pgmax,
        type_totals,
        renew_pct: if total_load > 0.0 { renewable_pgmax / total_load } else { 0.0 },
        floor_shortfall,
    })
}

fn enabled_renewables(case: &GridCase) -> impl Iterator<Item = &GeneratorRecord> {
    case.generators.iter().filter(|g| g.gtype.is_renewable() && g.status)
}

/// Updates the stock sync-conds to the widened (-50, 100) MVar band and
/// adds one sync-cond per energized bus hosting an enabled renewable unit,
/// with limits bracketed by the bus's total enabled renewable pgmax:
/// over 250 MW -> (-50, 100); over 100 MW -> (-25, 25); else (-5, 10).
/// Returns the ids of the added units.
pub fn augment_sync_conds(case: &mut GridCase) -> Vec<GenId> {
    for g in &mut case.generators {
        if g.gtype == GenType::SyncCond {
            g.qgmin = -50.0;
            g.qgmax = 100.0;
        }
    }

    let mut bus_renewable: BTreeMap<crate::grid::BusId, f64> = BTreeMap::new();
    for g in &case.generators {
        if g.gtype.is_renewable() && g.status && case.bus_in_service(g.bus) {
            *bus_renewable.entry(g.bus).or_insert(0.0) += g.pgmax;
        }
    }

    let mut next_id = case.generators.iter().map(|g| g.id.0).max().unwrap_or(0) + 1;
    let mut added = Vec::new();
    for (&bus, &total) in &bus_renewable {
        let (qgmin, qgmax) = if total > 250.0 {
            (-50.0, 100.0)
        } else if total > 100.0 {
            (-25.0, 25.0)
        } else {
            (-5.0, 10.0)
        };
        let id = GenId(next_id);
        next_id += 1;
        case.generators.push(GeneratorRecord {
            id,
            uid: format!("ASC_{bus}"),
            bus,
            gtype: GenType::SyncCond,
            status: true,
            pg: 0.0,
            qg: 0.0,
            pgmin: 0.0,
            pgmax: 0.0,
            qgmin,
            qgmax,
            fuel_cost: 0.0,
            op_cost_points: [(0.0, 0.0); 4],
            startup_cost: 0.0,
            ramp_rate: 0.0,
            heat_rate: None,
        });
        added.push(id);
    }
    added
}

/// Disables every storage unit.
pub fn disable_storage(case: &mut GridCase) {
    for g in &mut case.generators {
        if g.gtype == GenType::Storage {
            g.status = false;
        }
    }
}

/// One window of the staged restoration timeline: which (area, voltage
/// class) pairs are energized over an inclusive period range.
#[derive(Clone, Debug, PartialEq)]
pub struct RestorationStage {
    pub name: String,
    /// Inclusive 1-based period bounds.
    pub first_period: u32,
    pub last_period: u32,
    /// Energized kV classes per area; areas absent here are dark.
    pub energized: BTreeMap<AreaId, Vec<f64>>,
}

impl RestorationStage {
    fn bus_energized(&self, area: AreaId, base_kv: f64) -> bool {
        self.energized
            .get(&area)
            .is_some_and(|kvs| kvs.iter().any(|&kv| (kv - base_kv).abs() < 1e-6))
    }
}

/// The ordered stage list; periods outside every window keep the full
/// topology.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StageConfig {
    pub stages: Vec<RestorationStage>,
}

/// TOML layout for a stage file: a list of `[[stage]]` tables with
/// calendar bounds and per-area kV lists.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFile {
    stage: Vec<StageEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StageEntry {
    name: String,
    start: DateHour,
    end: DateHour,
    /// Keys are area numbers as strings (TOML table keys), values kV lists.
    areas: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DateHour {
    month: u32,
    day: u32,
    hour: u32,
}

impl StageConfig {
    /// Parses and validates a TOML stage description.
    pub fn from_toml(text: &str) -> Result<StageConfig, ScenarioError> {
        let file: StageFile =
            toml::from_str(text).map_err(|e| ScenarioError::BadConfig(e.to_string()))?;
        let mut stages = Vec::new();
        for entry in file.stage {
            let first_period =
                ingest::period_index(ingest::STUDY_YEAR, entry.start.month, entry.start.day, entry.start.hour)?;
            let last_period =
                ingest::period_index(ingest::STUDY_YEAR, entry.end.month, entry.end.day, entry.end.hour)?;
            let mut energized = BTreeMap::new();
            for (key, kvs) in entry.areas {
                let area: u32 = key.parse().map_err(|_| {
                    ScenarioError::BadConfig(format!("area key '{key}' is not a number"))
                })?;
                energized.insert(AreaId(area), kvs);
            }
            stages.push(RestorationStage { name: entry.name, first_period, last_period, energized });
        }
        let config = StageConfig { stages };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for s in &self.stages {
            if s.energized.is_empty() || s.energized.values().all(|kv| kv.is_empty()) {
                return Err(ScenarioError::EmptyStage { name: s.name.clone() });
            }
            if s.first_period > s.last_period {
                return Err(ScenarioError::StageOrder {
                    first: s.name.clone(),
                    second: s.name.clone(),
                });
            }
        }
        for pair in self.stages.windows(2) {
            if pair[1].first_period <= pair[0].last_period {
                return Err(ScenarioError::StageOrder {
                    first: pair[0].name.clone(),
                    second: pair[1].name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn stage_for(&self, period: u32) -> Option<&RestorationStage> {
        self.stages.iter().find(|s| s.first_period <= period && period <= s.last_period)
    }

    /// The built-in Cascadia-earthquake restoration timeline: normal
    /// operation through Jan 26 21h; Areas 1-2 dark until Jan 29 9h; the
    /// 230 kV side of Area 2 back through Feb 3 17h; the 138 kV side of
    /// Area 2 back through Feb 8 24h with Area 1 still dark.
    pub fn csz_default() -> StageConfig {
        let all = vec![138.0, 230.0];
        let period = |m, d, h| ingest::period_index(ingest::STUDY_YEAR, m, d, h).unwrap();
        let mk = |name: &str, first: u32, last: u32, areas: Vec<(u32, Vec<f64>)>| RestorationStage {
            name: name.to_string(),
            first_period: first,
            last_period: last,
            energized: areas.into_iter().map(|(a, kv)| (AreaId(a), kv)).collect(),
        };
        StageConfig {
            stages: vec![
                mk(
                    "Normal Operation",
                    period(1, 26, 1),
                    period(1, 26, 21),
                    vec![(1, all.clone()), (2, all.clone()), (3, all.clone())],
                ),
                mk(
                    "CSZ Earthquake Disaster",
                    period(1, 26, 22),
                    period(1, 29, 9),
                    vec![(3, all.clone())],
                ),
                mk(
                    "Partially Restored Operation I.",
                    period(1, 29, 10),
                    period(2, 3, 17),
                    vec![(2, vec![230.0]), (3, all.clone())],
                ),
                mk(
                    "Partially Restored Operation II.",
                    period(2, 3, 18),
                    period(2, 8, 24),
                    vec![(2, all.clone()), (3, all)],
                ),
            ],
        }
    }
}

/// De-energizes everything outside the stage's (area, kV) pairs: buses out
/// of service, branches opened when either endpoint is dark, units on dark
/// buses disabled.
pub fn apply_restoration_stage(
    case: &mut GridCase,
    stage: &RestorationStage,
) -> Result<(), ScenarioError> {
    if stage.energized.is_empty() || stage.energized.values().all(|kv| kv.is_empty()) {
        return Err(ScenarioError::EmptyStage { name: stage.name.clone() });
    }
    for bus in &mut case.buses {
        bus.in_service = bus.in_service && stage.bus_energized(bus.area, bus.base_kv);
    }
    let on: BTreeMap<_, _> = case.buses.iter().map(|b| (b.id, b.in_service)).collect();
    for br in &mut case.branches {
        br.in_service = br.in_service && on[&br.from] && on[&br.to];
    }
    for g in &mut case.generators {
        g.status = g.status && on[&g.bus];
    }
    Ok(())
}

/// Everything downstream needs to know about how a period's case was built.
#[derive(Clone, Debug)]
pub struct ScenarioMeta {
    pub period: u32,
    /// 1-24 within the day.
    pub hour_of_day: u32,
    pub stage_name: Option<String>,
    /// Sync-conds introduced by the augmentation pass this period.
    pub added_sync_conds: Vec<GenId>,
    pub portfolio: PortfolioOutcome,
}

/// Runs the full per-period pipeline on a clone of the base case.
pub fn build_period(
    base: &GridCase,
    defaults: &AreaDefaults,
    ts: &TimeseriesSet,
    period: u32,
    goal: &GoalPortfolio,
    stages: Option<&StageConfig>,
) -> Result<(GridCase, ScenarioMeta), ScenarioError> {
    check_period(ts, period)?;
    let mut case = base.clone();
    disable_storage(&mut case);
    let stage = stages.and_then(|s| s.stage_for(period));
    if let Some(stage) = stage {
        apply_restoration_stage(&mut case, stage)?;
    }
    rescale_active_loads(&mut case, ts, period, defaults)?;
    rescale_reactive_loads(&mut case, ts, period, defaults)?;
    let portfolio = shape_renewable_portfolio(&mut case, ts, period, goal)?;
    let added_sync_conds = augment_sync_conds(&mut case);
    Ok((
        case,
        ScenarioMeta {
            period,
            hour_of_day: (period - 1) % 24 + 1,
            stage_name: stage.map(|s| s.name.clone()),
            added_sync_conds,
            portfolio,
        },
    ))
}

//! Static network model: buses, branches, generator records and the
//! schedules produced for them.
//!
//! All quantities are kept in physical units (MW, MVar, kV); the power-flow
//! solver converts to per-unit internally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// System base power used for per-unit conversion, MVA.
pub const BASE_MVA: f64 = 100.0;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct BusId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct AreaId(pub u32);

/// Dense generator identifier assigned at ingest in normalized order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct GenId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for AreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for GenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bus role as labelled in the source data. The solvers re-derive the slack
/// per island from the enabled units, so this is informational.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenType {
    Conventional,
    Solar,
    Wind,
    Hydro,
    Csp,
    Storage,
    SyncCond,
}

impl GenType {
    /// Types that draw their availability from a forecast timeseries and
    /// count toward the renewable portfolio.
    pub fn is_renewable(self) -> bool {
        matches!(self, GenType::Solar | GenType::Wind | GenType::Hydro)
    }
}

impl fmt::Display for GenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GenType::Conventional => "conventional",
            GenType::Solar => "solar",
            GenType::Wind => "wind",
            GenType::Hydro => "hydro",
            GenType::Csp => "csp",
            GenType::Storage => "storage",
            GenType::SyncCond => "sync_cond",
        };
        f.write_str(s)
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub area: AreaId,
    pub base_kv: f64,
    pub kind: BusKind,
    pub voltage_setpoint: f64,
    /// Active load, MW.
    pub pd: f64,
    /// Reactive load, MVar.
    pub qd: f64,
    /// De-energized buses (restoration staging) are out of service; their
    /// load and units drop out of every balance.
    pub in_service: bool,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Series resistance / reactance, per unit on [`BASE_MVA`].
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, per unit.
    pub b: f64,
    /// Thermal rating, MVA. Zero means unlimited.
    pub rating: f64,
    pub in_service: bool,
    /// kV class the branch belongs to: the lower of its endpoint base
    /// voltages. Restoration stages energize (area, class) pairs.
    pub voltage_class: f64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub id: GenId,
    /// Unit identifier from the source data, e.g. "301_CT_1".
    pub uid: String,
    pub bus: BusId,
    pub gtype: GenType,
    /// Enabled flag. Disabled units never appear in any balance.
    pub status: bool,
    /// Initial injections from the source data, MW / MVar.
    pub pg: f64,
    pub qg: f64,
    pub pgmin: f64,
    pub pgmax: f64,
    pub qgmin: f64,
    pub qgmax: f64,
    /// Fuel price, $/MMBTU.
    pub fuel_cost: f64,
    /// Piecewise operating-cost curve: four (MW, $/hr) points.
    pub op_cost_points: [(f64, f64); 4],
    /// Cold-start cost, $.
    pub startup_cost: f64,
    /// Ramp rate, MW/min.
    pub ramp_rate: f64,
    /// Heat rate, MMBTU/MWh, when the dataset provides one.
    pub heat_rate: Option<f64>,
}

impl GeneratorRecord {
    /// Mean of the four $/hr/MW values of the operating-cost curve.
    /// Zero-MW points carry no slope information and are skipped.
    pub fn avg_op_cost(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for &(mw, cost) in &self.op_cost_points {
            if mw > 0.0 {
                sum += cost / mw;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Fuel expense per MWh: fuel price times heat rate, with a flat
    /// 9.5 MMBTU/MWh stand-in when the dataset gives no heat rate.
    pub fn fuel_cost_per_mwh(&self) -> f64 {
        const DEFAULT_HEAT_RATE: f64 = 9.5;
        self.fuel_cost * self.heat_rate.unwrap_or(DEFAULT_HEAT_RATE)
    }

    /// Marginal $/MWh used for merit ordering: operating plus fuel cost.
    pub fn marginal_cost(&self) -> f64 {
        self.avg_op_cost() + self.fuel_cost_per_mwh()
    }
}

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("branch {from}-{to} references unknown bus {bus}")]
    DanglingBranch { from: BusId, to: BusId, bus: BusId },
    #[error("generator {uid} references unknown bus {bus}")]
    DanglingGenerator { uid: String, bus: BusId },
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("duplicate generator uid {0}")]
    DuplicateGenerator(String),
    #[error("case has no buses")]
    Empty,
}

#[derive(Clone, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<GeneratorRecord>,
}

impl GridCase {
    /// Checks referential integrity and uniqueness. Called after ingest and
    /// usable on hand-built cases in tests.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.buses.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(ModelError::DuplicateBus(b.id));
            }
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return Err(ModelError::DanglingBranch { from: br.from, to: br.to, bus: end });
                }
            }
        }
        let mut uids = BTreeSet::new();
        for g in &self.generators {
            if !ids.contains(&g.bus) {
                return Err(ModelError::DanglingGenerator { uid: g.uid.clone(), bus: g.bus });
            }
            if !uids.insert(g.uid.as_str()) {
                return Err(ModelError::DuplicateGenerator(g.uid.clone()));
            }
        }
        Ok(())
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn gen(&self, id: GenId) -> Option<&GeneratorRecord> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn gen_mut(&mut self, id: GenId) -> Option<&mut GeneratorRecord> {
        self.generators.iter_mut().find(|g| g.id == id)
    }

    pub fn gen_by_uid(&self, uid: &str) -> Option<&GeneratorRecord> {
        self.generators.iter().find(|g| g.uid == uid)
    }

    /// Sorted list of areas appearing on buses.
    pub fn areas(&self) -> Vec<AreaId> {
        let set: BTreeSet<AreaId> = self.buses.iter().map(|b| b.area).collect();
        set.into_iter().collect()
    }

    /// Areas that still have at least one in-service bus.
    pub fn energized_areas(&self) -> Vec<AreaId> {
        let set: BTreeSet<AreaId> =
            self.buses.iter().filter(|b| b.in_service).map(|b| b.area).collect();
        set.into_iter().collect()
    }

    /// (MW, MVar) load of an area, summed over its in-service buses.
    pub fn total_area_demand(&self, area: AreaId) -> (f64, f64) {
        let mut pd = 0.0;
        let mut qd = 0.0;
        for b in &self.buses {
            if b.area == area && b.in_service {
                pd += b.pd;
                qd += b.qd;
            }
        }
        (pd, qd)
    }

    /// Units sitting at a given bus.
    pub fn gens_at_bus(&self, bus: BusId) -> impl Iterator<Item = &GeneratorRecord> {
        self.generators.iter().filter(move |g| g.bus == bus)
    }

    /// Enabled units whose bus is in service: the only ones that take part
    /// in dispatch and power flow.
    pub fn active_generators(&self) -> impl Iterator<Item = &GeneratorRecord> {
        self.generators.iter().filter(|g| g.status && self.bus_in_service(g.bus))
    }

    pub fn bus_in_service(&self, id: BusId) -> bool {
        self.bus(id).map(|b| b.in_service).unwrap_or(false)
    }

    /// Connected components over in-service buses and in-service branches.
    /// Islands are sorted by their smallest bus id; each island's buses are
    /// sorted ascending. Together they partition the in-service bus set.
    pub fn detect_islands(&self) -> Vec<Vec<BusId>> {
        let live: Vec<BusId> =
            self.buses.iter().filter(|b| b.in_service).map(|b| b.id).collect();
        let mut adj: BTreeMap<BusId, Vec<BusId>> =
            live.iter().map(|&b| (b, Vec::new())).collect();
        for br in &self.branches {
            if br.in_service && adj.contains_key(&br.from) && adj.contains_key(&br.to) {
                adj.get_mut(&br.from).unwrap().push(br.to);
                adj.get_mut(&br.to).unwrap().push(br.from);
            }
        }
        let mut seen: BTreeSet<BusId> = BTreeSet::new();
        let mut islands = Vec::new();
        for &start in &live {
            if seen.contains(&start) {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen.insert(start);
            while let Some(b) = stack.pop() {
                comp.push(b);
                for &n in &adj[&b] {
                    if seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
            comp.sort();
            islands.push(comp);
        }
        islands.sort_by_key(|c| c[0]);
        islands
    }

    /// Slack unit of an island: the enabled conventional unit with the
    /// largest pgmax; ties go to the lowest bus id, then lowest unit id.
    /// `None` when the island has no enabled conventional unit.
    pub fn slack_unit(&self, island: &[BusId]) -> Option<&GeneratorRecord> {
        let members: BTreeSet<BusId> = island.iter().copied().collect();
        self.generators
            .iter()
            .filter(|g| {
                g.status && g.gtype == GenType::Conventional && members.contains(&g.bus)
            })
            .min_by(|a, b| {
                b.pgmax
                    .partial_cmp(&a.pgmax)
                    .unwrap()
                    .then(a.bus.cmp(&b.bus))
                    .then(a.id.cmp(&b.id))
            })
    }

    /// Canonical JSON rendering: field order fixed by the struct layout,
    /// arrays in normalized ingest order, so equal cases serialize to equal
    /// bytes.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }

    pub fn from_canonical_json(text: &str) -> Result<GridCase, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Scheduler family that produced a [`Schedule`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Method {
    Uss,
    MilpUc,
    Mng,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Uss, Method::MilpUc, Method::Mng];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Uss => "USS",
            Method::MilpUc => "MILP_UC",
            Method::Mng => "MNG",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Commitment and dispatch decided for one period.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Schedule {
    pub period: u32,
    pub method: Method,
    /// On/off for every unit in the period case.
    pub unit_status: BTreeMap<GenId, bool>,
    /// (pg MW, qg MVar) for enabled units, from the verifying power flow
    /// when it converged, otherwise the dispatch setpoints.
    pub setpoints: BTreeMap<GenId, (f64, f64)>,
    /// Verdict of the verifying dispatch + power flow.
    pub feasible: bool,
    /// Selection-walk round that produced the final answer (goal-driven
    /// scheduler only).
    pub step_reached: Option<u8>,
    /// Wall-clock seconds spent inside the scheduler call.
    pub elapsed_s: f64,
}

impl Schedule {
    /// Number of enabled conventional units.
    pub fn enabled_conventional(&self, case: &GridCase) -> usize {
        self.unit_status
            .iter()
            .filter(|&(id, &on)| {
                on && case.gen(*id).map(|g| g.gtype == GenType::Conventional).unwrap_or(false)
            })
            .count()
    }
}

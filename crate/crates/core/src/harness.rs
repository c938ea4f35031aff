//! Window driver: runs the selected schedulers hour-by-hour over a period
//! range, chaining each method's own previous schedule into the next hour
//! (prior-state ranking bonus, startup-cost zeroing, ramp anchoring), and
//! accumulates the comparison metrics. Scenario construction happens once
//! per period per method and is excluded from the timing columns — each
//! scheduler reports its own decision time.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::json;

use crate::baselines::{run_milp_uc, run_mng};
use crate::gpwd;
use crate::grid::{GridCase, Method, Schedule};
use crate::ingest::TimeseriesSet;
use crate::scenario::{build_period, AreaDefaults, GoalPortfolio, ScenarioError, StageConfig};
use crate::steady_state::SolveOptions;
use crate::uss::run_uss;

/// One method's aggregate over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow {
    pub method: Method,
    pub working_count: usize,
    pub not_working_count: usize,
    /// Sum of per-period scheduler decision times, seconds.
    pub total_elapsed_s: f64,
    pub avg_enabled_conventional: f64,
    pub avg_renewable_share: f64,
}

/// One (method, period) observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodRecord {
    pub method: Method,
    pub period: u32,
    pub feasible: bool,
    pub step_reached: Option<u8>,
    pub enabled_conventional: usize,
    pub renewable_share: f64,
    pub elapsed_s: f64,
}

/// The whole comparison result for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub first_period: u32,
    pub last_period: u32,
    pub rows: Vec<MethodRow>,
    pub records: Vec<PeriodRecord>,
    /// Elapsed-time ratios of every other method against the first, keyed
    /// `elapsed_<TAG>_over_<TAG>`.
    pub ratios: BTreeMap<String, f64>,
}

/// Report plus the per-period artifacts worth dumping.
#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub report: BenchmarkReport,
    /// Every schedule produced, in (method, period) run order.
    pub schedules: Vec<Schedule>,
    /// Ranking table per period, CSV-rendered.
    pub gpwd_tables: BTreeMap<u32, String>,
}

/// Share of in-service active demand covered by renewable output in a
/// schedule (0 when the system carries no load).
pub fn renewable_share(case: &GridCase, schedule: &Schedule) -> f64 {
    let demand: f64 =
        case.buses.iter().filter(|b| b.in_service).map(|b| b.pd).sum();
    if demand <= 0.0 {
        return 0.0;
    }
    let renewable: f64 = case
        .generators
        .iter()
        .filter(|g| g.gtype.is_renewable())
        .filter_map(|g| schedule.setpoints.get(&g.id))
        .map(|&(pg, _)| pg)
        .sum();
    renewable / demand
}

/// Runs `methods` over `first..=last`, sequential within each method so the
/// previous-period coupling is honest. Scenario-construction failures abort
/// the window (bad input data); scheduler verdicts are recorded as they
/// come, working or not.
#[allow(clippy::too_many_arguments)]
pub fn run_window(
    base: &GridCase,
    ts: &TimeseriesSet,
    methods: &[Method],
    first: u32,
    last: u32,
    goal: &GoalPortfolio,
    stages: Option<&StageConfig>,
    opts: &SolveOptions,
) -> Result<WindowOutcome, ScenarioError> {
    let defaults = AreaDefaults::compute(base, ts);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut schedules = Vec::new();
    let mut gpwd_tables: BTreeMap<u32, String> = BTreeMap::new();

    for &method in methods {
        let mut prev: Option<Schedule> = None;
        let mut working = 0usize;
        let mut elapsed = 0.0f64;
        let mut enabled_sum = 0usize;
        let mut share_sum = 0.0f64;
        let mut count = 0usize;

        for period in first..=last {
            let (case, meta) = build_period(base, &defaults, ts, period, goal, stages)?;
            let schedule = match method {
                Method::Uss => {
                    let out = run_uss(&case, &meta, prev.as_ref(), opts);
                    gpwd_tables
                        .entry(period)
                        .or_insert_with(|| gpwd::breakdown_csv(&out.ranking));
                    out.schedule
                }
                Method::MilpUc => run_milp_uc(&case, period, prev.as_ref(), opts).schedule,
                Method::Mng => {
                    let out = run_mng(&case, &meta, prev.as_ref(), opts);
                    gpwd_tables
                        .entry(period)
                        .or_insert_with(|| gpwd::breakdown_csv(&out.ranking));
                    out.schedule
                }
            };
            let enabled = schedule.enabled_conventional(&case);
            let share = renewable_share(&case, &schedule);
            records.push(PeriodRecord {
                method,
                period,
                feasible: schedule.feasible,
                step_reached: schedule.step_reached,
                enabled_conventional: enabled,
                renewable_share: share,
                elapsed_s: schedule.elapsed_s,
            });
            working += usize::from(schedule.feasible);
            elapsed += schedule.elapsed_s;
            enabled_sum += enabled;
            share_sum += share;
            count += 1;
            prev = Some(schedule.clone());
            schedules.push(schedule);
        }

        let denom = count.max(1) as f64;
        rows.push(MethodRow {
            method,
            working_count: working,
            not_working_count: count - working,
            total_elapsed_s: elapsed,
            avg_enabled_conventional: enabled_sum as f64 / denom,
            avg_renewable_share: share_sum / denom,
        });
    }

    let mut ratios = BTreeMap::new();
    if let Some(first_row) = rows.first() {
        if first_row.total_elapsed_s > 0.0 {
            for row in rows.iter().skip(1) {
                ratios.insert(
                    format!("elapsed_{}_over_{}", row.method.tag(), first_row.method.tag()),
                    row.total_elapsed_s / first_row.total_elapsed_s,
                );
            }
        }
    }

    Ok(WindowOutcome {
        report: BenchmarkReport { first_period: first, last_period: last, rows, records, ratios },
        schedules,
        gpwd_tables,
    })
}

/// CSV rendering of the aggregate rows.
pub fn report_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from(
        "method,working_count,not_working_count,total_elapsed_s,avg_enabled_conventional,avg_renewable_share\n",
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            r.method.tag(),
            r.working_count,
            r.not_working_count,
            r.total_elapsed_s,
            r.avg_enabled_conventional,
            r.avg_renewable_share
        ));
    }
    s
}

/// JSON rendering (keys alphabetical, hence deterministic).
pub fn report_json(report: &BenchmarkReport) -> String {
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "method": r.method.tag(),
                "working_count": r.working_count,
                "not_working_count": r.not_working_count,
                "total_elapsed_s": r.total_elapsed_s,
                "avg_enabled_conventional": r.avg_enabled_conventional,
                "avg_renewable_share": r.avg_renewable_share,
            })
        })
        .collect();
    let records: Vec<_> = report
        .records
        .iter()
        .map(|p| {
            json!({
                "method": p.method.tag(),
                "period": p.period,
                "feasible": p.feasible,
                "step_reached": p.step_reached,
                "enabled_conventional": p.enabled_conventional,
                "renewable_share": p.renewable_share,
                "elapsed_s": p.elapsed_s,
            })
        })
        .collect();
    let value = json!({
        "first_period": report.first_period,
        "last_period": report.last_period,
        "rows": rows,
        "records": records,
        "ratios": report.ratios,
    });
    serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
}

/// Fixed-width table rendering for terminals.
pub fn report_text(report: &BenchmarkReport) -> String {
    let mut s = format!(
        "periods {}..={}\n{:<8} {:>8} {:>12} {:>16} {:>10} {:>10}\n",
        report.first_period,
        report.last_period,
        "method",
        "working",
        "not_working",
        "elapsed_s",
        "avg_units",
        "ren_share"
    );
    for r in &report.rows {
        s.push_str(&format!(
            "{:<8} {:>8} {:>12} {:>16.4} {:>10.3} {:>10.4}\n",
            r.method.tag(),
            r.working_count,
            r.not_working_count,
            r.total_elapsed_s,
            r.avg_enabled_conventional,
            r.avg_renewable_share
        ));
    }
    for (name, value) in &report.ratios {
        s.push_str(&format!("{name} = {value:.4}\n"));
    }
    s
}

/// CSV rendering of one schedule: every unit's status and setpoint.
pub fn schedule_csv(schedule: &Schedule) -> String {
    let mut s = String::from("unit,enabled,pg_mw,qg_mvar\n");
    for (&id, &on) in &schedule.unit_status {
        let (pg, qg) = schedule.setpoints.get(&id).copied().unwrap_or((0.0, 0.0));
        s.push_str(&format!("{id},{},{pg:.6},{qg:.6}\n", u8::from(on)));
    }
    s
}

/// Writes the full artifact layout under `dir`:
/// `report.{csv,json,txt}`, `schedules/<method>/<period>.csv`,
/// `gpwd/<period>.csv`.
pub fn write_outputs(dir: &Path, out: &WindowOutcome) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(&out.report))?;
    fs::write(dir.join("report.json"), report_json(&out.report))?;
    fs::write(dir.join("report.txt"), report_text(&out.report))?;
    for schedule in &out.schedules {
        let sub = dir.join("schedules").join(schedule.method.tag());
        fs::create_dir_all(&sub)?;
        fs::write(sub.join(format!("{}.csv", schedule.period)), schedule_csv(schedule))?;
    }
    let gdir = dir.join("gpwd");
    fs::create_dir_all(&gdir)?;
    for (period, table) in &out.gpwd_tables {
        fs::write(gdir.join(format!("{period}.csv")), table)?;
    }
    Ok(())
}

/// Counts conventional units enabled in a schedule (helper mirrored from
/// the aggregate computation so reports can be cross-checked).
pub fn recompute_row(report: &BenchmarkReport, method: Method) -> Option<MethodRow> {
    let recs: Vec<&PeriodRecord> =
        report.records.iter().filter(|r| r.method == method).collect();
    if recs.is_empty() {
        return None;
    }
    let n = recs.len() as f64;
    Some(MethodRow {
        method,
        working_count: recs.iter().filter(|r| r.feasible).count(),
        not_working_count: recs.iter().filter(|r| !r.feasible).count(),
        total_elapsed_s: recs.iter().map(|r| r.elapsed_s).sum(),
        avg_enabled_conventional: recs.iter().map(|r| r.enabled_conventional).sum::<usize>() as f64 / n,
        avg_renewable_share: recs.iter().map(|r| r.renewable_share).sum::<f64>() / n,
    })
}

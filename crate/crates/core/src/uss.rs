//! The selection-walk scheduler: per-area MW / MVar generation goals are
//! set from the period's missing generation, then up to three escalating
//! passes enable weight-ranked conventional units until the goals are met,
//! each pass validated by the dispatch + power-flow check.
//!
//! * Step 1 enables as few units as possible (a unit discharges almost its
//!   whole pgmax and qgmax against the goals).
//! * Step 2 targets active power only, discharging a pgmin/pgmax blend
//!   picked by the period's renewable share.
//! * Step 3 targets reactive power only, discharging a qgmax fraction
//!   picked by the hour of day.
//!
//! Steps are independent walks: each restarts from the preparation-time
//! goals and the slack-seeded case. The last executed step's verdict is
//! final.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::gpwd::{self, GpwdBreakdown};
use crate::grid::{AreaId, BusId, GenId, GenType, GridCase, Method, Schedule};
use crate::scenario::ScenarioMeta;
use crate::steady_state::{opf_check, schedule_from_check, SolveOptions};

/// Remaining generation need of one area; a non-positive value means the
/// dimension is satisfied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaGoals {
    pub mw_goal: f64,
    pub mvar_goal: f64,
}

/// Everything the step walks need, frozen at preparation time.
#[derive(Clone, Debug)]
pub struct UssContext {
    pub hour_of_day: u32,
    /// Planned renewable share of total load for the period.
    pub renew_pct: f64,
    /// Slack seeds: the largest conventional unit re-enabled per island.
    pub slack_units: Vec<GenId>,
    pub goals: BTreeMap<AreaId, AreaGoals>,
    /// Conventional units allowed to be switched on this period (enabled in
    /// the scenario case and sitting on an energized bus).
    pub selectable: BTreeSet<GenId>,
    /// First bus of every island that needs a source but hosts no
    /// conventional unit; such islands cannot be served.
    pub unservable_islands: Vec<BusId>,
}

/// Disables all conventional units, re-seeds one slack unit per island and
/// computes the per-area goals:
///
/// `mw_goal   = 1.15 * (active load - enabled renewable pgmax)`
/// `mvar_goal = (reactive load - enabled renewable qgmax)
///              - 0.85 * (added sync-cond qgmax)`
///
/// then each slack seed discharges `0.5*pgmin + 0.5*pgmax` MW and
/// `0.5*qgmax` MVar against its area.
pub fn prepare(case: &mut GridCase, meta: &ScenarioMeta) -> UssContext {
    let selectable: BTreeSet<GenId> = case
        .generators
        .iter()
        .filter(|g| g.gtype == GenType::Conventional && g.status && case.bus_in_service(g.bus))
        .map(|g| g.id)
        .collect();

    for g in &mut case.generators {
        if g.gtype == GenType::Conventional {
            g.status = false;
        }
    }

    let mut slack_units = Vec::new();
    let mut unservable_islands = Vec::new();
    for island in case.detect_islands() {
        let members: BTreeSet<BusId> = island.iter().copied().collect();
        let seed = case
            .generators
            .iter()
            .filter(|g| selectable.contains(&g.id) && members.contains(&g.bus))
            .min_by(|a, b| {
                b.pgmax
                    .partial_cmp(&a.pgmax)
                    .unwrap()
                    .then(a.bus.cmp(&b.bus))
                    .then(a.id.cmp(&b.id))
            })
            .map(|g| g.id);
        match seed {
            Some(id) => slack_units.push(id),
            None => {
                let needs_source = island.iter().any(|&b| {
                    let bus = case.bus(b).unwrap();
                    bus.pd != 0.0 || bus.qd != 0.0
                }) || case.active_generators().any(|g| members.contains(&g.bus));
                if needs_source {
                    unservable_islands.push(island[0]);
                }
            }
        }
    }
    for &id in &slack_units {
        case.gen_mut(id).unwrap().status = true;
    }

    // Per-area renewable contribution and added-sync-cond reactive backing.
    let mut ren_p: BTreeMap<AreaId, f64> = BTreeMap::new();
    let mut ren_q: BTreeMap<AreaId, f64> = BTreeMap::new();
    let mut asc_q: BTreeMap<AreaId, f64> = BTreeMap::new();
    let area_of: BTreeMap<BusId, AreaId> = case.buses.iter().map(|b| (b.id, b.area)).collect();
    for g in case.active_generators() {
        if g.gtype.is_renewable() {
            *ren_p.entry(area_of[&g.bus]).or_insert(0.0) += g.pgmax;
            *ren_q.entry(area_of[&g.bus]).or_insert(0.0) += g.qgmax;
        }
    }
    for &id in &meta.added_sync_conds {
        if let Some(g) = case.gen(id) {
            *asc_q.entry(area_of[&g.bus]).or_insert(0.0) += g.qgmax;
        }
    }

    let mut goals = BTreeMap::new();
    for area in case.energized_areas() {
        let (pd, qd) = case.total_area_demand(area);
        let missing_p = pd - ren_p.get(&area).copied().unwrap_or(0.0);
        let missing_q = qd - ren_q.get(&area).copied().unwrap_or(0.0);
        let mut g = AreaGoals {
            mw_goal: 1.15 * missing_p,
            mvar_goal: missing_q - 0.85 * asc_q.get(&area).copied().unwrap_or(0.0),
        };
        for &id in &slack_units {
            let seed = case.gen(id).unwrap();
            if area_of[&seed.bus] == area {
                g.mw_goal -= 0.5 * seed.pgmin + 0.5 * seed.pgmax;
                g.mvar_goal -= 0.5 * seed.qgmax;
            }
        }
        goals.insert(area, g);
    }

    UssContext {
        hour_of_day: meta.hour_of_day,
        renew_pct: meta.portfolio.renew_pct,
        slack_units,
        goals,
        selectable,
        unservable_islands,
    }
}

/// pgmin/pgmax discharge weights for the active-power step, keyed by the
/// period's renewable share (upper bracket edges inclusive).
pub fn step2_weights(renew_pct: f64) -> (f64, f64) {
    if renew_pct <= 0.10 {
        (0.50, 0.50)
    } else if renew_pct <= 0.175 {
        (0.55, 0.45)
    } else if renew_pct <= 0.25 {
        (0.60, 0.40)
    } else {
        (0.65, 0.35)
    }
}

/// qgmax discharge fraction for the reactive step, keyed by hour of day:
/// night hours need the fewest units, midday the most.
pub fn step3_coef(hour_of_day: u32) -> f64 {
    debug_assert!((1..=24).contains(&hour_of_day));
    match hour_of_day {
        1..=6 | 24 => 0.25,
        7..=10 | 22 | 23 => 0.20,
        _ => 0.15,
    }
}

/// The three walk policies: which goal dimension admits a unit and how
/// much the unit discharges once enabled.
#[derive(Clone, Copy, Debug)]
pub enum StepRule {
    /// Fewest units: either goal admits; discharge 0.15*pgmin + 0.85*pgmax
    /// MW and 0.85*qgmax MVar.
    One,
    /// Active power only, blend from [`step2_weights`].
    Two { renew_pct: f64 },
    /// Reactive power only, fraction from [`step3_coef`].
    Three { hour_of_day: u32 },
}

impl StepRule {
    pub fn number(self) -> u8 {
        match self {
            StepRule::One => 1,
            StepRule::Two { .. } => 2,
            StepRule::Three { .. } => 3,
        }
    }

    fn wants(self, goals: &AreaGoals) -> bool {
        match self {
            StepRule::One => goals.mw_goal > 0.0 || goals.mvar_goal > 0.0,
            StepRule::Two { .. } => goals.mw_goal > 0.0,
            StepRule::Three { .. } => goals.mvar_goal > 0.0,
        }
    }

    fn discharge(self, pgmin: f64, pgmax: f64, qgmax: f64, goals: &mut AreaGoals) {
        match self {
            StepRule::One => {
                goals.mw_goal -= 0.15 * pgmin + 0.85 * pgmax;
                goals.mvar_goal -= 0.85 * qgmax;
            }
            StepRule::Two { renew_pct } => {
                let (a, b) = step2_weights(renew_pct);
                goals.mw_goal -= a * pgmin + b * pgmax;
            }
            StepRule::Three { hour_of_day } => {
                goals.mvar_goal -= step3_coef(hour_of_day) * qgmax;
            }
        }
    }
}

/// Units switched on by one walk and the goals it left behind.
#[derive(Clone, Debug)]
pub struct WalkResult {
    pub enabled: Vec<GenId>,
    pub goals: BTreeMap<AreaId, AreaGoals>,
}

/// One top-down pass over the ranked list: a unit is enabled iff its area
/// still has a positive goal under the rule; the walk stops as soon as no
/// area does. Enabled units start at their pgmin. Slack seeds (already on)
/// and non-selectable units are walked over without effect.
pub fn step_walk(
    case: &mut GridCase,
    ranked: &[GpwdBreakdown],
    ctx: &UssContext,
    rule: StepRule,
) -> WalkResult {
    let mut goals = ctx.goals.clone();
    let mut enabled = Vec::new();
    for row in ranked {
        if !goals.values().any(|g| rule.wants(g)) {
            break;
        }
        let Some(gen) = case.gen(row.unit) else { continue };
        if gen.status || !ctx.selectable.contains(&row.unit) {
            continue;
        }
        let area = case.bus(gen.bus).expect("generator bus exists").area;
        let (pgmin, pgmax, qgmax) = (gen.pgmin, gen.pgmax, gen.qgmax);
        let Some(goal) = goals.get_mut(&area) else { continue };
        if !rule.wants(goal) {
            continue;
        }
        rule.discharge(pgmin, pgmax, qgmax, goal);
        let gen = case.gen_mut(row.unit).unwrap();
        gen.status = true;
        gen.pg = gen.pgmin;
        enabled.push(row.unit);
    }
    WalkResult { enabled, goals }
}

/// A full scheduler run and its intermediate evidence.
#[derive(Clone, Debug)]
pub struct UssOutcome {
    pub schedule: Schedule,
    pub ctx: UssContext,
    /// Verdicts of the executed steps, in order.
    pub step_verdicts: Vec<bool>,
    pub ranking: Vec<GpwdBreakdown>,
    pub warnings: Vec<String>,
}

/// Ranks, prepares, then escalates through the steps until one verdict is
/// working (the third is final either way). Elapsed time covers the whole
/// decision: ranking probe, walks and checks.
pub fn run_uss(
    case: &GridCase,
    meta: &ScenarioMeta,
    prev: Option<&Schedule>,
    opts: &SolveOptions,
) -> UssOutcome {
    let started = Instant::now();
    let ranking = gpwd::rank_units(case, prev, opts);

    let mut seeded = case.clone();
    let ctx = prepare(&mut seeded, meta);

    let rules = [
        StepRule::One,
        StepRule::Two { renew_pct: ctx.renew_pct },
        StepRule::Three { hour_of_day: ctx.hour_of_day },
    ];
    let mut step_verdicts = Vec::new();
    let mut last: Option<(GridCase, crate::steady_state::OpfCheck, u8)> = None;
    for rule in rules {
        let mut trial = seeded.clone();
        step_walk(&mut trial, &ranking.breakdowns, &ctx, rule);
        let check = opf_check(&trial, opts);
        let working = check.working;
        step_verdicts.push(working);
        last = Some((trial, check, rule.number()));
        if working {
            break;
        }
    }
    let (final_case, final_check, step) = last.expect("at least one step ran");
    let schedule = schedule_from_check(
        &final_case,
        &final_check,
        meta.period,
        Method::Uss,
        Some(step),
        started.elapsed().as_secs_f64(),
    );
    UssOutcome {
        schedule,
        ctx,
        step_verdicts,
        ranking: ranking.breakdowns,
        warnings: ranking.warnings,
    }
}

//! Per-unit importance scoring for conventional generators.
//!
//! Each unit's weight combines its prior-period status, its share of the
//! area's active and reactive output in a probe solve, a bonus for being
//! among the system's largest machines, and a penalty for a high
//! pgmin/qgmax ratio:
//!
//! `weight = max(0, ps + apf_p + apf_q + mp - ratio_term)`
//!
//! Units disabled in the current case score 0. The descending-weight order
//! drives both the selection walk and the enable-and-try baseline.

use std::collections::BTreeMap;

use crate::grid::{GenId, GenType, GeneratorRecord, GridCase, Schedule};
use crate::steady_state::{opf_check, SolveOptions};

/// Score components for one conventional unit.
#[derive(Clone, Debug, PartialEq)]
pub struct GpwdBreakdown {
    pub unit: GenId,
    /// 1 when the unit was enabled in the prior period, else 0.
    pub ps: f64,
    /// Share of the area's conventional active output in the probe solve.
    pub apf_p: f64,
    /// Share of the area's conventional |reactive| output in the probe.
    pub apf_q: f64,
    /// Size bonus: 0.5 per dimension above 95% of the system maximum,
    /// 0.25 above 80%, summed over pgmax and qgmax.
    pub mp: f64,
    /// pgmin/qgmax normalized by the period maximum of that ratio.
    pub ratio_term: f64,
    /// Clamped composite weight.
    pub gpwd: f64,
    /// 1-based position after sorting.
    pub rank: usize,
}

/// Ranked list plus any probe-solve warnings.
#[derive(Clone, Debug)]
pub struct RankOutcome {
    pub breakdowns: Vec<GpwdBreakdown>,
    pub warnings: Vec<String>,
}

/// 1 iff the unit was enabled in the prior period's schedule; a missing
/// schedule (first period) counts every unit as previously off.
pub fn prior_state(unit: GenId, prev: Option<&Schedule>) -> f64 {
    match prev {
        Some(s) if s.unit_status.get(&unit).copied().unwrap_or(false) => 1.0,
        _ => 0.0,
    }
}

/// Relative-size bonus against the system-wide maxima, per dimension:
/// strictly above 95% scores 0.5, in (80%, 95%] scores 0.25, else 0.
pub fn maximum_power_score(pgmax: f64, qgmax: f64, max_pgmax: f64, max_qgmax: f64) -> f64 {
    let bracket = |value: f64, max: f64| {
        if max <= 0.0 {
            return 0.0;
        }
        let rel = value / max;
        if rel > 0.95 {
            0.5
        } else if rel > 0.80 {
            0.25
        } else {
            0.0
        }
    };
    bracket(pgmax, max_pgmax) + bracket(qgmax, max_qgmax)
}

/// pgmin/qgmax ratios normalized by the period maximum. Units that cannot
/// produce reactive power (qgmax <= 0) take the period-maximum raw ratio —
/// the harshest penalty — since the term rewards reactive headroom. When
/// every raw ratio is zero the terms are all zero.
pub fn ratio_terms<'a, I>(units: I) -> BTreeMap<GenId, f64>
where
    I: IntoIterator<Item = &'a GeneratorRecord>,
{
    let mut raw: Vec<(GenId, Option<f64>)> = Vec::new();
    for g in units {
        raw.push((g.id, (g.qgmax > 0.0).then(|| g.pgmin / g.qgmax)));
    }
    let max_raw = raw.iter().filter_map(|&(_, r)| r).fold(0.0, f64::max);
    raw.into_iter()
        .map(|(id, r)| {
            let term = match r {
                _ if max_raw <= 0.0 => 0.0,
                Some(v) => v / max_raw,
                None => 1.0,
            };
            (id, term)
        })
        .collect()
}

/// Probe-solve participation factors: (active share, |reactive| share) of
/// each conventional unit within its area.
#[derive(Clone, Debug, Default)]
pub struct ApfResult {
    pub factors: BTreeMap<GenId, (f64, f64)>,
    pub warnings: Vec<String>,
}

/// Runs the probe solve — every conventional unit enabled with its pgmin
/// relaxed to 0 — and converts the resulting outputs into per-area shares.
/// A failed probe yields all-zero factors and a warning instead of an
/// error: the ranking degrades gracefully to the other components.
pub fn area_participation_factors(case: &GridCase, opts: &SolveOptions) -> ApfResult {
    let mut probe = case.clone();
    for g in &mut probe.generators {
        if g.gtype == GenType::Conventional {
            g.status = true;
            g.pgmin = 0.0;
        }
    }
    let check = opf_check(&probe, opts);

    let mut result = ApfResult::default();
    for g in case.generators.iter().filter(|g| g.gtype == GenType::Conventional) {
        result.factors.insert(g.id, (0.0, 0.0));
    }
    if !check.power_flow.converged {
        let reason = if check.reasons.is_empty() {
            "no solution".to_string()
        } else {
            check.reasons.join("; ")
        };
        let msg = format!("participation probe did not converge ({reason}); factors zeroed");
        log::warn!("{msg}");
        result.warnings.push(msg);
        return result;
    }

    // Area totals over conventional units, then individual shares.
    let mut area_p: BTreeMap<crate::grid::AreaId, f64> = BTreeMap::new();
    let mut area_q: BTreeMap<crate::grid::AreaId, f64> = BTreeMap::new();
    let conventional: Vec<&GeneratorRecord> = probe
        .generators
        .iter()
        .filter(|g| g.gtype == GenType::Conventional)
        .collect();
    for g in &conventional {
        if let Some(&(pg, qg)) = check.power_flow.gen_outputs.get(&g.id) {
            let area = probe.bus(g.bus).map(|b| b.area);
            if let Some(area) = area {
                *area_p.entry(area).or_insert(0.0) += pg;
                *area_q.entry(area).or_insert(0.0) += qg.abs();
            }
        }
    }
    for g in &conventional {
        let Some(&(pg, qg)) = check.power_flow.gen_outputs.get(&g.id) else { continue };
        let Some(bus) = probe.bus(g.bus) else { continue };
        let tp = area_p.get(&bus.area).copied().unwrap_or(0.0);
        let tq = area_q.get(&bus.area).copied().unwrap_or(0.0);
        let share_p = if tp > 0.0 { pg / tp } else { 0.0 };
        let share_q = if tq > 0.0 { qg.abs() / tq } else { 0.0 };
        result.factors.insert(g.id, (share_p, share_q));
    }
    result
}

/// Combines precomputed participation factors with the other components
/// and sorts. Ties: larger pgmax first, then lower unit id.
pub fn compose_breakdowns(
    case: &GridCase,
    prev: Option<&Schedule>,
    factors: &BTreeMap<GenId, (f64, f64)>,
) -> Vec<GpwdBreakdown> {
    let conventional: Vec<&GeneratorRecord> = case
        .generators
        .iter()
        .filter(|g| g.gtype == GenType::Conventional)
        .collect();
    // Size maxima over units physically present on energized buses.
    let in_service: Vec<&&GeneratorRecord> =
        conventional.iter().filter(|g| case.bus_in_service(g.bus)).collect();
    let max_pgmax = in_service.iter().map(|g| g.pgmax).fold(0.0, f64::max);
    let max_qgmax = in_service.iter().map(|g| g.qgmax).fold(0.0, f64::max);
    let ratios = ratio_terms(conventional.iter().copied());

    let mut rows: Vec<GpwdBreakdown> = conventional
        .iter()
        .map(|g| {
            let ps = prior_state(g.id, prev);
            let (apf_p, apf_q) = factors.get(&g.id).copied().unwrap_or((0.0, 0.0));
            let mp = maximum_power_score(g.pgmax, g.qgmax, max_pgmax, max_qgmax);
            let ratio_term = ratios[&g.id];
            let selectable = g.status && case.bus_in_service(g.bus);
            let gpwd = if selectable {
                (ps + apf_p + apf_q + mp - ratio_term).max(0.0)
            } else {
                0.0
            };
            GpwdBreakdown { unit: g.id, ps, apf_p, apf_q, mp, ratio_term, gpwd, rank: 0 }
        })
        .collect();

    let pgmax_of: BTreeMap<GenId, f64> = conventional.iter().map(|g| (g.id, g.pgmax)).collect();
    rows.sort_by(|a, b| {
        b.gpwd
            .partial_cmp(&a.gpwd)
            .unwrap()
            .then(pgmax_of[&b.unit].partial_cmp(&pgmax_of[&a.unit]).unwrap())
            .then(a.unit.cmp(&b.unit))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    rows
}

/// Full ranking pass: probe solve, component assembly, sort.
pub fn rank_units(case: &GridCase, prev: Option<&Schedule>, opts: &SolveOptions) -> RankOutcome {
    let apf = area_participation_factors(case, opts);
    let breakdowns = compose_breakdowns(case, prev, &apf.factors);
    RankOutcome { breakdowns, warnings: apf.warnings }
}

/// CSV rendering of a ranked breakdown list, header included.
pub fn breakdown_csv(rows: &[GpwdBreakdown]) -> String {
    let mut out = String::from("unit,ps,apf_p,apf_q,mp,ratio_term,gpwd,rank\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{},{:.9},{:.9},{}\n",
            r.unit, r.ps, r.apf_p, r.apf_q, r.mp, r.ratio_term, r.gpwd, r.rank
        ));
    }
    out
}

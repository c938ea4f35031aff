//! Per-area single-period unit commitment.
//!
//! Each energized area gets its own instance: conventional units with a
//! flattened $/hr/MW operating cost (mean of the four cost-curve point
//! values), fuel expense per MWh, a startup cost that is zeroed for units
//! already on in the previous period, and hourly ramp limits. The demand
//! target is the area's load net of enabled renewable capacity, inflated
//! by 5% as spinning reserve.
//!
//! The optimizer is an exact branch-and-bound: the continuous relaxation
//! (commitment variables in [0,1]) reduces to a fractional knapsack and is
//! solved greedily; at most one commitment variable is fractional per
//! relaxation, and it is the branching variable. Incumbents come from
//! rounding plus merit-order repair. Cost ties are broken toward fewer
//! committed units, then lower unit ids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::grid::{AreaId, GenId, GenType, GridCase, Method, Schedule};
use crate::steady_state::{opf_check, schedule_from_check, OpfCheck, SolveOptions};

/// Objective-equality slop for incumbent replacement and pruning.
const COST_EPS: f64 = 1e-9;
/// Feasibility slop on met demand, MW.
const DEMAND_EPS: f64 = 1e-9;

/// One optimizable unit, costs flattened and ramp folded into MW bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpUnit {
    pub id: GenId,
    /// Mean of the cost-curve point values, $/hr/MW.
    pub avg_cost: f64,
    /// Fuel price times heat rate, $/MWh.
    pub fuel_cost_mwh: f64,
    /// $, already zeroed when the unit ran in the previous period.
    pub startup_cost: f64,
    pub pgmin: f64,
    pub pgmax: f64,
    /// MW/hr (dataset MW/min times 60).
    pub ramp_hr: f64,
    pub prev_on: bool,
    /// Previous-period output, MW (0 when previously off).
    pub prev_pg: f64,
}

impl MilpUnit {
    /// $/MWh paid for every megawatt the unit produces while committed.
    pub fn run_rate(&self) -> f64 {
        self.avg_cost + self.fuel_cost_mwh
    }

    /// Effective dispatch box when committed this period: the stable band
    /// intersected with what the ramp reaches from the previous output
    /// (previously-off units ramp up from zero, but never below pgmin).
    pub fn bounds(&self) -> (f64, f64) {
        if self.prev_on {
            (
                self.pgmin.max(self.prev_pg - self.ramp_hr),
                self.pgmax.min(self.prev_pg + self.ramp_hr),
            )
        } else {
            (self.pgmin, self.pgmax.min(self.ramp_hr.max(self.pgmin)))
        }
    }

    /// Whether a commitment can be feasible at all this period.
    pub fn committable(&self) -> bool {
        let (lo, hi) = self.bounds();
        hi > 0.0 && lo <= hi + 1e-12
    }
}

/// One area's optimization input.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpInstance {
    pub area: AreaId,
    /// MW the committed fleet must reach: (load - renewable capacity) * 1.05,
    /// never negative.
    pub demand_target: f64,
    pub units: Vec<MilpUnit>,
}

/// Optimizer output for one instance.
#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub commitment: BTreeMap<GenId, bool>,
    /// MW per unit; zero for uncommitted units.
    pub dispatch: BTreeMap<GenId, f64>,
    /// $, 0 when infeasible.
    pub objective: f64,
    /// Proven optimal within the gap tolerance.
    pub optimal: bool,
    /// Relative bound gap at termination (0 when the tree was exhausted).
    pub gap: f64,
    /// False when no commitment can reach the demand target.
    pub feasible: bool,
}

/// Builds the instance for one area of a scenario-built case: enabled
/// conventional units on in-service buses, demand net of enabled renewable
/// capacity plus the 5% reserve margin.
pub fn build_milp_instance(
    case: &GridCase,
    area: AreaId,
    prev: Option<&Schedule>,
) -> MilpInstance {
    let (pd, _) = case.total_area_demand(area);
    let area_of: BTreeMap<_, _> = case.buses.iter().map(|b| (b.id, b.area)).collect();
    let renewable: f64 = case
        .active_generators()
        .filter(|g| g.gtype.is_renewable() && area_of[&g.bus] == area)
        .map(|g| g.pgmax)
        .sum();
    let demand_target = ((pd - renewable) * 1.05).max(0.0);

    let mut units = Vec::new();
    for g in &case.generators {
        if g.gtype != GenType::Conventional
            || !g.status
            || !case.bus_in_service(g.bus)
            || area_of[&g.bus] != area
        {
            continue;
        }
        let prev_on = prev.is_some_and(|s| s.unit_status.get(&g.id).copied().unwrap_or(false));
        let prev_pg = if prev_on {
            prev.and_then(|s| s.setpoints.get(&g.id)).map_or(0.0, |p| p.0)
        } else {
            0.0
        };
        units.push(MilpUnit {
            id: g.id,
            avg_cost: g.avg_op_cost(),
            fuel_cost_mwh: g.fuel_cost_per_mwh(),
            startup_cost: if prev_on { 0.0 } else { g.startup_cost },
            pgmin: g.pgmin,
            pgmax: g.pgmax,
            ramp_hr: g.ramp_rate * 60.0,
            prev_on,
            prev_pg,
        });
    }
    MilpInstance { area, demand_target, units }
}

/// Cheapest dispatch of a fixed commitment: floors at the box lows, then
/// merit-order fill of the remaining demand. `None` when the commitment
/// cannot reach the target (or commits an uncommittable unit).
fn evaluate_commitment(
    units: &[MilpUnit],
    demand: f64,
    committed: &[bool],
) -> Option<(f64, Vec<f64>)> {
    let mut dispatch = vec![0.0; units.len()];
    let mut cost = 0.0;
    let mut total = 0.0;
    for (i, u) in units.iter().enumerate() {
        if committed[i] {
            if !u.committable() {
                return None;
            }
            let (lo, _) = u.bounds();
            dispatch[i] = lo;
            cost += u.startup_cost + u.run_rate() * lo;
            total += lo;
        }
    }
    if total + DEMAND_EPS < demand {
        let mut order: Vec<usize> = (0..units.len()).filter(|&i| committed[i]).collect();
        order.sort_by(|&a, &b| {
            units[a]
                .run_rate()
                .partial_cmp(&units[b].run_rate())
                .unwrap()
                .then(units[a].id.cmp(&units[b].id))
        });
        for i in order {
            let (_, hi) = units[i].bounds();
            let take = (demand - total).min(hi - dispatch[i]).max(0.0);
            dispatch[i] += take;
            cost += take * units[i].run_rate();
            total += take;
            if total + DEMAND_EPS >= demand {
                break;
            }
        }
        if total + DEMAND_EPS < demand {
            return None;
        }
    }
    Some((cost, dispatch))
}

#[derive(Clone, Copy, PartialEq)]
enum Fix {
    Free,
    On,
    Off,
}

struct Relaxed {
    bound: f64,
    /// Index and value of the single fractional commitment variable, if any.
    fractional: Option<(usize, f64)>,
    feasible: bool,
    /// Free-variable production used to round an incumbent.
    u_value: Vec<f64>,
}

/// Exact continuous relaxation: with u in [0,1] and the box scaled by u,
/// the optimal u for any production p is p/hi, so the problem collapses to
/// a fractional knapsack over per-MW rates (run rate plus amortized
/// startup). Only the marginal offer can be fractional.
fn solve_relaxation(units: &[MilpUnit], demand: f64, fix: &[Fix]) -> Relaxed {
    let mut bound = 0.0;
    let mut need = demand;
    let mut u_value = vec![0.0; units.len()];
    struct Offer {
        idx: usize,
        rate: f64,
        cap: f64,
        free: bool,
    }
    let mut offers = Vec::new();
    for (i, u) in units.iter().enumerate() {
        match fix[i] {
            Fix::On => {
                let (lo, hi) = u.bounds();
                bound += u.startup_cost + u.run_rate() * lo;
                need -= lo;
                u_value[i] = 1.0;
                if hi > lo {
                    offers.push(Offer { idx: i, rate: u.run_rate(), cap: hi - lo, free: false });
                }
            }
            Fix::Free if u.committable() => {
                let (_, hi) = u.bounds();
                offers.push(Offer {
                    idx: i,
                    rate: u.run_rate() + u.startup_cost / hi,
                    cap: hi,
                    free: true,
                });
            }
            _ => {}
        }
    }
    offers.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap().then(a.idx.cmp(&b.idx)));
    let mut fractional = None;
    for o in &offers {
        if need <= DEMAND_EPS {
            break;
        }
        let take = need.min(o.cap);
        bound += take * o.rate;
        need -= take;
        if o.free {
            let u_val = take / o.cap;
            u_value[o.idx] = u_val;
            if u_val > 1e-9 && u_val < 1.0 - 1e-9 {
                fractional = Some((o.idx, u_val));
            }
        }
    }
    Relaxed { bound, fractional, feasible: need <= DEMAND_EPS, u_value }
}

struct Candidate {
    cost: f64,
    committed: Vec<bool>,
    dispatch: Vec<f64>,
}

/// Incumbent preference: cheaper, then fewer committed units, then the
/// lexicographically smallest committed-id set.
fn candidate_better(units: &[MilpUnit], a: &Candidate, b: &Candidate) -> bool {
    if a.cost < b.cost - COST_EPS {
        return true;
    }
    if a.cost > b.cost + COST_EPS {
        return false;
    }
    let count = |c: &Candidate| c.committed.iter().filter(|&&on| on).count();
    let (na, nb) = (count(a), count(b));
    if na != nb {
        return na < nb;
    }
    let ids = |c: &Candidate| -> Vec<GenId> {
        let mut v: Vec<GenId> = (0..units.len()).filter(|&i| c.committed[i]).map(|i| units[i].id).collect();
        v.sort();
        v
    };
    ids(a) < ids(b)
}

fn to_solution(inst: &MilpInstance, cand: Option<Candidate>, optimal: bool, gap: f64) -> MilpSolution {
    match cand {
        Some(c) => MilpSolution {
            commitment: inst
                .units
                .iter()
                .enumerate()
                .map(|(i, u)| (u.id, c.committed[i]))
                .collect(),
            dispatch: inst
                .units
                .iter()
                .enumerate()
                .map(|(i, u)| (u.id, c.dispatch[i]))
                .collect(),
            objective: c.cost,
            optimal,
            gap,
            feasible: true,
        },
        None => MilpSolution {
            commitment: inst.units.iter().map(|u| (u.id, false)).collect(),
            dispatch: inst.units.iter().map(|u| (u.id, 0.0)).collect(),
            objective: 0.0,
            optimal: false,
            gap: 0.0,
            feasible: false,
        },
    }
}

/// Branch-and-bound over the greedy relaxation. Terminates when the tree is
/// exhausted (proven optimum) or the remaining bound gap falls within
/// `gap_tol`; a `time_limit` cuts the search short with `optimal = false`.
pub fn solve_milp(
    inst: &MilpInstance,
    gap_tol: f64,
    time_limit: Option<Duration>,
) -> MilpSolution {
    let units = &inst.units;
    let capacity: f64 = units
        .iter()
        .filter(|u| u.committable())
        .map(|u| u.bounds().1)
        .sum();
    if capacity + DEMAND_EPS < inst.demand_target {
        return to_solution(inst, None, false, 0.0);
    }

    let started = Instant::now();
    let mut best: Option<Candidate> = None;
    // Nodes carry the bound proven by their parent's relaxation; the live
    // floor of the search is the minimum over the open stack.
    let mut stack: Vec<(Vec<Fix>, f64)> = vec![(vec![Fix::Free; units.len()], f64::NEG_INFINITY)];
    let mut exhausted = true;

    let consider = |best: &mut Option<Candidate>, committed: Vec<bool>| {
        if let Some((cost, dispatch)) = evaluate_commitment(units, inst.demand_target, &committed) {
            let cand = Candidate { cost, committed, dispatch };
            if best.as_ref().is_none_or(|b| candidate_better(units, &cand, b)) {
                *best = Some(cand);
            }
        }
    };

    while let Some((fix, _)) = stack.pop() {
        if time_limit.is_some_and(|tl| started.elapsed() > tl) {
            exhausted = false;
            break;
        }
        let relax = solve_relaxation(units, inst.demand_target, &fix);
        if !relax.feasible {
            continue;
        }
        if let Some(b) = &best {
            if relax.bound >= b.cost - 1e-12 {
                continue;
            }
        }
        match relax.fractional {
            None => {
                // Integral relaxation: its commitment attains the bound.
                let committed: Vec<bool> =
                    relax.u_value.iter().map(|&u| u > 1.0 - 1e-9).collect();
                consider(&mut best, committed);
            }
            Some((branch_idx, _)) => {
                // Rounding heuristic keeps the incumbent fresh for pruning.
                let rounded: Vec<bool> = relax
                    .u_value
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| match fix[i] {
                        Fix::On => true,
                        Fix::Off => false,
                        Fix::Free => u >= 0.5 && units[i].committable(),
                    })
                    .collect();
                let repaired = merit_repair(units, inst.demand_target, rounded, &fix);
                consider(&mut best, repaired);

                let mut off = fix.clone();
                off[branch_idx] = Fix::Off;
                let mut on = fix;
                on[branch_idx] = Fix::On;
                stack.push((off, relax.bound));
                stack.push((on, relax.bound));
            }
        }
        if let Some(b) = &best {
            let floor = stack.iter().map(|&(_, h)| h).fold(f64::INFINITY, f64::min);
            if stack.is_empty() || b.cost - floor <= gap_tol * b.cost.abs().max(1.0) {
                let gap = if stack.is_empty() {
                    0.0
                } else {
                    ((b.cost - floor) / b.cost.abs().max(1.0)).max(0.0)
                };
                return to_solution(inst, best, true, gap);
            }
        }
    }

    match (&best, exhausted) {
        (Some(b), false) => {
            let floor = stack.iter().map(|&(_, h)| h).fold(f64::INFINITY, f64::min);
            let gap = ((b.cost - floor) / b.cost.abs().max(1.0)).max(0.0);
            to_solution(inst, best, false, gap)
        }
        (Some(_), true) => to_solution(inst, best, true, 0.0),
        (None, _) => to_solution(inst, None, false, 0.0),
    }
}

/// Adds the cheapest amortized-rate committable units to a rounded
/// commitment until it can reach the demand.
fn merit_repair(units: &[MilpUnit], demand: f64, mut committed: Vec<bool>, fix: &[Fix]) -> Vec<bool> {
    let cap = |c: &Vec<bool>| -> f64 {
        units
            .iter()
            .enumerate()
            .filter(|(i, _)| c[*i])
            .map(|(_, u)| u.bounds().1)
            .sum()
    };
    if cap(&committed) + DEMAND_EPS >= demand {
        return committed;
    }
    let mut extras: Vec<usize> = (0..units.len())
        .filter(|&i| !committed[i] && fix[i] != Fix::Off && units[i].committable())
        .collect();
    extras.sort_by(|&a, &b| {
        let rate = |i: usize| {
            let (_, hi) = units[i].bounds();
            units[i].run_rate() + units[i].startup_cost / hi
        };
        rate(a).partial_cmp(&rate(b)).unwrap().then(units[a].id.cmp(&units[b].id))
    });
    for i in extras {
        if cap(&committed) + DEMAND_EPS >= demand {
            break;
        }
        committed[i] = true;
    }
    committed
}

/// Brute-force reference: evaluates every commitment subset and applies the
/// same tie rules. Intended as a cross-check on small instances.
pub fn enumerate_exact(inst: &MilpInstance) -> MilpSolution {
    let units = &inst.units;
    assert!(units.len() <= 20, "enumeration is exponential; got {} units", units.len());
    let mut best: Option<Candidate> = None;
    for mask in 0u32..(1 << units.len()) {
        let committed: Vec<bool> = (0..units.len()).map(|i| mask & (1 << i) != 0).collect();
        if let Some((cost, dispatch)) = evaluate_commitment(units, inst.demand_target, &committed)
        {
            let cand = Candidate { cost, committed, dispatch };
            if best.as_ref().is_none_or(|b| candidate_better(units, &cand, b)) {
                best = Some(cand);
            }
        }
    }
    let feasible = best.is_some();
    to_solution(inst, best, feasible, 0.0)
}

/// Plain-text LP rendering of one instance for external cross-checking.
pub fn dump_lp(inst: &MilpInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "\\ area {} demand_target {:.6}", inst.area, inst.demand_target);
    for u in &inst.units {
        let (lo, hi) = u.bounds();
        let _ = writeln!(
            s,
            "\\ unit {}: run_rate {:.6} startup {:.6} box [{:.6}, {:.6}] prev_on {}",
            u.id,
            u.run_rate(),
            u.startup_cost,
            lo,
            hi,
            u.prev_on
        );
    }
    s.push_str("Minimize\n obj:");
    for (k, u) in inst.units.iter().enumerate() {
        let sep = if k == 0 { " " } else { " + " };
        let _ = write!(s, "{sep}{:.6} u_{} + {:.6} p_{}", u.startup_cost, u.id, u.run_rate(), u.id);
    }
    s.push_str("\nSubject To\n demand:");
    for (k, u) in inst.units.iter().enumerate() {
        let sep = if k == 0 { " " } else { " + " };
        let _ = write!(s, "{sep}p_{}", u.id);
    }
    let _ = writeln!(s, " >= {:.6}", inst.demand_target);
    for u in &inst.units {
        let (lo, hi) = u.bounds();
        let _ = writeln!(s, " lo_{0}: p_{0} - {1:.6} u_{0} >= 0", u.id, lo);
        let _ = writeln!(s, " hi_{0}: p_{0} - {1:.6} u_{0} <= 0", u.id, hi);
    }
    s.push_str("Bounds\n");
    for u in &inst.units {
        let _ = writeln!(s, " 0 <= u_{} <= 1", u.id);
    }
    s.push_str("Binaries\n");
    for u in &inst.units {
        let _ = writeln!(s, " u_{}", u.id);
    }
    s.push_str("End\n");
    s
}

/// One area's instance, solution, and LP dump handle.
#[derive(Clone, Debug)]
pub struct AreaCommitment {
    pub instance: MilpInstance,
    pub solution: MilpSolution,
}

/// A full scheduler run: per-area optimize, union the commitments, verify.
#[derive(Clone, Debug)]
pub struct MilpOutcome {
    pub schedule: Schedule,
    pub areas: Vec<AreaCommitment>,
    pub check: OpfCheck,
}

/// Optimizes every energized area of a scenario-built case, applies the
/// union of commitments (everything else off) and attaches the dispatch
/// verification verdict. The optimizer can be proven-optimal yet yield a
/// non-working schedule; the verdict records that honestly.
pub fn run_milp_uc(
    case: &GridCase,
    period: u32,
    prev: Option<&Schedule>,
    opts: &SolveOptions,
) -> MilpOutcome {
    let started = Instant::now();
    let mut work = case.clone();
    for g in &mut work.generators {
        if g.gtype == GenType::Conventional {
            g.status = false;
        }
    }
    let mut areas = Vec::new();
    for area in case.energized_areas() {
        let instance = build_milp_instance(case, area, prev);
        let solution = solve_milp(&instance, 1e-6, None);
        for (&id, &on) in &solution.commitment {
            if on {
                let g = work.gen_mut(id).expect("instance unit exists");
                g.status = true;
                g.pg = solution.dispatch.get(&id).copied().unwrap_or(g.pgmin);
            }
        }
        areas.push(AreaCommitment { instance, solution });
    }
    let check = opf_check(&work, opts);
    let schedule = schedule_from_check(
        &work,
        &check,
        period,
        Method::MilpUc,
        None,
        started.elapsed().as_secs_f64(),
    );
    MilpOutcome { schedule, areas, check }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::*;

    fn unit(id: u32, lo: f64, hi: f64, rate: f64, startup: f64) -> MilpUnit {
        MilpUnit {
            id: GenId(id),
            avg_cost: rate,
            fuel_cost_mwh: 0.0,
            startup_cost: startup,
            pgmin: lo,
            pgmax: hi,
            ramp_hr: 1e6,
            prev_on: false,
            prev_pg: 0.0,
        }
    }

    fn inst(demand: f64, units: Vec<MilpUnit>) -> MilpInstance {
        MilpInstance { area: AreaId(1), demand_target: demand, units }
    }

    #[test]
    fn single_unit_serves_the_demand_exactly() {
        let sol = solve_milp(&inst(60.0, vec![unit(1, 20.0, 100.0, 10.0, 500.0)]), 1e-6, None);
        assert!(sol.feasible && sol.optimal);
        assert!(sol.commitment[&GenId(1)]);
        assert!((sol.dispatch[&GenId(1)] - 60.0).abs() < 1e-9);
        assert!((sol.objective - (500.0 + 600.0)).abs() < 1e-9);
    }

    #[test]
    fn zero_demand_commits_nothing() {
        let sol = solve_milp(
            &inst(0.0, vec![unit(1, 10.0, 50.0, 5.0, 100.0), unit(2, 10.0, 50.0, 5.0, 100.0)]),
            1e-6,
            None,
        );
        assert!(sol.feasible && sol.optimal);
        assert!(sol.commitment.values().all(|&on| !on));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn demand_beyond_total_capacity_is_infeasible() {
        let sol = solve_milp(&inst(300.0, vec![unit(1, 10.0, 100.0, 5.0, 0.0)]), 1e-6, None);
        assert!(!sol.feasible);
        assert!(!sol.optimal);
        assert!(sol.commitment.values().all(|&on| !on));
    }

    #[test]
    fn startup_amortization_picks_the_truly_cheaper_unit() {
        // Unit 1 runs cheap but costs 10_000 to start; unit 2 covers 100 MW
        // for 100*20 = 2000 total vs 10_000 + 500.
        let sol = solve_milp(
            &inst(
                100.0,
                vec![unit(1, 10.0, 200.0, 5.0, 10_000.0), unit(2, 10.0, 120.0, 20.0, 0.0)],
            ),
            1e-6,
            None,
        );
        assert!(!sol.commitment[&GenId(1)]);
        assert!(sol.commitment[&GenId(2)]);
        assert!((sol.objective - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn three_unit_case_matches_exhaustive_enumeration() {
        let i = inst(
            180.0,
            vec![
                unit(1, 30.0, 120.0, 12.0, 400.0),
                unit(2, 20.0, 90.0, 9.0, 900.0),
                unit(3, 10.0, 70.0, 15.0, 50.0),
            ],
        );
        let bb = solve_milp(&i, 1e-6, None);
        let brute = enumerate_exact(&i);
        assert!(bb.feasible && brute.feasible);
        assert!(
            (bb.objective - brute.objective).abs() <= 1e-6,
            "bb {} vs brute {}",
            bb.objective,
            brute.objective
        );
        assert_eq!(bb.commitment, brute.commitment);
    }

    #[test]
    fn cost_tie_prefers_fewer_units_then_lower_ids() {
        // Either twin alone covers the demand at identical cost.
        let i = inst(50.0, vec![unit(1, 10.0, 100.0, 8.0, 0.0), unit(2, 10.0, 100.0, 8.0, 0.0)]);
        let sol = solve_milp(&i, 1e-6, None);
        assert!(sol.commitment[&GenId(1)]);
        assert!(!sol.commitment[&GenId(2)]);
        let brute = enumerate_exact(&i);
        assert_eq!(sol.commitment, brute.commitment);
    }

    #[test]
    fn solution_respects_boxes_and_ramp_exactly() {
        let mut u1 = unit(1, 20.0, 150.0, 5.0, 0.0);
        u1.prev_on = true;
        u1.prev_pg = 60.0;
        u1.ramp_hr = 25.0; // box [35, 85]
        let mut u2 = unit(2, 30.0, 200.0, 6.0, 100.0);
        u2.ramp_hr = 40.0; // previously off: box [30, 40]
        let i = inst(110.0, vec![u1, u2]);
        let sol = solve_milp(&i, 1e-6, None);
        assert!(sol.feasible);
        let p1 = sol.dispatch[&GenId(1)];
        let p2 = sol.dispatch[&GenId(2)];
        assert!(sol.commitment[&GenId(1)] && sol.commitment[&GenId(2)]);
        assert!((35.0..=85.0).contains(&p1), "p1 {p1}");
        assert!((30.0..=40.0).contains(&p2), "p2 {p2}");
        assert!(p1 + p2 >= 110.0 - 1e-9);
        let brute = enumerate_exact(&i);
        assert!((sol.objective - brute.objective).abs() <= 1e-6);
    }

    #[test]
    fn unreachable_previous_output_makes_a_unit_uncommittable() {
        // Previous output far above pgmax with a small ramp: empty box.
        let mut bad = unit(1, 20.0, 100.0, 1.0, 0.0);
        bad.prev_on = true;
        bad.prev_pg = 180.0;
        bad.ramp_hr = 10.0; // lo = max(20, 170) = 170 > hi = min(100, 190)
        assert!(!bad.committable());
        let i = inst(50.0, vec![bad, unit(2, 10.0, 80.0, 9.0, 10.0)]);
        let sol = solve_milp(&i, 1e-6, None);
        assert!(sol.feasible);
        assert!(!sol.commitment[&GenId(1)]);
        assert!(sol.commitment[&GenId(2)]);
        let brute = enumerate_exact(&i);
        assert!((sol.objective - brute.objective).abs() <= 1e-6);
    }

    /// Deterministic xorshift64* stream for the randomized cross-check.
    fn next_u64(state: &mut u64) -> u64 {
        let mut x = *state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        *state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    fn next_f64(state: &mut u64, lo: f64, hi: f64) -> f64 {
        let r = (next_u64(state) >> 11) as f64 / (1u64 << 53) as f64;
        lo + r * (hi - lo)
    }

    #[test]
    fn random_instances_match_enumeration() {
        let mut state = 0x9E3779B97F4A7C15u64;
        for trial in 0..60 {
            let n = 1 + (next_u64(&mut state) % 8) as usize;
            let mut units = Vec::new();
            for k in 0..n {
                let pgmin = next_f64(&mut state, 2.0, 40.0);
                let pgmax = pgmin + next_f64(&mut state, 5.0, 150.0);
                let mut u = unit(
                    k as u32 + 1,
                    pgmin,
                    pgmax,
                    next_f64(&mut state, 1.0, 30.0),
                    if next_u64(&mut state) % 3 == 0 {
                        0.0
                    } else {
                        next_f64(&mut state, 0.0, 800.0)
                    },
                );
                u.ramp_hr = next_f64(&mut state, 10.0, 200.0);
                if next_u64(&mut state) % 2 == 0 {
                    u.prev_on = true;
                    u.prev_pg = next_f64(&mut state, u.pgmin, u.pgmax);
                    u.startup_cost = 0.0;
                }
                units.push(u);
            }
            let cap: f64 =
                units.iter().filter(|u| u.committable()).map(|u| u.bounds().1).sum();
            let demand = next_f64(&mut state, 0.0, cap * 1.15);
            let i = inst(demand, units);
            let bb = solve_milp(&i, 1e-6, None);
            let brute = enumerate_exact(&i);
            assert_eq!(bb.feasible, brute.feasible, "trial {trial} feasibility");
            if bb.feasible {
                assert!(
                    (bb.objective - brute.objective).abs() <= 1e-6,
                    "trial {trial}: bb {} brute {}",
                    bb.objective,
                    brute.objective
                );
            }
        }
    }

    #[test]
    fn lp_dump_has_the_standard_sections() {
        let text = dump_lp(&inst(80.0, vec![unit(7, 10.0, 60.0, 5.0, 120.0)]));
        for needle in ["Minimize", "Subject To", "demand:", "Bounds", "Binaries", "u_7", "p_7", "End"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
    }

    // ---- instance building off a grid case ----

    fn bus(id: u32, area: u32, pd: f64) -> Bus {
        Bus {
            id: BusId(id),
            area: AreaId(area),
            base_kv: 138.0,
            kind: BusKind::Pq,
            voltage_setpoint: 1.0,
            pd,
            qd: 0.0,
            in_service: true,
        }
    }

    fn conv(id: u32, busid: u32) -> GeneratorRecord {
        GeneratorRecord {
            id: GenId(id),
            uid: format!("C{id}"),
            bus: BusId(busid),
            gtype: GenType::Conventional,
            status: true,
            pg: 0.0,
            qg: 0.0,
            pgmin: 20.0,
            pgmax: 100.0,
            qgmin: -40.0,
            qgmax: 40.0,
            fuel_cost: 2.0,
            op_cost_points: [(10.0, 120.0), (20.0, 280.0), (30.0, 480.0), (40.0, 720.0)],
            startup_cost: 650.0,
            ramp_rate: 2.0,
            heat_rate: Some(10.0),
        }
    }

    #[test]
    fn instance_flattens_costs_and_converts_ramp() {
        let case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![bus(1, 1, 400.0)],
            branches: vec![],
            generators: vec![conv(1, 1)],
        };
        let i = build_milp_instance(&case, AreaId(1), None);
        assert_eq!(i.units.len(), 1);
        let u = &i.units[0];
        assert!((u.avg_cost - 15.0).abs() < 1e-12, "mean of 12,14,16,18");
        assert!((u.fuel_cost_mwh - 20.0).abs() < 1e-12);
        assert!((u.ramp_hr - 120.0).abs() < 1e-12, "2 MW/min -> 120 MW/hr");
        assert!((u.startup_cost - 650.0).abs() < 1e-12);
        assert!((i.demand_target - 420.0).abs() < 1e-9, "400 * 1.05");
    }

    #[test]
    fn previous_period_commitment_zeroes_startup_and_seeds_ramp() {
        let case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![bus(1, 1, 100.0)],
            branches: vec![],
            generators: vec![conv(1, 1)],
        };
        let prev = Schedule {
            period: 9,
            method: Method::MilpUc,
            unit_status: [(GenId(1), true)].into_iter().collect(),
            setpoints: [(GenId(1), (55.0, 3.0))].into_iter().collect(),
            feasible: true,
            step_reached: None,
            elapsed_s: 0.0,
        };
        let i = build_milp_instance(&case, AreaId(1), Some(&prev));
        let u = &i.units[0];
        assert_eq!(u.startup_cost, 0.0);
        assert!(u.prev_on);
        assert!((u.prev_pg - 55.0).abs() < 1e-12);
    }

    #[test]
    fn renewables_shrink_the_demand_target_and_clamp_at_zero() {
        let mut case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![bus(1, 1, 400.0)],
            branches: vec![],
            generators: vec![conv(1, 1)],
        };
        case.generators.push(GeneratorRecord {
            id: GenId(2),
            uid: "W1".into(),
            bus: BusId(1),
            gtype: GenType::Wind,
            status: true,
            pg: 0.0,
            qg: 0.0,
            pgmin: 0.0,
            pgmax: 100.0,
            qgmin: 0.0,
            qgmax: 0.0,
            fuel_cost: 0.0,
            op_cost_points: [(0.0, 0.0); 4],
            startup_cost: 0.0,
            ramp_rate: 0.0,
            heat_rate: None,
        });
        let i = build_milp_instance(&case, AreaId(1), None);
        assert!((i.demand_target - 315.0).abs() < 1e-9, "(400 - 100) * 1.05");
        case.generators[1].pgmax = 500.0;
        let i = build_milp_instance(&case, AreaId(1), None);
        assert_eq!(i.demand_target, 0.0, "never negative");
    }

    #[test]
    fn disabled_dark_and_foreign_units_are_excluded() {
        let mut case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![bus(1, 1, 100.0), bus(2, 1, 0.0), bus(3, 2, 50.0)],
            branches: vec![],
            generators: vec![conv(1, 1), conv(2, 2), conv(3, 3), conv(4, 1)],
        };
        case.generators[3].status = false; // disabled this period
        case.buses[1].in_service = false; // unit 2 sits on a dark bus
        let i = build_milp_instance(&case, AreaId(1), None);
        let ids: Vec<GenId> = i.units.iter().map(|u| u.id).collect();
        assert_eq!(ids, vec![GenId(1)]);
    }

    #[test]
    fn full_runner_unions_area_commitments_and_verifies() {
        // Two areas, each with enough conventional capacity; the runner
        // must produce a working verified schedule.
        let case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![bus(1, 1, 80.0), bus(2, 2, 60.0)],
            branches: vec![Branch {
                from: BusId(1),
                to: BusId(2),
                r: 0.005,
                x: 0.05,
                b: 0.0,
                rating: 0.0,
                in_service: true,
                voltage_class: 138.0,
            }],
            generators: vec![conv(1, 1), conv(2, 2)],
        };
        let out = run_milp_uc(&case, 4, None, &SolveOptions::default());
        assert!(out.schedule.feasible, "reasons: {:?}", out.check.reasons);
        assert_eq!(out.areas.len(), 2);
        assert!(out.areas.iter().all(|a| a.solution.optimal));
        assert_eq!(out.schedule.method, Method::MilpUc);
        assert_eq!(out.schedule.step_reached, None);
        assert!(out.schedule.unit_status[&GenId(1)]);
        assert!(out.schedule.unit_status[&GenId(2)]);
    }

    #[test]
    fn optimal_commitment_can_still_fail_verification() {
        // Reactive load far beyond the committed units' capability: the
        // optimizer is happy (MW only) but the dispatch check is not.
        let case = GridCase {
            base_mva: BASE_MVA,
            buses: vec![{
                let mut b = bus(1, 1, 80.0);
                b.qd = 500.0;
                b
            }],
            branches: vec![],
            generators: vec![conv(1, 1)],
        };
        let out = run_milp_uc(&case, 4, None, &SolveOptions::default());
        assert!(out.areas[0].solution.optimal, "MW problem is solvable");
        assert!(!out.schedule.feasible, "reactive shortfall must fail the check");
    }
}

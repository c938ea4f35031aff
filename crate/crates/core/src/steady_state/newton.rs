//! Newton-Raphson AC power flow, polar form, solved independently per
//! energized island.
//!
//! Buses hosting an enabled unit with reactive range are PV; everything
//! else is PQ. The island slack is the bus of the enabled conventional unit
//! with the largest pgmax. Reactive limits are enforced by clamping a
//! violated PV bus to the limit and re-solving as PQ (no switch-back).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use super::SolveOptions;
use crate::grid::{BusId, GenId, GridCase};

#[derive(Error, Debug)]
pub enum SolveError {
    #[error("island containing bus {island_bus} needs a source but has no enabled conventional unit")]
    NoSlack { island_bus: BusId },
}

#[derive(Clone, Debug)]
pub struct PowerFlowSolution {
    pub converged: bool,
    /// Newton iterations summed over islands and switching rounds.
    pub iterations: usize,
    /// Largest remaining per-unit mismatch across islands.
    pub mismatch_inf_norm: f64,
    /// (vm pu, va degrees) per in-service bus.
    pub bus_voltage: BTreeMap<BusId, (f64, f64)>,
    /// (MW, MVar) per enabled unit; slack units carry the island residual.
    pub gen_outputs: BTreeMap<GenId, (f64, f64)>,
    /// One slack unit per solved island.
    pub slack_units: Vec<GenId>,
    /// Total (MW, MVar) on the slack units.
    pub slack_injection: (f64, f64),
    /// Per-iteration mismatch norms in solve order.
    pub mismatch_history: Vec<f64>,
    /// Line-oriented solver trace when requested in the options.
    pub trace: Vec<String>,
}

impl PowerFlowSolution {
    /// Placeholder for checks that could not run a flow at all.
    pub fn failed() -> Self {
        PowerFlowSolution {
            converged: false,
            iterations: 0,
            mismatch_inf_norm: f64::INFINITY,
            bus_voltage: BTreeMap::new(),
            gen_outputs: BTreeMap::new(),
            slack_units: Vec::new(),
            slack_injection: (0.0, 0.0),
            mismatch_history: Vec::new(),
            trace: Vec::new(),
        }
    }
}

/// Abort threshold: a mismatch this large is a divergence, not progress.
const DIVERGENCE_NORM: f64 = 1e6;
/// Reactive clamp tolerance, per unit.
const Q_SWITCH_EPS: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq)]
enum BusRole {
    Slack,
    Pv,
    Pq,
}

#[derive(Clone, Copy, PartialEq)]
enum PvState {
    Free,
    ClampedMax,
    ClampedMin,
}

/// Solves the case for the given MW setpoints (enabled units missing from
/// the map fall back to their record's `pg`).
pub fn solve_power_flow(
    case: &GridCase,
    setpoints: &BTreeMap<GenId, f64>,
    opts: &SolveOptions,
) -> Result<PowerFlowSolution, SolveError> {
    let base = case.base_mva;
    let mut sol = PowerFlowSolution { converged: true, ..PowerFlowSolution::failed() };
    sol.mismatch_inf_norm = 0.0;

    for island in case.detect_islands() {
        let members: Vec<BusId> = island.clone();
        let gens: Vec<&crate::grid::GeneratorRecord> = case
            .active_generators()
            .filter(|g| members.contains(&g.bus))
            .collect();
        let dispatch =
            |g: &crate::grid::GeneratorRecord| setpoints.get(&g.id).copied().unwrap_or(g.pg);

        let slack = case.slack_unit(&members);
        let has_injection = gens.iter().any(|g| dispatch(g) != 0.0);
        let has_load = members
            .iter()
            .any(|&b| case.bus(b).map(|b| b.pd != 0.0 || b.qd != 0.0).unwrap_or(false));
        let Some(slack) = slack else {
            if has_injection || has_load {
                return Err(SolveError::NoSlack { island_bus: members[0] });
            }
            // Dead island: flat voltages, zero outputs.
            for &b in &members {
                let bus = case.bus(b).unwrap();
                sol.bus_voltage.insert(b, (bus.voltage_setpoint, 0.0));
            }
            for g in gens {
                sol.gen_outputs.insert(g.id, (0.0, 0.0));
            }
            continue;
        };

        solve_island(case, &members, slack.id, setpoints, opts, base, &mut sol);
    }
    Ok(sol)
}

fn solve_island(
    case: &GridCase,
    members: &[BusId],
    slack_unit: GenId,
    setpoints: &BTreeMap<GenId, f64>,
    opts: &SolveOptions,
    base: f64,
    sol: &mut PowerFlowSolution,
) {
    let n = members.len();
    let pos: BTreeMap<BusId, usize> = members.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let slack_bus = case.gen(slack_unit).unwrap().bus;
    let slack_idx = pos[&slack_bus];

    // Bus admittance matrix from in-service branches inside the island.
    let mut ybus = DMatrix::<Complex64>::zeros(n, n);
    for br in &case.branches {
        if !br.in_service {
            continue;
        }
        let (Some(&f), Some(&t)) = (pos.get(&br.from), pos.get(&br.to)) else { continue };
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let bsh = Complex64::new(0.0, br.b / 2.0);
        ybus[(f, f)] += ys + bsh;
        ybus[(t, t)] += ys + bsh;
        ybus[(f, t)] -= ys;
        ybus[(t, f)] -= ys;
    }

    // Specified injections. The slack unit's own dispatch is left out: that
    // unit absorbs the island residual.
    let mut p_spec = vec![0.0; n];
    let mut q_fixed = vec![0.0; n];
    let mut q_var_min = vec![0.0; n];
    let mut q_var_max = vec![0.0; n];
    let mut has_var_q = vec![false; n];
    for (&b, &i) in &pos {
        let bus = case.bus(b).unwrap();
        p_spec[i] -= bus.pd / base;
        q_fixed[i] -= bus.qd / base;
    }
    let island_gens: Vec<&crate::grid::GeneratorRecord> = case
        .active_generators()
        .filter(|g| pos.contains_key(&g.bus))
        .collect();
    for g in &island_gens {
        let i = pos[&g.bus];
        if g.id != slack_unit {
            p_spec[i] += setpoints.get(&g.id).copied().unwrap_or(g.pg) / base;
        }
        if g.qgmax > g.qgmin {
            has_var_q[i] = true;
            q_var_min[i] += g.qgmin / base;
            q_var_max[i] += g.qgmax / base;
        } else {
            q_fixed[i] += g.qgmax / base;
        }
    }

    let mut role = vec![BusRole::Pq; n];
    let mut pv_state = vec![PvState::Free; n];
    for i in 0..n {
        if has_var_q[i] {
            role[i] = BusRole::Pv;
        }
    }
    role[slack_idx] = BusRole::Slack;

    // Flat start: setpoint magnitude on voltage-controlled buses.
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    for (&b, &i) in &pos {
        if role[i] != BusRole::Pq {
            vm[i] = case.bus(b).unwrap().voltage_setpoint;
        }
    }

    let mut converged = false;
    let mut final_norm = f64::INFINITY;
    for round in 0..=opts.max_q_rounds {
        let (ok, norm) = newton_rounds(
            &ybus, &p_spec, &q_fixed, &role, &pv_state, &q_var_min, &q_var_max, &mut vm, &mut va,
            slack_idx, opts, round, members, sol,
        );
        converged = ok;
        final_norm = norm;
        if !converged || !opts.enforce_q_limits || round == opts.max_q_rounds {
            break;
        }
        // Clamp PV buses whose aggregate reactive need left its band.
        let mut switched = false;
        for i in 0..n {
            if role[i] != BusRole::Pv || pv_state[i] != PvState::Free {
                continue;
            }
            let q_calc = calc_injection(&ybus, &vm, &va, i).im;
            let q_gen_var = q_calc - q_fixed[i];
            if q_gen_var > q_var_max[i] + Q_SWITCH_EPS {
                pv_state[i] = PvState::ClampedMax;
                switched = true;
            } else if q_gen_var < q_var_min[i] - Q_SWITCH_EPS {
                pv_state[i] = PvState::ClampedMin;
                switched = true;
            }
        }
        if !switched {
            break;
        }
        if opts.record_trace {
            sol.trace.push(format!(
                "island@{} round {}: reactive limits clamped, re-solving",
                members[0],
                round + 1
            ));
        }
    }

    sol.converged &= converged;
    sol.mismatch_inf_norm = sol.mismatch_inf_norm.max(final_norm);

    for (&b, &i) in &pos {
        sol.bus_voltage.insert(b, (vm[i], va[i].to_degrees()));
    }

    // Per-unit outputs. Reactive bus totals are split over the units with
    // variable range in proportion to that range.
    let mut bus_units: BTreeMap<usize, Vec<&crate::grid::GeneratorRecord>> = BTreeMap::new();
    for g in &island_gens {
        bus_units.entry(pos[&g.bus]).or_default().push(g);
    }
    for (&i, units) in &bus_units {
        let s_calc = calc_injection(&ybus, &vm, &va, i);
        let bus = case.bus(members[i]).unwrap();
        let q_gen_var = (s_calc.im - q_fixed[i]) * base;
        let span: f64 = units
            .iter()
            .filter(|g| g.qgmax > g.qgmin)
            .map(|g| g.qgmax - g.qgmin)
            .sum();
        let floor: f64 =
            units.iter().filter(|g| g.qgmax > g.qgmin).map(|g| g.qgmin).sum();
        // Deliberately unclamped: non-slack buses converge in-band, while a
        // slack bus pushed past its aggregate limits must report the excess
        // so the schedule verdict can reject it.
        let t = if span > 0.0 { (q_gen_var - floor) / span } else { 0.0 };
        for g in units {
            let qg = if g.qgmax > g.qgmin { g.qgmin + t * (g.qgmax - g.qgmin) } else { g.qgmax };
            let pg = if g.id == slack_unit {
                let others: f64 = units
                    .iter()
                    .filter(|o| o.id != slack_unit)
                    .map(|o| setpoints.get(&o.id).copied().unwrap_or(o.pg))
                    .sum();
                s_calc.re * base + bus.pd - others
            } else {
                setpoints.get(&g.id).copied().unwrap_or(g.pg)
            };
            sol.gen_outputs.insert(g.id, (pg, qg));
        }
    }
    sol.slack_units.push(slack_unit);
    if let Some(&(pg, qg)) = sol.gen_outputs.get(&slack_unit) {
        sol.slack_injection.0 += pg;
        sol.slack_injection.1 += qg;
    }
}

fn calc_injection(ybus: &DMatrix<Complex64>, vm: &[f64], va: &[f64], i: usize) -> Complex64 {
    let n = vm.len();
    let vi = Complex64::from_polar(vm[i], va[i]);
    let mut current = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let y = ybus[(i, j)];
        if y != Complex64::new(0.0, 0.0) {
            current += y * Complex64::from_polar(vm[j], va[j]);
        }
    }
    vi * current.conj()
}

/// Runs Newton iterations for one switching round. Returns (converged,
/// final mismatch norm).
#[allow(clippy::too_many_arguments)]
fn newton_rounds(
    ybus: &DMatrix<Complex64>,
    p_spec: &[f64],
    q_fixed: &[f64],
    role: &[BusRole],
    pv_state: &[PvState],
    q_var_min: &[f64],
    q_var_max: &[f64],
    vm: &mut [f64],
    va: &mut [f64],
    slack_idx: usize,
    opts: &SolveOptions,
    round: usize,
    members: &[BusId],
    sol: &mut PowerFlowSolution,
) -> (bool, f64) {
    let n = vm.len();
    // Effective Q specification: PQ buses and clamped PV buses have one.
    let q_spec: Vec<Option<f64>> = (0..n)
        .map(|i| match (role[i], pv_state[i]) {
            (BusRole::Slack, _) => None,
            (BusRole::Pq, _) => Some(q_fixed[i]),
            (BusRole::Pv, PvState::ClampedMax) => Some(q_fixed[i] + q_var_max[i]),
            (BusRole::Pv, PvState::ClampedMin) => Some(q_fixed[i] + q_var_min[i]),
            (BusRole::Pv, PvState::Free) => None,
        })
        .collect();

    let p_rows: Vec<usize> = (0..n).filter(|&i| i != slack_idx).collect();
    let q_rows: Vec<usize> = (0..n).filter(|&i| q_spec[i].is_some()).collect();
    let m = p_rows.len() + q_rows.len();
    if m == 0 {
        return (true, 0.0);
    }

    for iter in 0..opts.max_iter {
        let s_calc: Vec<Complex64> = (0..n).map(|i| calc_injection(ybus, vm, va, i)).collect();
        let mut mismatch = DVector::<f64>::zeros(m);
        for (r, &i) in p_rows.iter().enumerate() {
            mismatch[r] = p_spec[i] - s_calc[i].re;
        }
        for (r, &i) in q_rows.iter().enumerate() {
            mismatch[p_rows.len() + r] = q_spec[i].unwrap() - s_calc[i].im;
        }
        let norm = mismatch.amax();
        sol.iterations += 1;
        sol.mismatch_history.push(norm);
        if opts.record_trace {
            sol.trace.push(format!(
                "island@{} round {round} iter {iter}: mismatch {norm:.6e}",
                members[0]
            ));
        }
        if norm <= opts.tol {
            return (true, norm);
        }
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return (false, norm);
        }

        // Jacobian over [theta (non-slack); vm (Q-constrained buses)].
        let mut jac = DMatrix::<f64>::zeros(m, m);
        let g = |i: usize, j: usize| ybus[(i, j)].re;
        let b = |i: usize, j: usize| ybus[(i, j)].im;
        for (r, &i) in p_rows.iter().enumerate() {
            for (c, &j) in p_rows.iter().enumerate() {
                jac[(r, c)] = if i == j {
                    -s_calc[i].im - b(i, i) * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * vm[j] * (g(i, j) * th.sin() - b(i, j) * th.cos())
                };
            }
            for (c, &j) in q_rows.iter().enumerate() {
                jac[(r, p_rows.len() + c)] = if i == j {
                    s_calc[i].re / vm[i] + g(i, i) * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g(i, j) * th.cos() + b(i, j) * th.sin())
                };
            }
        }
        for (r, &i) in q_rows.iter().enumerate() {
            for (c, &j) in p_rows.iter().enumerate() {
                jac[(p_rows.len() + r, c)] = if i == j {
                    s_calc[i].re - g(i, i) * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    -vm[i] * vm[j] * (g(i, j) * th.cos() + b(i, j) * th.sin())
                };
            }
            for (c, &j) in q_rows.iter().enumerate() {
                jac[(p_rows.len() + r, p_rows.len() + c)] = if i == j {
                    s_calc[i].im / vm[i] - b(i, i) * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g(i, j) * th.sin() - b(i, j) * th.cos())
                };
            }
        }

        // A singular Jacobian is reported as non-convergence, not a panic.
        let Some(step) = jac.lu().solve(&mismatch) else {
            return (false, norm);
        };
        for (r, &i) in p_rows.iter().enumerate() {
            va[i] += step[r];
        }
        for (r, &i) in q_rows.iter().enumerate() {
            vm[i] += step[p_rows.len() + r];
        }
    }

    // Out of iterations: report the latest norm.
    let norm = sol.mismatch_history.last().copied().unwrap_or(f64::INFINITY);
    (false, norm)
}

/// Power flow across one branch, computed from the solved voltages.
#[derive(Clone, Debug)]
pub struct BranchFlow {
    pub from: BusId,
    pub to: BusId,
    /// MW / MVar entering the branch on each side.
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    /// Series active loss, MW.
    pub loss_p: f64,
    /// Larger apparent-power loading of the two ends, MVA.
    pub mva_max: f64,
    pub rating: f64,
}

pub fn branch_flows(case: &GridCase, sol: &PowerFlowSolution) -> Vec<BranchFlow> {
    let base = case.base_mva;
    let mut flows = Vec::new();
    for br in &case.branches {
        if !br.in_service {
            continue;
        }
        let (Some(&(vmf, vaf)), Some(&(vmt, vat))) =
            (sol.bus_voltage.get(&br.from), sol.bus_voltage.get(&br.to))
        else {
            continue;
        };
        let vf = Complex64::from_polar(vmf, vaf.to_radians());
        let vt = Complex64::from_polar(vmt, vat.to_radians());
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let bsh = Complex64::new(0.0, br.b / 2.0);
        let s_from = vf * ((vf - vt) * ys + vf * bsh).conj() * base;
        let s_to = vt * ((vt - vf) * ys + vt * bsh).conj() * base;
        flows.push(BranchFlow {
            from: br.from,
            to: br.to,
            p_from: s_from.re,
            q_from: s_from.im,
            p_to: s_to.re,
            q_to: s_to.im,
            loss_p: s_from.re + s_to.re,
            mva_max: s_from.norm().max(s_to.norm()),
            rating: br.rating,
        });
    }
    flows
}

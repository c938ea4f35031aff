//! Merit-order economic dispatch.
//!
//! Renewables run first at their (already shaped) pgmax. Enabled
//! conventional units are floored at pgmin — they are committed — and the
//! remaining target is filled in ascending order of averaged marginal cost.
//! The per-area target is demand inflated by a loss adder so that network
//! losses do not land on the island slack unit.

use std::collections::BTreeMap;

use crate::grid::{AreaId, GenId, GenType, GridCase};

#[derive(Clone, Debug, Default)]
pub struct DispatchSolution {
    /// MW setpoint for every enabled unit (zero for sync-cond / storage).
    pub setpoints: BTreeMap<GenId, f64>,
    /// Inflated per-area targets the allocation aimed at.
    pub area_targets: BTreeMap<AreaId, f64>,
    /// False when some area's enabled capacity cannot reach its target;
    /// units are then left at maximum output.
    pub feasible: bool,
    /// Energy cost of the allocation, $/hr.
    pub objective: f64,
}

/// Allocation slack: targets are met to this MW tolerance.
const FILL_EPS: f64 = 1e-9;

pub fn economic_dispatch(
    case: &GridCase,
    area_demands: &BTreeMap<AreaId, f64>,
    loss_adder_pct: f64,
) -> DispatchSolution {
    let mut sol = DispatchSolution { feasible: true, ..Default::default() };

    // Non-dispatchable enabled units hold zero output.
    for g in case.active_generators() {
        if matches!(g.gtype, GenType::SyncCond | GenType::Storage | GenType::Csp) {
            sol.setpoints.insert(g.id, 0.0);
        }
    }

    for (&area, &demand) in area_demands {
        let target = demand * (1.0 + loss_adder_pct);
        sol.area_targets.insert(area, target);
        let mut remaining = target;

        let in_area = |gid: GenId| {
            let g = case.gen(gid).unwrap();
            case.bus(g.bus).map(|b| b.area == area).unwrap_or(false)
        };

        // Renewables first, at shaped maximum, in unit-id order.
        let mut renewables: Vec<GenId> = case
            .active_generators()
            .filter(|g| g.gtype.is_renewable())
            .map(|g| g.id)
            .filter(|&id| in_area(id))
            .collect();
        renewables.sort();
        for id in renewables {
            let g = case.gen(id).unwrap();
            let p = g.pgmax.min(remaining.max(0.0));
            remaining -= p;
            sol.setpoints.insert(id, p);
        }

        // Committed conventional units run at least at pgmin.
        let mut conventional: Vec<GenId> = case
            .active_generators()
            .filter(|g| g.gtype == GenType::Conventional)
            .map(|g| g.id)
            .filter(|&id| in_area(id))
            .collect();
        conventional.sort();
        for &id in &conventional {
            let g = case.gen(id).unwrap();
            remaining -= g.pgmin;
            sol.setpoints.insert(id, g.pgmin);
        }

        // Merit-order fill of the rest; ties resolve to the lower unit id.
        let mut order: Vec<(f64, GenId)> =
            conventional.iter().map(|&id| (case.gen(id).unwrap().marginal_cost(), id)).collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (_, id) in order {
            if remaining <= FILL_EPS {
                break;
            }
            let g = case.gen(id).unwrap();
            let extra = (g.pgmax - g.pgmin).min(remaining);
            if extra > 0.0 {
                *sol.setpoints.get_mut(&id).unwrap() += extra;
                remaining -= extra;
            }
        }

        if remaining > FILL_EPS {
            sol.feasible = false;
        }
    }

    sol.objective = sol
        .setpoints
        .iter()
        .map(|(id, p)| p * case.gen(*id).unwrap().marginal_cost())
        .sum();
    sol
}

//! Minimum-number-of-generators scheduler: starting from the slack-seeded
//! all-conventional-off system, units are enabled one at a time in ranked
//! order, re-running the dispatch + power-flow check after each, stopping
//! at the first working setup. The result is always a prefix of the ranked
//! selectable list (plus the slack seeds); exhausting the list yields the
//! everything-on schedule flagged infeasible.

use std::time::Instant;

use crate::gpwd::{self, GpwdBreakdown};
use crate::grid::{GenId, GridCase, Method, Schedule};
use crate::scenario::ScenarioMeta;
use crate::steady_state::{opf_check, schedule_from_check, OpfCheck, SolveOptions};
use crate::uss::{self, UssContext};

/// A full run: the schedule, the seeds/goals context, the ranking it
/// walked, and how many check invocations the search needed.
#[derive(Clone, Debug)]
pub struct MngOutcome {
    pub schedule: Schedule,
    pub ctx: UssContext,
    pub ranking: Vec<GpwdBreakdown>,
    pub warnings: Vec<String>,
    /// Units enabled beyond the slack seeds, in enabling order.
    pub extras: Vec<GenId>,
    /// Number of dispatch checks run (1 for a slack-only success).
    pub trials: usize,
    pub check: OpfCheck,
}

/// Ranks, seeds one slack unit per island, then enables ranked units
/// one-by-one until the check verdict is working. Elapsed time covers
/// ranking, every trial check, and the walk itself.
pub fn run_mng(
    case: &GridCase,
    meta: &ScenarioMeta,
    prev: Option<&Schedule>,
    opts: &SolveOptions,
) -> MngOutcome {
    let started = Instant::now();
    let ranking = gpwd::rank_units(case, prev, opts);

    let mut work = case.clone();
    let ctx = uss::prepare(&mut work, meta);

    let mut extras = Vec::new();
    let mut trials = 1usize;
    let mut check = opf_check(&work, opts);
    if !check.working {
        for row in &ranking.breakdowns {
            let Some(gen) = work.gen(row.unit) else { continue };
            if gen.status || !ctx.selectable.contains(&row.unit) {
                continue;
            }
            let gen = work.gen_mut(row.unit).unwrap();
            gen.status = true;
            gen.pg = gen.pgmin;
            extras.push(row.unit);
            check = opf_check(&work, opts);
            trials += 1;
            if check.working {
                break;
            }
        }
    }

    let schedule = schedule_from_check(
        &work,
        &check,
        meta.period,
        Method::Mng,
        None,
        started.elapsed().as_secs_f64(),
    );
    MngOutcome {
        schedule,
        ctx,
        ranking: ranking.breakdowns,
        warnings: ranking.warnings,
        extras,
        trials,
        check,
    }
}

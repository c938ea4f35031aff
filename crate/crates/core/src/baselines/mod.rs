//! The two comparison schedulers: a per-area single-period unit-commitment
//! optimizer solved by branch-and-bound, and a minimum-generator prefix
//! search over the weight-ranked unit list.

pub mod milp;
pub mod mng;

pub use milp::{
    build_milp_instance, dump_lp, enumerate_exact, run_milp_uc, solve_milp, AreaCommitment,
    MilpInstance, MilpOutcome, MilpSolution, MilpUnit,
};
pub use mng::{run_mng, MngOutcome};

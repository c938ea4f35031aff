//! Generation prioritization for power-system restoration.
//!
//! The crate models a three-area transmission system, rebuilds it hour by
//! hour from load / renewable forecast timeseries, and decides which
//! conventional units to enable through three schedulers:
//!
//! * a weighting-factor ranking combined with a goal-driven selection walk
//!   ([`gpwd`] + [`uss`]),
//! * a per-area single-period unit-commitment MILP ([`baselines::milp`]),
//! * a minimal-number-of-generators enable-and-try loop ([`baselines::mng`]).
//!
//! Feasibility of every candidate schedule is judged by a merit-order
//! dispatch followed by a Newton-Raphson AC power flow ([`steady_state`]).
//! [`harness`] runs the schedulers over period windows and writes comparable
//! reports.

pub mod baselines;
pub mod gpwd;
pub mod grid;
pub mod harness;
pub mod ingest;
pub mod scenario;
pub mod steady_state;
pub mod uss;

pub use grid::{AreaId, Branch, Bus, BusId, BusKind, GenId, GenType, GeneratorRecord, GridCase, Schedule};

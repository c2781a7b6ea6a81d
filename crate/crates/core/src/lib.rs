//! Throughput-optimal offline power schedules for an energy-harvesting
//! transmitter whose temperature follows `dT/dt = a·P − b·(T − T_e) + c` and
//! must stay below a critical level.
//!
//! The entry point is [`solve`], which dispatches to the closed-form
//! single-arrival solver or to the dual solver for several arrivals. Every
//! result carries a KKT certificate; [`oracle`] provides an independent
//! primal solver for cross-checks.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod model;
pub mod multi;
pub mod numerics;
pub mod oracle;
pub mod report;
pub mod single;

pub use error::{Error, Result};
pub use model::{
    Arrival, ArrivalProfile, FeasibilityReport, PowerPolicy, PowerSegment, PropertyCheck,
    PropertyReport, SegmentKind, ThermalParams, Trajectory, TrajectorySample,
};
pub use multi::{
    restricted_interval_solve, solve_multi, solve_multi_from, KktCertificate, MultiConfig,
};
pub use report::{Regime, SolveReport, TemperatureMultiplier};
pub use single::solve_single;

/// Solves any profile: closed form for a single arrival, dual solver otherwise.
pub fn solve(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    config: &MultiConfig,
) -> Result<SolveReport> {
    solve_from(params, profile, config, params.t_env)
}

/// [`solve`] starting at temperature `t_init`; the closed form only covers
/// a start at ambient temperature.
pub fn solve_from(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    config: &MultiConfig,
    t_init: f64,
) -> Result<SolveReport> {
    params.validate()?;
    params.require_no_heat_source()?;
    if profile.num_epochs() == 1 && t_init == params.t_env {
        single::solve_single(params, profile.total_energy(), profile.deadline())
    } else {
        multi::solve_multi_from(params, profile, config, t_init)
    }
}

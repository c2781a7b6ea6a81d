//! Domain types and exact evaluation of temperature, energy and throughput.

mod checks;
mod feasibility;
mod params;
mod policy;
mod thermal;

pub use checks::{staircase_policy, structural_checks, PropertyCheck, PropertyReport};
pub use feasibility::{
    check_energy_causality, check_temperature, FeasibilityReport, ACTIVE_TOL, FEAS_TOL,
};
pub use params::{Arrival, ArrivalProfile, ThermalParams};
pub use policy::{push_recip_pieces, PowerPolicy, PowerSegment, SegmentKind, TILING_EPS};
pub use thermal::{
    temperature_at, temperature_const_segment, temperature_recip_segment, temperature_trajectory,
    temperature_trajectory_with_marks, Trajectory, TrajectorySample,
};

/// Exact cumulative energy `∫_0^t P`.
pub fn energy_of_policy(policy: &PowerPolicy, t: f64) -> f64 {
    policy.energy_until(t)
}

/// `∫_0^D ½·log₂(1 + P)`.
pub fn throughput_of_policy(policy: &PowerPolicy) -> f64 {
    policy.throughput()
}

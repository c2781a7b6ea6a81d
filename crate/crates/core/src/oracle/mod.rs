//! Independent primal solver for the discretized problem, used only to
//! validate the main solvers: projected gradient ascent with an alternating
//! projection onto the constraint rows.

mod dykstra;
mod problem;
mod solve;

pub use dykstra::{dykstra, dykstra_project, ConvexSet, DYKSTRA_MAX_CYCLES, DYKSTRA_TOL};
pub use problem::{build_discrete, build_discrete_from, DiscreteProblem, PrefixRows};
pub use solve::{oracle_solve, OracleSolution, ORACLE_MAX_ITER};

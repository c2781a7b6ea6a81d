//! Root finding, quadrature and a reference ODE integrator.

mod ode;
mod quad;
mod root;

pub use ode::integrate_ode_rk4;
pub use quad::{quad_adaptive, simpson_composite};
pub use root::{
    bisect, bisect_fn, solve_monotone_system, BracketedRootProblem, MonotoneSystem,
    NestedSolveConfig, DEFAULT_OUTER_TOL, DEFAULT_ROOT_TOL,
};

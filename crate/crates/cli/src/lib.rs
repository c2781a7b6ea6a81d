//! Scenario files, reference presets, artifact emission and seeded property
//! runs for the `thermosched` solvers.

pub mod error;
pub mod presets;
pub mod props;
pub mod run;
pub mod scenario;

pub use error::{CliError, Result, Violation, Violations};
pub use props::{props, PropsConfig, PropsFailure, PropsReport};
pub use run::{run, solve_scenario, write_artifacts, Expectation, OracleGap, Outcome, Summary};
pub use scenario::{parse_scenario, Scenario, ScenarioDoc, SolverKind};

//! Solving a scenario and writing its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thermosched::model::{structural_checks, temperature_trajectory_with_marks, PropertyReport};
use thermosched::multi::KktCertificate;
use thermosched::oracle::{build_discrete_from, oracle_solve};
use thermosched::report::Multipliers;
use thermosched::{solve_from, solve_multi_from, MultiConfig, Regime, SolveReport};

use crate::error::{CliError, Result};
use crate::scenario::{Scenario, SolverKind};

/// Uniform samples of the trajectory table, before arrivals and breakpoints are added.
pub const TRAJECTORY_SAMPLES: usize = 1001;

/// Main solver against the discretized oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGap {
    pub grid_n: usize,
    /// Main solver throughput in bits.
    pub throughput: f64,
    /// Oracle objective in bits.
    pub oracle_objective: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub oracle_iterations: usize,
}

/// A solved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: SolveReport,
    /// The solver that produced `report`.
    pub solver: &'static str,
    pub checks: PropertyReport,
    pub oracle: Option<OracleGap>,
}

impl Outcome {
    pub fn certified(&self) -> bool {
        self.report.certified
    }
}

/// Self-check of a figure preset against its expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    pub measured: f64,
    pub expected: String,
    pub passed: bool,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub solver: String,
    pub certified: bool,
    pub throughput: f64,
    pub energy_used: f64,
    pub energy_available: f64,
    pub energy_wasted: bool,
    pub saturation_power: f64,
    pub regime: Regime,
    /// First instant the temperature reaches the ceiling.
    pub saturation_instant: Option<f64>,
    pub tight_intervals: Vec<(f64, f64)>,
    pub touch_instants: Vec<f64>,
    pub energy_tight: Vec<f64>,
    pub jump_instants: Vec<f64>,
    pub multipliers: Multipliers,
    pub kkt: KktCertificate,
    pub structural_checks_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleGap>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<Expectation>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn new(scenario: &Scenario, outcome: &Outcome, expectations: Vec<Expectation>) -> Self {
        let r = &outcome.report;
        Self {
            name: scenario.name.clone(),
            solver: outcome.solver.into(),
            certified: r.certified,
            throughput: r.throughput,
            energy_used: r.energy_used,
            energy_available: r.energy_available,
            energy_wasted: r.energy_wasted,
            saturation_power: scenario.params.p_sat(),
            regime: r.regime,
            saturation_instant: r.saturation_instant,
            tight_intervals: r.tight_intervals.clone(),
            touch_instants: r.touch_instants.clone(),
            energy_tight: r.energy_tight.clone(),
            jump_instants: r.jump_instants.clone(),
            multipliers: r.multipliers.clone(),
            kkt: r.kkt,
            structural_checks_passed: outcome.checks.all_passed(),
            oracle: outcome.oracle,
            expectations,
            notes: r.notes.clone(),
        }
    }
}

/// Solves a scenario with the configured solver, runs the structural checks
/// and, when requested, the oracle.
pub fn solve_scenario(scenario: &Scenario) -> Result<Outcome> {
    let opts = &scenario.solver;
    let config = MultiConfig {
        grid_n: opts.grid_n,
        tol: opts.tol,
    };
    let (params, profile, t_init) = (&scenario.params, &scenario.profile, scenario.t_init);
    let single = profile.num_epochs() == 1 && t_init == params.t_env;
    let (report, solver) = match opts.kind {
        SolverKind::Dual => (solve_multi_from(params, profile, &config, t_init)?, "dual"),
        SolverKind::Auto | SolverKind::ClosedForm => (
            solve_from(params, profile, &config, t_init)?,
            if single { "closed_form" } else { "dual" },
        ),
    };
    let checks = if t_init == params.t_env {
        structural_checks(&report.policy, params, profile)
    } else {
        // The structural properties assume a start at ambient temperature.
        PropertyReport::default()
    };
    let oracle = if opts.oracle {
        Some(oracle_gap(scenario, report.throughput)?)
    } else {
        None
    };
    Ok(Outcome {
        report,
        solver,
        checks,
        oracle,
    })
}

/// Runs the oracle on the scenario grid and compares it with `throughput`.
pub fn oracle_gap(scenario: &Scenario, throughput: f64) -> Result<OracleGap> {
    let n = scenario.solver.grid_n;
    let problem = build_discrete_from(&scenario.params, &scenario.profile, n, scenario.t_init)?;
    let sol = oracle_solve(&problem, scenario.solver.tol)?;
    let abs_gap = (throughput - sol.objective).abs();
    Ok(OracleGap {
        grid_n: n,
        throughput,
        oracle_objective: sol.objective,
        abs_gap,
        rel_gap: abs_gap / throughput.abs().max(1e-12),
        oracle_iterations: sol.iterations,
    })
}

/// Trajectory table with header `t,P,T,E_cum,rate`, including a row at
/// every arrival and at the deadline.
pub fn trajectory_csv(scenario: &Scenario, report: &SolveReport) -> Result<String> {
    let mut marks: Vec<f64> = scenario.profile.arrivals().iter().map(|a| a.time).collect();
    marks.push(scenario.profile.deadline());
    let traj = temperature_trajectory_with_marks(
        &report.policy,
        &scenario.params,
        scenario.t_init,
        TRAJECTORY_SAMPLES,
        &marks,
    )?;
    let mut out = String::from("t,P,T,E_cum,rate\n");
    for s in &traj.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.t, s.power, s.temperature, s.energy, s.rate
        );
    }
    Ok(out)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Encode(e.to_string()))
}

/// Writes `trajectory.csv`, `summary.json` and `checks.json` into `out_dir`.
pub fn write_artifacts(
    scenario: &Scenario,
    outcome: &Outcome,
    expectations: Vec<Expectation>,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let files = [
        ("trajectory.csv", trajectory_csv(scenario, &outcome.report)?),
        (
            "summary.json",
            to_json(&Summary::new(scenario, outcome, expectations))?,
        ),
        ("checks.json", to_json(&outcome.checks)?),
    ];
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

/// Solves and writes the artifacts.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<Outcome> {
    let outcome = solve_scenario(scenario)?;
    write_artifacts(scenario, &outcome, Vec::new(), out_dir)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn scenario(energy: f64, extra: &str) -> Scenario {
        parse_scenario(&format!(
            "deadline = 3.0\n[thermal]\na = 0.1\nb = 0.3\nt_env = 37.0\nt_crit = 38.0\n\
             [[arrivals]]\ntime = 0.0\nenergy = {energy}\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn zero_energy_is_certified_with_zero_throughput() {
        let out = solve_scenario(&scenario(0.0, "")).unwrap();
        assert!(out.certified());
        assert_eq!(out.report.throughput, 0.0);
    }

    #[test]
    fn table_has_rows_at_arrivals_and_deadline() {
        let sc = scenario(4.0, "[[arrivals]]\ntime = 1.2345\nenergy = 2.0\n");
        let out = solve_scenario(&sc).unwrap();
        let csv = trajectory_csv(&sc, &out.report).unwrap();
        let times: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        for t in [0.0, 1.2345, 3.0] {
            assert!(times.contains(&t), "no row at {t}");
        }
        assert!(csv.starts_with("t,P,T,E_cum,rate\n"));
    }

    #[test]
    fn oracle_gap_is_small() {
        let sc = scenario(5.0, "[solver]\noracle = true\ngrid_n = 1024\n");
        let out = solve_scenario(&sc).unwrap();
        assert!(out.oracle.unwrap().rel_gap < 1e-3, "{:?}", out.oracle);
    }
}

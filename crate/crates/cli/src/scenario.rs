//! Scenario documents: TOML in, validated solver inputs out.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thermosched::multi::MIN_GRID;
use thermosched::{ArrivalProfile, ThermalParams};

use crate::error::{CliError, Result, Violation, Violations};

pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Which solver handles the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Closed form for one arrival starting at ambient temperature, dual otherwise.
    #[default]
    Auto,
    ClosedForm,
    Dual,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Auto => "auto",
            SolverKind::ClosedForm => "closed_form",
            SolverKind::Dual => "dual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalDoc {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    pub t_env: f64,
    pub t_crit: f64,
    /// Initial temperature; ambient when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalDoc {
    pub time: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverDoc {
    pub grid_n: usize,
    pub tol: f64,
    pub kind: SolverKind,
    /// Also run the discretized oracle and report the gap.
    pub oracle: bool,
}

impl Default for SolverDoc {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_GRID,
            tol: DEFAULT_TOL,
            kind: SolverKind::Auto,
            oracle: false,
        }
    }
}

/// The document as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub deadline: f64,
    pub thermal: ThermalDoc,
    pub arrivals: Vec<ArrivalDoc>,
    #[serde(default)]
    pub solver: SolverDoc,
}

impl ScenarioDoc {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Encode(e.to_string()))
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<Scenario> {
        let mut out = Vec::new();
        let mut bad = |path: &str, message: String| {
            out.push(Violation {
                path: path.into(),
                message,
            })
        };
        let th = &self.thermal;

        for (path, v) in [("thermal.a", th.a), ("thermal.b", th.b)] {
            if !(v.is_finite() && v > 0.0) {
                bad(path, format!("must be positive and finite, got {v}"));
            }
        }
        if !th.c.is_finite() {
            bad("thermal.c", format!("must be finite, got {}", th.c));
        }
        if !th.t_env.is_finite() {
            bad("thermal.t_env", format!("must be finite, got {}", th.t_env));
        }
        if !(th.t_crit.is_finite() && th.t_crit > th.t_env) {
            bad(
                "thermal.t_crit",
                format!("must exceed t_env = {}, got {}", th.t_env, th.t_crit),
            );
        }
        let t0 = th.t0.unwrap_or(th.t_env);
        if !(t0.is_finite() && t0 >= th.t_env && t0 <= th.t_crit) {
            bad(
                "thermal.t0",
                format!(
                    "must lie in [t_env, t_crit] = [{}, {}], got {t0}",
                    th.t_env, th.t_crit
                ),
            );
        }

        let d = self.deadline;
        if !(d.is_finite() && d > 0.0) {
            bad("deadline", format!("must be positive and finite, got {d}"));
        }
        if self.arrivals.is_empty() {
            bad(
                "arrivals",
                "at least one arrival (at time 0) is required".into(),
            );
        }
        let mut prev: Option<f64> = None;
        for (i, arr) in self.arrivals.iter().enumerate() {
            let path = format!("arrivals[{i}].time");
            if i == 0 && arr.time != 0.0 {
                bad(
                    &path,
                    format!("the first arrival must be at 0, got {}", arr.time),
                );
            }
            if !arr.time.is_finite() || arr.time < 0.0 {
                bad(
                    &path,
                    format!("must be finite and nonnegative, got {}", arr.time),
                );
            } else if d.is_finite() && arr.time >= d && i > 0 {
                bad(
                    &path,
                    format!("must be before the deadline {d}, got {}", arr.time),
                );
            }
            if let Some(p) = prev {
                if arr.time.partial_cmp(&p) != Some(Ordering::Greater) {
                    bad(
                        &path,
                        format!(
                            "must be after the previous arrival at {p}, got {}",
                            arr.time
                        ),
                    );
                }
            }
            prev = Some(arr.time);
            if !(arr.energy.is_finite() && arr.energy >= 0.0) {
                bad(
                    &format!("arrivals[{i}].energy"),
                    format!("must be nonnegative and finite, got {}", arr.energy),
                );
            }
        }

        let s = &self.solver;
        if s.grid_n < MIN_GRID {
            bad(
                "solver.grid_n",
                format!("must be at least {MIN_GRID}, got {}", s.grid_n),
            );
        }
        if !(s.tol.is_finite() && s.tol > 0.0 && s.tol < 1.0) {
            bad("solver.tol", format!("must lie in (0, 1), got {}", s.tol));
        }
        if s.kind == SolverKind::ClosedForm {
            if self.arrivals.len() != 1 {
                bad(
                    "solver.kind",
                    "closed_form needs exactly one arrival".into(),
                );
            }
            if t0 != th.t_env {
                bad("solver.kind", "closed_form needs t0 equal to t_env".into());
            }
            if th.c != 0.0 {
                bad("solver.kind", "closed_form needs c = 0".into());
            }
        }
        if !out.is_empty() {
            return Err(CliError::Invalid(Violations(out)));
        }

        let invalid = |path: &str, e: thermosched::Error| {
            CliError::Invalid(Violations(vec![Violation {
                path: path.into(),
                message: e.to_string(),
            }]))
        };
        let params = ThermalParams::with_heat_source(th.a, th.b, th.c, th.t_env, th.t_crit)
            .map_err(|e| invalid("thermal", e))?;
        let pairs: Vec<(f64, f64)> = self.arrivals.iter().map(|a| (a.time, a.energy)).collect();
        let profile = ArrivalProfile::from_pairs(d, &pairs).map_err(|e| invalid("arrivals", e))?;
        Ok(Scenario {
            name: self.name.clone(),
            params,
            profile,
            t_init: t0,
            solver: *s,
        })
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub params: ThermalParams,
    pub profile: ArrivalProfile,
    /// Temperature at `t = 0`.
    pub t_init: f64,
    pub solver: SolverDoc,
}

impl Scenario {
    /// The document that reproduces this scenario.
    pub fn to_doc(&self) -> ScenarioDoc {
        let p = &self.params;
        ScenarioDoc {
            name: self.name.clone(),
            deadline: self.profile.deadline(),
            thermal: ThermalDoc {
                a: p.a,
                b: p.b,
                c: p.c,
                t_env: p.t_env,
                t_crit: p.t_crit,
                t0: (self.t_init != p.t_env).then_some(self.t_init),
            },
            arrivals: self
                .profile
                .arrivals()
                .iter()
                .map(|a| ArrivalDoc {
                    time: a.time,
                    energy: a.energy,
                })
                .collect(),
            solver: self.solver,
        }
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    doc.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
deadline = 2.0

[thermal]
a = 0.1
b = 0.3
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 5.0
"#;

    fn violations(text: &str) -> Vec<String> {
        match parse_scenario(text) {
            Err(CliError::Invalid(v)) => v.paths().map(String::from).collect(),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let sc = parse_scenario(MINIMAL).unwrap();
        assert_eq!(sc.t_init, 37.0);
        assert_eq!(sc.params.c, 0.0);
        assert_eq!(sc.solver, SolverDoc::default());
        assert_eq!(sc.profile.total_energy(), 5.0);
    }

    #[test]
    fn crit_below_env_names_the_field() {
        let text = MINIMAL.replace("t_crit = 38.0", "t_crit = 36.0");
        assert!(violations(&text).contains(&"thermal.t_crit".to_string()));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = MINIMAL
            .replace("a = 0.1", "a = -1.0")
            .replace("deadline = 2.0", "deadline = 0.0")
            .replace("energy = 5.0", "energy = -1.0");
        let paths = violations(&text);
        for p in ["thermal.a", "deadline", "arrivals[0].energy"] {
            assert!(paths.contains(&p.to_string()), "{p} missing from {paths:?}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("b = 0.3", "b = 0.3\nbogus = 1");
        assert!(
            matches!(parse_scenario(&text), Err(CliError::Parse(msg)) if msg.contains("bogus"))
        );
    }

    #[test]
    fn arrival_order_and_deadline() {
        let text = format!("{MINIMAL}\n[[arrivals]]\ntime = 2.5\nenergy = 1.0\n");
        assert_eq!(violations(&text), vec!["arrivals[1].time"]);
    }

    #[test]
    fn closed_form_needs_one_arrival() {
        let text = format!("{MINIMAL}\n[[arrivals]]\ntime = 1.0\nenergy = 1.0\n\n[solver]\nkind = \"closed_form\"\n");
        assert_eq!(violations(&text), vec!["solver.kind"]);
    }

    #[test]
    fn document_round_trips() {
        let sc = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&sc.to_doc().to_toml().unwrap()).unwrap();
        assert_eq!(sc, again);
    }
}

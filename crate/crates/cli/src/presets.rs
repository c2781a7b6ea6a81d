//! The five reference scenarios with their expected values.

use crate::error::{CliError, Result};
use crate::run::{Expectation, Outcome};
use crate::scenario::{parse_scenario, Scenario};

/// Stand-in for unlimited energy: several times what any policy can spend
/// on these horizons.
pub const UNLIMITED_ENERGY: f64 = 100.0;

const FIG4: &str = r#"name = "figure-4"
deadline = 2.0

[thermal]
a = 0.1
b = 0.3
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 100.0
"#;

const FIG5: &str = r#"name = "figure-5"
deadline = 3.5

[thermal]
a = 0.1
b = 0.3
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 100.0
"#;

const FIG6: &str = r#"name = "figure-6"
deadline = 3.5

[thermal]
a = 0.1
b = 0.3
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 17.71
"#;

const FIG7: &str = r#"name = "figure-7"
deadline = 5.0

[thermal]
a = 0.1
b = 0.3
t_env = 37.0
t_crit = 38.0

[[arrivals]]
time = 0.0
energy = 6.08

[[arrivals]]
time = 1.5
energy = 14.55
"#;

const FIG8: &str = r#"name = "figure-8"
deadline = 3.5

[thermal]
a = 0.1
b = 1.1
t_env = 37.0
t_crit = 37.92

[[arrivals]]
time = 0.0
energy = 25.0

[[arrivals]]
time = 2.0
energy = 17.0
"#;

pub const FIGURES: [u8; 5] = [4, 5, 6, 7, 8];

/// Scenario document of a figure preset.
pub fn document(figure: u8) -> Result<&'static str> {
    match figure {
        4 => Ok(FIG4),
        5 => Ok(FIG5),
        6 => Ok(FIG6),
        7 => Ok(FIG7),
        8 => Ok(FIG8),
        other => Err(CliError::UnknownFigure(other)),
    }
}

pub fn scenario(figure: u8) -> Result<Scenario> {
    parse_scenario(document(figure)?)
}

fn within(name: &str, measured: f64, target: f64, tol: f64) -> Expectation {
    Expectation {
        name: name.into(),
        measured,
        expected: format!("{target} ± {tol:e}"),
        passed: (measured - target).abs() <= tol,
    }
}

fn holds(name: &str, measured: f64, expected: &str, passed: bool) -> Expectation {
    Expectation {
        name: name.into(),
        measured,
        expected: expected.into(),
        passed,
    }
}

/// Checks a solved preset against its reference values.
pub fn expectations(
    figure: u8,
    scenario: &Scenario,
    outcome: &Outcome,
) -> Result<Vec<Expectation>> {
    let r = &outcome.report;
    let policy = &r.policy;
    let sat = r.saturation_instant.unwrap_or(f64::NAN);
    let mut out = vec![holds(
        "kkt_residual",
        r.kkt.max_residual(),
        "≤ 1e-5 (certified)",
        r.certified,
    )];
    match figure {
        4 => {
            let d = scenario.profile.deadline();
            out.push(within("saturation_instant", sat, d, 1e-6));
            // Largest rise of the power between consecutive sample points.
            let rise = (1..=400)
                .map(|k| {
                    policy.power_at(d * k as f64 / 401.0)
                        - policy.power_at(d * (k - 1) as f64 / 401.0)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(holds("power_strictly_decreasing", rise, "< 0", rise < 0.0));
        }
        5 => {
            out.push(within("t0", sat, 2.993, 1e-3));
            out.push(within("energy_used", r.energy_used, 17.98, 0.05));
            out.push(holds(
                "energy_wasted",
                r.energy_used,
                "flag set",
                r.energy_wasted,
            ));
        }
        6 => {
            out.push(within("t0", sat, 3.2, 0.05));
            out.push(within("energy_used", r.energy_used, 17.71, 1e-6));
        }
        7 => {
            let jump = policy.power_at(1.5) - policy.power_left(1.5);
            out.push(holds("jump_at_1.5", jump, "> 0", jump > 0.0));
            out.push(holds(
                "saturation_instant",
                sat,
                "in [3.8, 4.0]",
                (3.8..=4.0).contains(&sat),
            ));
            for t in [1.5, 5.0] {
                let tight = r.energy_tight.iter().any(|&s| (s - t).abs() <= 1e-9);
                out.push(holds(&format!("energy_tight_at_{t}"), t, "tight", tight));
            }
        }
        8 => {
            out.push(within(
                "saturation_power",
                scenario.params.p_sat(),
                10.12,
                1e-9,
            ));
            let first = r
                .tight_intervals
                .first()
                .copied()
                .unwrap_or((f64::NAN, f64::NAN));
            let last = r
                .tight_intervals
                .last()
                .copied()
                .unwrap_or((f64::NAN, f64::NAN));
            out.push(within("first_tight_start", first.0, 1.31, 0.05));
            out.push(within("first_tight_end", first.1, 1.66, 0.05));
            out.push(within("final_saturation", last.0, 2.23, 0.05));
            out.push(holds(
                "energy_used",
                r.energy_used,
                "< 42",
                r.energy_used < 42.0,
            ));
            out.push(holds(
                "energy_wasted",
                r.energy_used,
                "flag set",
                r.energy_wasted,
            ));
            out.push(within(
                "energy_used_by_2",
                policy.energy_until(2.0),
                25.0,
                1e-4,
            ));
        }
        other => return Err(CliError::UnknownFigure(other)),
    }
    Ok(out)
}

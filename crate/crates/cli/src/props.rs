//! Seeded random scenarios driven through the solver and the structural checks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermosched::model::{structural_checks, PowerPolicy, PowerSegment, PropertyReport};
use thermosched::{ArrivalProfile, ThermalParams};

use crate::error::{CliError, Result};
use crate::run::solve_scenario;
use crate::scenario::{Scenario, SolverDoc};

/// Options of a property run.
#[derive(Debug, Clone, PartialEq)]
pub struct PropsConfig {
    pub seed: u64,
    pub trials: usize,
    /// Arrivals per scenario.
    pub arrivals: usize,
    /// Replace each optimal policy by one with a negative power jump, to
    /// show that the checks catch it.
    pub inject_fault: bool,
    /// Where a failing scenario is written.
    pub out_dir: PathBuf,
}

impl Default for PropsConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 50,
            arrivals: 1,
            inject_fault: false,
            out_dir: PathBuf::from("."),
        }
    }
}

/// Failing trial of a run with every check it violates.
#[derive(Debug, Clone, PartialEq)]
pub struct PropsFailure {
    pub trial: usize,
    /// `(check, detail)` pairs; the detail locates the violation.
    pub violations: Vec<(String, String)>,
    pub reproducer: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropsReport {
    pub passed: usize,
    pub failure: Option<PropsFailure>,
}

/// Random scenario with `arrivals` arrivals; energies range from a fraction
/// of what the ceiling allows to well beyond it.
pub fn random_scenario(rng: &mut ChaCha8Rng, arrivals: usize, index: usize) -> Scenario {
    let a = rng.gen_range(0.05..0.2);
    let b = rng.gen_range(0.2..1.2);
    let delta = rng.gen_range(0.5..2.0);
    let params =
        ThermalParams::new(a, b, 37.0, 37.0 + delta).expect("sampled parameters are valid");
    let deadline = rng.gen_range(1.5..6.0);
    let mut times: Vec<f64> = (1..arrivals)
        .map(|_| rng.gen_range(0.1..0.9) * deadline)
        .collect();
    times.sort_by(f64::total_cmp);
    times.insert(0, 0.0);
    // Keep arrivals apart so every epoch spans several grid cells.
    for k in 1..times.len() {
        times[k] = times[k].max(times[k - 1] + 0.05 * deadline);
    }
    times.retain(|&t| t < 0.95 * deadline);
    let scale = params.p_sat() * deadline / times.len() as f64;
    let pairs: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| (t, scale * rng.gen_range(0.1..1.5)))
        .collect();
    let profile = ArrivalProfile::from_pairs(deadline, &pairs).expect("sampled profile is valid");
    Scenario {
        name: Some(format!("random-{arrivals}-{index}")),
        params,
        profile,
        t_init: 37.0,
        solver: SolverDoc::default(),
    }
}

/// Feasible policy whose power drops by half at the first interior arrival
/// (or mid-horizon for one arrival).
pub fn negative_jump_policy(scenario: &Scenario) -> Result<PowerPolicy> {
    let prof = &scenario.profile;
    let d = prof.deadline();
    let s = prof.interior_arrival_times().next().unwrap_or(0.5 * d);
    let p = 0.5
        * (prof.cumulative_energy(0) / s)
            .min(prof.total_energy() / d)
            .min(scenario.params.p_sat());
    Ok(PowerPolicy::new(vec![
        PowerSegment::constant(0.0, s, p),
        PowerSegment::constant(s, d, 0.5 * p),
    ])?)
}

fn violations(scenario: &Scenario, inject_fault: bool) -> Result<Vec<(String, String)>> {
    let checks: PropertyReport = if inject_fault {
        structural_checks(
            &negative_jump_policy(scenario)?,
            &scenario.params,
            &scenario.profile,
        )
    } else {
        let out = match solve_scenario(scenario) {
            Ok(out) => out,
            Err(e) => return Ok(vec![("solve".into(), e.to_string())]),
        };
        if !out.certified() {
            let detail = format!(
                "max residual {:.3e}: {:?}",
                out.report.kkt.max_residual(),
                out.report.kkt
            );
            return Ok(vec![("kkt_certificate".into(), detail)]);
        }
        out.checks
    };
    let found = checks
        .failures()
        .map(|c| (c.name.clone(), c.detail.clone()))
        .collect();
    Ok(found)
}

fn dump(scenario: &Scenario, dir: &Path, seed: u64, trial: usize) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("props-failure-seed{seed}-trial{trial}.toml"));
    fs::write(&path, scenario.to_doc().to_toml()?).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Runs `trials` seeded scenarios and stops at the first trial that violates
/// an invariant, dumping the scenario that reproduces it.
pub fn props(config: &PropsConfig) -> Result<PropsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for trial in 0..config.trials {
        let scenario = random_scenario(&mut rng, config.arrivals, trial);
        let violations = violations(&scenario, config.inject_fault)?;
        if !violations.is_empty() {
            let reproducer = dump(&scenario, &config.out_dir, config.seed, trial)?;
            return Ok(PropsReport {
                passed: trial,
                failure: Some(PropsFailure {
                    trial,
                    violations,
                    reproducer,
                }),
            });
        }
    }
    Ok(PropsReport {
        passed: config.trials,
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for k in 0..5 {
            assert_eq!(
                random_scenario(&mut r1, 2, k),
                random_scenario(&mut r2, 2, k)
            );
        }
    }

    #[test]
    fn fault_policy_is_feasible_but_jumps_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sc = random_scenario(&mut rng, 2, 0);
        let pol = negative_jump_policy(&sc).unwrap();
        let s = sc.profile.interior_arrival_times().next().unwrap();
        assert!(pol.power_at(s) < pol.power_left(s));
        assert!(pol.energy_until(s) <= sc.profile.cumulative_energy(0) + 1e-12);
    }
}

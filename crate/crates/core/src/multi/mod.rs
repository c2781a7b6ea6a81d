//! Optimal policies for any number of arrivals.
//!
//! A barrier method on the dual of the cell-exact discretization identifies
//! which constraints bind; the continuous policy is then recovered by solving
//! the small optimality system of that structure and certified.

mod dual;
mod grid;
mod kkt;
mod refine;

pub use dual::{solve_grid, BarrierConfig, DualState, GridSolution};
pub use grid::Grid;
pub use kkt::{kkt_certificate, kkt_certificate_from, KktCertificate};
pub use refine::{extract_structure, structure_variants, Contact, Structure};

use crate::error::{Error, Result};
use crate::model::{ArrivalProfile, PowerPolicy, ThermalParams};
use crate::report::{Multipliers, Regime, SolveReport, TemperatureMultiplier};
use refine::{grid_fallback, Refiner};

/// Smallest grid accepted by the dual solver.
pub const MIN_GRID: usize = 256;

/// Options of the multi-arrival solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiConfig {
    /// Number of uniform cells before arrival instants are inserted.
    pub grid_n: usize,
    /// Accuracy target; scales the duality gap of the grid solve.
    pub tol: f64,
}

impl Default for MultiConfig {
    fn default() -> Self {
        Self {
            grid_n: 4096,
            tol: 1e-6,
        }
    }
}

impl MultiConfig {
    fn barrier(&self) -> BarrierConfig {
        BarrierConfig {
            gap: (self.tol * 1e-5).min(1e-11),
            ..BarrierConfig::default()
        }
    }
}

/// Solves a profile starting at the ambient temperature.
pub fn solve_multi(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    config: &MultiConfig,
) -> Result<SolveReport> {
    solve_multi_from(params, profile, config, params.t_env)
}

/// Solves a profile starting at temperature `t_init ∈ [T_e, T_c]`.
pub fn solve_multi_from(
    params: &ThermalParams,
    profile: &ArrivalProfile,
    config: &MultiConfig,
    t_init: f64,
) -> Result<SolveReport> {
    params.validate()?;
    params.require_no_heat_source()?;
    if config.grid_n < MIN_GRID {
        return Err(Error::InvalidParams(format!(
            "grid_n must be at least {MIN_GRID}, got {}",
            config.grid_n
        )));
    }
    if !(t_init >= params.t_env && t_init <= params.t_crit) {
        return Err(Error::InvalidParams(format!(
            "initial temperature {t_init} outside [{}, {}]",
            params.t_env, params.t_crit
        )));
    }
    let d = profile.deadline();
    let m = profile.num_epochs();
    if profile.total_energy() <= 0.0 {
        // Any β ≥ 1 keeps the power at zero.
        let mut energy = vec![0.0; m];
        energy[m - 1] = 1.0;
        let mult = Multipliers {
            energy,
            temperature: TemperatureMultiplier::zero(),
        };
        let notes = vec!["no energy available".to_string()];
        return Ok(SolveReport::assemble_from(
            params,
            profile,
            PowerPolicy::zero(d),
            Regime::MultiArrival,
            mult,
            notes,
            t_init,
        ));
    }

    let sol = solve_grid(params, profile, config.grid_n, t_init, &config.barrier())?;
    let base = extract_structure(&sol, params);
    let mut best: Option<SolveReport> = None;
    for (attempt, structure) in structure_variants(&base, profile).into_iter().enumerate() {
        let refiner = Refiner::new(params, profile, t_init, structure.clone());
        let Some((policy, mult)) = refiner.solve(refiner.initial_guess(&sol)) else {
            continue;
        };
        let notes = vec![format!(
            "structure (attempt {attempt}): tight epochs {:?}, {} contact(s), terminal touch {}",
            structure.tight_epochs,
            structure.contacts.len(),
            structure.terminal_touch
        )];
        let report = SolveReport::assemble_from(
            params,
            profile,
            policy,
            Regime::MultiArrival,
            mult,
            notes,
            t_init,
        );
        if report.certified {
            return Ok(report);
        }
        if best
            .as_ref()
            .is_none_or(|b| report.kkt.max_residual() < b.kkt.max_residual())
        {
            best = Some(report);
        }
    }

    let (policy, mult) = grid_fallback(&sol);
    let mut notes = vec![format!(
        "continuous refinement did not certify; returning the {}-cell grid policy",
        sol.grid.cells()
    )];
    if let Some(b) = &best {
        notes.push(format!(
            "best refined candidate had KKT residual {:.3e}",
            b.kkt.max_residual()
        ));
    }
    Ok(SolveReport::assemble_from(
        params,
        profile,
        policy,
        Regime::MultiArrival,
        mult,
        notes,
        t_init,
    ))
}

/// Optimal policy on the window `[t1, t2]` entered at temperature `t_start`,
/// with the arrivals `(time, energy)` of the window (absolute times in
/// `[t1, t2)`). The temperature ceiling is imposed throughout the window.
/// The returned policy is in window-local time `[0, t2 − t1]`.
pub fn restricted_interval_solve(
    params: &ThermalParams,
    t1: f64,
    t2: f64,
    t_start: f64,
    energies: &[(f64, f64)],
    grid_n: usize,
) -> Result<PowerPolicy> {
    if !(t1 < t2) {
        return Err(Error::InfeasibleSubProfile(format!(
            "empty window [{t1}, {t2}]"
        )));
    }
    if !(t_start >= params.t_env && t_start <= params.t_crit) {
        return Err(Error::InfeasibleSubProfile(format!(
            "start temperature {t_start} outside [{}, {}]",
            params.t_env, params.t_crit
        )));
    }
    if let Some(&(t, _)) = energies.iter().find(|&&(t, _)| t < t1 || t >= t2) {
        return Err(Error::InfeasibleSubProfile(format!(
            "arrival at {t} outside [{t1}, {t2})"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = energies.iter().map(|&(t, e)| (t - t1, e)).collect();
    if pairs.first().is_none_or(|p| p.0 > 0.0) {
        pairs.insert(0, (0.0, 0.0));
    }
    let profile = ArrivalProfile::from_pairs(t2 - t1, &pairs)
        .map_err(|e| Error::InfeasibleSubProfile(e.to_string()))?;
    let config = MultiConfig {
        grid_n,
        ..MultiConfig::default()
    };
    Ok(solve_multi_from(params, &profile, &config, t_start)?.policy)
}

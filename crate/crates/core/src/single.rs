//! Closed-form optimal policy for a single energy arrival at `t = 0`.

use crate::error::{Error, Result};
use crate::model::{
    push_recip_pieces, temperature_at, ArrivalProfile, PowerPolicy, PowerSegment, ThermalParams,
};
use crate::numerics::{
    bisect_fn, solve_monotone_system, MonotoneSystem, NestedSolveConfig, DEFAULT_ROOT_TOL,
};
use crate::report::{DensityPiece, Multipliers, Regime, SolveReport, TemperatureMultiplier};

/// Relative margin on the energy when deciding the regime; ties go to the
/// simpler regime.
const REGIME_MARGIN: f64 = 1e-9;

/// Largest energy for which constant power `E/D` never exceeds the ceiling.
pub fn e_critical(params: &ThermalParams, deadline: f64) -> f64 {
    params.p_sat() * deadline / -(-params.b * deadline).exp_m1()
}

/// Ceiling above which constant power `E/D` is optimal; only `a`, `b` and
/// `T_e` of `params` are used.
pub fn tc_limit(params: &ThermalParams, energy: f64, deadline: f64) -> f64 {
    params.t_env + params.a / params.b * (energy / deadline) * -(-params.b * deadline).exp_m1()
}

/// Instant the temperature reaches the ceiling when energy is unlimited:
/// the positive root of `(1/b)(1 − e^{−b t}/(p̄ + 1)) − t`.
pub fn t0_infinite_energy(params: &ThermalParams) -> f64 {
    let b = params.b;
    let k = 1.0 / (params.p_sat() + 1.0);
    let w = |t: f64| -(k * (-b * t).exp() - 1.0) / b - t;
    // w(0) = (1 − k)/b > 0 and w(1/b) = (1 − k/e)/b − 1/b < 0.
    bisect_fn(w, 0.0, 1.0 / b, DEFAULT_ROOT_TOL * 1e-2)
        .expect("the bracket [0, 1/b] always changes sign")
}

/// Optimal policy when energy is not a constraint, and the energy it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct Unconstrained {
    pub policy: PowerPolicy,
    pub energy: f64,
    /// Saturation instant when it falls before the deadline.
    pub t0: Option<f64>,
    /// Temperature multiplier of the reciprocal-exponential part.
    pub c: f64,
}

pub fn solve_unconstrained(params: &ThermalParams, deadline: f64) -> Result<Unconstrained> {
    params.validate()?;
    params.require_no_heat_source()?;
    let b = params.b;
    let p_sat = params.p_sat();
    let t0 = t0_infinite_energy(params);
    let mut segs = Vec::new();
    let (t0, c) = if t0 < deadline {
        let c = (-b * t0).exp() / (p_sat + 1.0);
        push_recip_pieces(&mut segs, 0.0, t0, 0.0, c, b);
        segs.push(PowerSegment::constant(t0, deadline, p_sat));
        (Some(t0), c)
    } else {
        let c =
            deadline / ((params.t_delta() / params.a + 1.0 / b) * (b * deadline).exp() - 1.0 / b);
        push_recip_pieces(&mut segs, 0.0, deadline, 0.0, c, b);
        (None, c)
    };
    let policy = PowerPolicy::new(segs)?;
    Ok(Unconstrained {
        energy: policy.total_energy(),
        policy,
        t0,
        c,
    })
}

/// Policy and total energy of the unconstrained-energy optimum.
pub fn solve_unconstrained_energy(
    params: &ThermalParams,
    deadline: f64,
) -> Result<(PowerPolicy, f64)> {
    let u = solve_unconstrained(params, deadline)?;
    Ok((u.policy, u.energy))
}

/// Energy-limited optimum between the constant and unconstrained regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLimited {
    pub policy: PowerPolicy,
    pub beta: f64,
    pub c: f64,
    /// Saturation instant, or `None` when the ceiling is only reached at `D`.
    pub t0: Option<f64>,
}

fn recip_policy(
    beta: f64,
    c: f64,
    rate: f64,
    until: f64,
    tail: Option<(f64, f64)>,
) -> Result<PowerPolicy> {
    let mut segs = Vec::new();
    push_recip_pieces(&mut segs, 0.0, until, beta, c, rate);
    if let Some((end, p)) = tail {
        segs.push(PowerSegment::constant(until, end, p));
    }
    PowerPolicy::new(segs)
}

/// Unknowns `(t0, C)`; `β = 1/(p̄+1) − C·e^{b t0}` keeps the power continuous
/// at `p̄` when the ceiling is reached.
struct SaturatedSystem<'a> {
    params: &'a ThermalParams,
    energy: f64,
    deadline: f64,
    t0_lo: f64,
}

impl SaturatedSystem<'_> {
    fn k(&self) -> f64 {
        1.0 / (self.params.p_sat() + 1.0)
    }

    fn beta(&self, t0: f64, c: f64) -> f64 {
        (self.k() - c * (self.params.b * t0).exp()).max(0.0)
    }

    fn policy(&self, t0: f64, c: f64) -> Result<PowerPolicy> {
        let tail = (t0 < self.deadline).then_some((self.deadline, self.params.p_sat()));
        recip_policy(self.beta(t0, c), c, self.params.b, t0, tail)
    }
}

impl MonotoneSystem for SaturatedSystem<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn bracket(&self, level: usize, outer: &[f64]) -> (f64, f64) {
        match level {
            0 => (self.t0_lo, self.deadline),
            _ => (0.0, self.k() * (-self.params.b * outer[0]).exp()),
        }
    }

    fn residual(&self, level: usize, x: &[f64]) -> f64 {
        let (t0, c) = (x[0], x[1]);
        let Ok(policy) = self.policy(t0, c) else {
            return f64::NAN;
        };
        match level {
            0 => policy.total_energy() - self.energy,
            _ => temperature_at(&policy, self.params, self.params.t_env, t0) - self.params.t_crit,
        }
    }
}

/// Unknowns `(β, C)` with the ceiling reached only at the deadline.
struct BoundarySystem<'a> {
    params: &'a ThermalParams,
    energy: f64,
    deadline: f64,
    beta_max: f64,
}

impl BoundarySystem<'_> {
    fn terminal_excess(&self, beta: f64, c: f64) -> f64 {
        match recip_policy(beta, c, self.params.b, self.deadline, None) {
            Ok(p) => {
                temperature_at(&p, self.params, self.params.t_env, self.deadline)
                    - self.params.t_crit
            }
            Err(_) => f64::NAN,
        }
    }
}

impl MonotoneSystem for BoundarySystem<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn bracket(&self, level: usize, outer: &[f64]) -> (f64, f64) {
        match level {
            0 => (0.0, self.beta_max),
            _ => {
                let beta = outer[0];
                // Larger C means less power everywhere, so T(D) decreases in C.
                let mut hi = ((1.0 - beta) * (-self.params.b * self.deadline).exp()).max(1e-300);
                for _ in 0..2000 {
                    if self.terminal_excess(beta, hi) < 0.0 {
                        break;
                    }
                    hi *= 2.0;
                }
                let mut lo = if beta > 0.0 { 0.0 } else { hi };
                if beta <= 0.0 {
                    for _ in 0..2000 {
                        lo *= 0.5;
                        if self.terminal_excess(beta, lo) > 0.0 {
                            break;
                        }
                    }
                }
                (lo, hi)
            }
        }
    }

    fn residual(&self, level: usize, x: &[f64]) -> f64 {
        let (beta, c) = (x[0], x[1]);
        match level {
            0 => match recip_policy(beta, c, self.params.b, self.deadline, None) {
                Ok(p) => p.total_energy() - self.energy,
                Err(_) => f64::NAN,
            },
            _ => self.terminal_excess(beta, c),
        }
    }
}

/// Solves the energy-limited regime: the battery empties at `D` and the
/// temperature reaches the ceiling either at some `t0 < D` (then stays) or
/// exactly at `D`.
pub fn solve_energy_limited(
    params: &ThermalParams,
    energy: f64,
    deadline: f64,
) -> Result<EnergyLimited> {
    params.validate()?;
    params.require_no_heat_source()?;
    let t0_inf = t0_infinite_energy(params);
    let cfg = NestedSolveConfig {
        tolerances: vec![1e-12, 1e-14],
        max_iter: 400,
    };
    if t0_inf < deadline {
        let sys = SaturatedSystem {
            params,
            energy,
            deadline,
            t0_lo: t0_inf * (1.0 + 1e-12) + 1e-15,
        };
        match solve_monotone_system(&sys, &cfg) {
            Ok(x) if x[0] < deadline => {
                let (t0, c) = (x[0], x[1]);
                return Ok(EnergyLimited {
                    policy: sys.policy(t0, c)?,
                    beta: sys.beta(t0, c),
                    c,
                    t0: Some(t0),
                });
            }
            Ok(_) | Err(Error::BracketFailure { level: 0, .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let sys = BoundarySystem {
        params,
        energy,
        deadline,
        beta_max: 1.0 / (e_critical(params, deadline) / deadline + 1.0),
    };
    let x = solve_monotone_system(
        &sys,
        &NestedSolveConfig {
            tolerances: vec![1e-14, 1e-16],
            max_iter: 600,
        },
    )?;
    let (beta, c) = (x[0], x[1]);
    Ok(EnergyLimited {
        policy: recip_policy(beta, c, params.b, deadline, None)?,
        beta,
        c,
        t0: None,
    })
}

/// Optimal policy, multipliers and certificate for a single arrival of `energy` at `t = 0`.
pub fn solve_single(params: &ThermalParams, energy: f64, deadline: f64) -> Result<SolveReport> {
    params.validate()?;
    params.require_no_heat_source()?;
    let profile = ArrivalProfile::single(energy, deadline)?;
    let b = params.b;
    let k = 1.0 / (params.p_sat() + 1.0);

    if energy <= e_critical(params, deadline) * (1.0 + REGIME_MARGIN) {
        let p = energy / deadline;
        let mult = Multipliers {
            energy: vec![1.0 / (p + 1.0)],
            temperature: TemperatureMultiplier::zero(),
        };
        return Ok(SolveReport::assemble(
            params,
            &profile,
            PowerPolicy::constant(p, deadline),
            Regime::ConstantPower,
            mult,
            Vec::new(),
        ));
    }

    let unc = solve_unconstrained(params, deadline)?;
    if energy >= unc.energy * (1.0 - REGIME_MARGIN) {
        let (regime, temperature) = match unc.t0 {
            Some(t0) => (
                Regime::UnconstrainedSaturated { t0 },
                TemperatureMultiplier {
                    densities: vec![DensityPiece {
                        start: t0,
                        end: deadline,
                        kappa: b * k,
                    }],
                    atoms: vec![(deadline, k * (-b * deadline).exp())],
                },
            ),
            None => (
                Regime::UnconstrainedNoSaturation { c: unc.c },
                TemperatureMultiplier {
                    densities: Vec::new(),
                    atoms: vec![(deadline, unc.c)],
                },
            ),
        };
        let mut notes = Vec::new();
        if energy > unc.energy * (1.0 + REGIME_MARGIN) {
            notes.push(format!(
                "{:.6} units of energy cannot be used without overheating",
                energy - unc.energy
            ));
        }
        let mult = Multipliers {
            energy: vec![0.0],
            temperature,
        };
        return Ok(SolveReport::assemble(
            params, &profile, unc.policy, regime, mult, notes,
        ));
    }

    let lim = solve_energy_limited(params, energy, deadline)?;
    let (regime, temperature) = match lim.t0 {
        Some(t0) => (
            Regime::EnergyLimitedSaturated {
                t0,
                beta: lim.beta,
                c: lim.c,
            },
            TemperatureMultiplier {
                densities: vec![DensityPiece {
                    start: t0,
                    end: deadline,
                    kappa: b * lim.c * (b * t0).exp(),
                }],
                atoms: vec![(deadline, lim.c * (b * (t0 - deadline)).exp())],
            },
        ),
        None => (
            Regime::EnergyLimitedBoundary {
                beta: lim.beta,
                c: lim.c,
            },
            TemperatureMultiplier {
                densities: Vec::new(),
                atoms: vec![(deadline, lim.c)],
            },
        ),
    };
    let mult = Multipliers {
        energy: vec![lim.beta],
        temperature,
    };
    Ok(SolveReport::assemble(
        params,
        &profile,
        lim.policy,
        regime,
        mult,
        Vec::new(),
    ))
}

//! Solver output: the policy, its multipliers and annotations.

use serde::{Deserialize, Serialize};

use crate::model::{
    check_energy_causality, check_temperature, ArrivalProfile, PowerPolicy, ThermalParams,
};
use crate::multi::KktCertificate;

/// Which structure the optimal policy has.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// Constant `E/D`; the temperature ceiling never binds.
    ConstantPower,
    /// Energy is plentiful and the temperature saturates at `t0 < D`.
    UnconstrainedSaturated { t0: f64 },
    /// Energy is plentiful and the temperature only reaches the ceiling at `D`.
    UnconstrainedNoSaturation { c: f64 },
    /// Energy binds and the temperature saturates at `t0 < D`.
    EnergyLimitedSaturated { t0: f64, beta: f64, c: f64 },
    /// Energy binds and the temperature only reaches the ceiling at `D`.
    EnergyLimitedBoundary { beta: f64, c: f64 },
    /// Several arrivals, solved by the dual method.
    MultiArrival,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::ConstantPower => "constant_power",
            Regime::UnconstrainedSaturated { .. } => "unconstrained_saturated",
            Regime::UnconstrainedNoSaturation { .. } => "unconstrained_no_saturation",
            Regime::EnergyLimitedSaturated { .. } => "energy_limited_saturated",
            Regime::EnergyLimitedBoundary { .. } => "energy_limited_boundary",
            Regime::MultiArrival => "multi_arrival",
        }
    }
}

/// Density piece `λ(t) = kappa·e^{−b t}` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub start: f64,
    pub end: f64,
    pub kappa: f64,
}

/// The temperature multiplier as a measure: exponential densities plus atoms.
///
/// Multipliers are scaled so that stationarity reads
/// `1/(1 + P(t)) = β(t) + e^{b t}·Λ(t)` with `Λ(t) = λ((t, D])` and
/// `β(t)` the sum of energy multipliers of epoch ends after `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TemperatureMultiplier {
    pub densities: Vec<DensityPiece>,
    /// `(time, mass)` pairs.
    pub atoms: Vec<(f64, f64)>,
}

impl TemperatureMultiplier {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `λ((t, D])`.
    pub fn tail(&self, t: f64, rate: f64) -> f64 {
        let dens: f64 = self
            .densities
            .iter()
            .filter(|d| d.end > t)
            .map(|d| {
                let lo = d.start.max(t);
                d.kappa * ((-rate * lo).exp() - (-rate * d.end).exp()) / rate
            })
            .sum();
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 > t).map(|a| a.1).sum();
        dens + atoms
    }

    pub fn total_mass(&self, rate: f64) -> f64 {
        self.tail(f64::NEG_INFINITY, rate)
    }

    pub fn min_weight(&self) -> f64 {
        self.densities
            .iter()
            .map(|d| d.kappa)
            .chain(self.atoms.iter().map(|a| a.1))
            .fold(0.0, f64::min)
    }
}

/// Energy multipliers (one per epoch end) and the temperature multiplier.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers {
    /// `μ_e` for the causality constraint at the end of epoch `e`.
    pub energy: Vec<f64>,
    pub temperature: TemperatureMultiplier,
}

impl Multipliers {
    /// `β(t)`: energy multipliers of the epoch ends strictly after `t`.
    pub fn energy_level(&self, profile: &ArrivalProfile, t: f64) -> f64 {
        (0..profile.num_epochs())
            .filter(|&e| profile.epoch(e).1 > t)
            .map(|e| self.energy.get(e).copied().unwrap_or(0.0))
            .sum()
    }
}

/// Everything a solve produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub policy: PowerPolicy,
    pub regime: Regime,
    pub multipliers: Multipliers,
    /// `∫ ½·log₂(1 + P)` in bits.
    pub throughput: f64,
    pub energy_used: f64,
    pub energy_available: f64,
    /// Harvested energy left unused at the deadline.
    pub energy_wasted: bool,
    /// First instant the temperature reaches the ceiling.
    pub saturation_instant: Option<f64>,
    /// Instants where the power jumps.
    pub jump_instants: Vec<f64>,
    /// Maximal intervals with the temperature at the ceiling.
    pub tight_intervals: Vec<(f64, f64)>,
    /// Isolated instants with the temperature at the ceiling.
    pub touch_instants: Vec<f64>,
    /// Epoch ends where the battery is empty.
    pub energy_tight: Vec<f64>,
    pub kkt: KktCertificate,
    pub certified: bool,
    pub notes: Vec<String>,
}

/// Residual below which a KKT certificate is accepted.
pub const CERTIFY_TOL: f64 = 1e-5;

impl SolveReport {
    /// Assembles a report and computes its annotations and certificate.
    pub(crate) fn assemble(
        params: &ThermalParams,
        profile: &ArrivalProfile,
        policy: PowerPolicy,
        regime: Regime,
        multipliers: Multipliers,
        notes: Vec<String>,
    ) -> Self {
        Self::assemble_from(
            params,
            profile,
            policy,
            regime,
            multipliers,
            notes,
            params.t_env,
        )
    }

    /// [`SolveReport::assemble`] for a horizon starting at temperature `t_init`.
    pub(crate) fn assemble_from(
        params: &ThermalParams,
        profile: &ArrivalProfile,
        policy: PowerPolicy,
        regime: Regime,
        multipliers: Multipliers,
        notes: Vec<String>,
        t_init: f64,
    ) -> Self {
        let kkt =
            crate::multi::kkt_certificate_from(&policy, &multipliers, profile, params, t_init);
        let temp = check_temperature(&policy, params, t_init);
        let energy = check_energy_causality(&policy, profile);
        let energy_used = policy.total_energy();
        let energy_available = profile.total_energy();
        let mut saturation_instant = None;
        let first_interval = temp.active_intervals.first().map(|iv| iv.0);
        let first_touch = temp.active_instants.first().copied();
        for cand in [first_interval, first_touch].into_iter().flatten() {
            saturation_instant = Some(saturation_instant.map_or(cand, |s: f64| s.min(cand)));
        }
        let bp = policy.breakpoints();
        let jump_instants = bp[1..bp.len() - 1]
            .iter()
            .copied()
            .filter(|&t| (policy.power_at(t) - policy.power_left(t)).abs() > 1e-6)
            .collect();
        let certified = kkt.max_residual() <= CERTIFY_TOL;
        Self {
            throughput: policy.throughput(),
            energy_wasted: energy_available - energy_used > 1e-6 * energy_available.max(1.0),
            energy_used,
            energy_available,
            saturation_instant,
            jump_instants,
            tight_intervals: temp.active_intervals,
            touch_instants: temp.active_instants,
            energy_tight: energy.active_instants,
            kkt,
            certified,
            policy,
            regime,
            multipliers,
            notes,
        }
    }
}

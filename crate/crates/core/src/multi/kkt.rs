use serde::{Deserialize, Serialize};

use crate::model::{
    check_energy_causality, check_temperature, temperature_at, ArrivalProfile, PowerPolicy,
    ThermalParams,
};
use crate::numerics::simpson_composite;
use crate::report::Multipliers;

/// Uniform evaluation points of the stationarity condition.
const STATIONARITY_POINTS: usize = 4096;

/// Residuals of the optimality conditions of a (policy, multipliers) pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktCertificate {
    /// `max |1/(1+P) − min(1, β(t) + e^{bt}Λ(t))|` over the evaluation grid.
    pub stationarity: f64,
    pub energy_feasibility: f64,
    pub temperature_feasibility: f64,
    /// `max μ_e·slack_e`.
    pub energy_slackness: f64,
    /// Largest `∫ margin dλ` over one density piece or atom, with the margin
    /// `e^{bt}(T_c − T(t))/a` in the units of the integral constraint.
    pub temperature_slackness: f64,
    /// Magnitude of the most negative multiplier.
    pub dual_feasibility: f64,
    /// Complementarity total in bits; equals the duality gap when
    /// stationarity holds.
    pub duality_gap: f64,
}

impl KktCertificate {
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity,
            self.energy_feasibility,
            self.temperature_feasibility,
            self.energy_slackness,
            self.temperature_slackness,
            self.dual_feasibility,
            self.duality_gap,
        ]
        .into_iter()
        .fold(0.0, |acc, v| {
            if v.is_nan() {
                f64::INFINITY
            } else {
                acc.max(v)
            }
        })
    }
}

/// Evaluates every optimality residual for a policy and multipliers from any source.
pub fn kkt_certificate(
    policy: &PowerPolicy,
    multipliers: &Multipliers,
    profile: &ArrivalProfile,
    params: &ThermalParams,
) -> KktCertificate {
    kkt_certificate_from(policy, multipliers, profile, params, params.t_env)
}

/// [`kkt_certificate`] for a horizon starting at temperature `t_init`.
pub fn kkt_certificate_from(
    policy: &PowerPolicy,
    multipliers: &Multipliers,
    profile: &ArrivalProfile,
    params: &ThermalParams,
    t_init: f64,
) -> KktCertificate {
    let b = params.b;
    let d = profile.deadline();
    let lam = &multipliers.temperature;

    let mut points: Vec<f64> = (0..STATIONARITY_POINTS)
        .map(|k| d * (k as f64 + 0.5) / STATIONARITY_POINTS as f64)
        .collect();
    let bp = policy.breakpoints();
    points.extend(bp[..bp.len() - 1].iter().copied());
    let stationarity = points
        .iter()
        .map(|&t| {
            let q = multipliers.energy_level(profile, t) + (b * t).exp() * lam.tail(t, b);
            (1.0 / (1.0 + policy.power_at(t)) - q.min(1.0)).abs()
        })
        .fold(0.0, f64::max);

    let energy = check_energy_causality(policy, profile);
    let temp = check_temperature(policy, params, t_init);

    let mut energy_products = Vec::new();
    for e in 0..profile.num_epochs() {
        let end = profile.epoch(e).1;
        let slack = profile.cumulative_energy(e) - policy.energy_until(end);
        let mu = multipliers.energy.get(e).copied().unwrap_or(0.0);
        energy_products.push((mu * slack).abs());
    }

    let margin = |t: f64| (params.t_crit - temperature_at(policy, params, t_init, t)) / params.a;
    let mut temp_products = Vec::new();
    for piece in &lam.densities {
        // λ(t)·e^{bt}·margin(t) = kappa·margin(t).
        let v = simpson_composite(margin, piece.start, piece.end, 512) * piece.kappa;
        temp_products.push(v.abs());
    }
    for &(t, mass) in &lam.atoms {
        temp_products.push((mass * (b * t).exp() * margin(t)).abs());
    }

    let total: f64 = energy_products.iter().sum::<f64>() + temp_products.iter().sum::<f64>();
    let dual_min = multipliers
        .energy
        .iter()
        .copied()
        .fold(lam.min_weight(), f64::min);
    KktCertificate {
        stationarity,
        energy_feasibility: energy.worst_violation,
        temperature_feasibility: temp.worst_violation,
        energy_slackness: energy_products.into_iter().fold(0.0, f64::max),
        temperature_slackness: temp_products.into_iter().fold(0.0, f64::max),
        dual_feasibility: (-dual_min).max(0.0),
        duality_gap: total / (2.0 * std::f64::consts::LN_2),
    }
}
